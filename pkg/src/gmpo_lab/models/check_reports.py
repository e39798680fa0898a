# src/gmpo_lab/models/check_reports.py
# Rapports des oracles (grad-check, amgm-check)

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field


class GradCheckReport(BaseModel):
    """Résultat d'un balayage de différences finies."""
    model_config = ConfigDict(ser_json_inf_nan='constants')

    instances: int
    seed: int
    tolerance: float
    step: float
    max_rel_error: float
    worst_parameter: tuple[int, int] | None
    worst_objective: str | None
    worst_instance: dict[str, Any] | None
    clipped_instances: int
    support_mismatches: int
    passed: bool


class AmgmReport(BaseModel):
    """Résultat de la vérification |J_GMPO| <= |J_GRPO|."""
    model_config = ConfigDict(ser_json_inf_nan='constants')

    instances: int
    seed: int
    tolerance: float
    violations: int
    worst_margin: float
    max_equality_error: float
    worst_instance: dict[str, Any] | None
    passed: bool


class CheckConfig(BaseModel):
    """Paramètres résolus d'un grad-check ou d'un amgm-check."""
    model_config = ConfigDict(extra='forbid')

    command: Literal["grad-check", "amgm-check"]
    instances: int = Field(ge=1)
    seed: int = Field(0, ge=0)
    tolerance: float
    step: float | None = None


class ReportConfig(BaseModel):
    """Paramètres résolus d'un report."""
    model_config = ConfigDict(extra='forbid')

    inputs: list[str]
    metric: str
    smooth: int = Field(1, ge=1)
