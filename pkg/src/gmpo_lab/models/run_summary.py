# src/gmpo_lab/models/run_summary.py
# Résumés d'entraînement et d'ablation (summary.json, comparison_summary.json)

from pydantic import BaseModel, ConfigDict

from gmpo_lab.core.rollout import ClipMode, ObjectiveKind


class RunMetadata(BaseModel):
    """Conventions de calcul enregistrées avec chaque run."""
    advantage_std: str
    advantage_std_floor: float
    kl_estimator: str
    clip_resolution: str
    minibatch_rollouts: int


class RunSummary(BaseModel):
    """
    Résumé d'un entraînement. Aucun horodatage: deux runs identiques
    produisent le même fichier.
    """
    model_config = ConfigDict(ser_json_inf_nan='constants')

    objective: ObjectiveKind
    seed: int
    task: str
    clip_lower_log: float
    clip_upper_log: float
    clip_mode: ClipMode
    total_rounds: int
    total_updates: int
    final_mean_reward: float | None
    greedy_pass_at_1: float
    initial_reward_moving_average: float | None
    final_reward_moving_average: float | None
    mean_envelope_width: float | None
    final_mean_entropy: float | None
    final_kl_ref: float | None
    metadata: RunMetadata


class WinCount(BaseModel):
    """Nombre de graines où `winner` bat `loser` sur un critère."""
    criterion: str
    winner: str
    loser: str
    wins: int
    seeds: int


class AblationSummary(BaseModel):
    """Synthèse d'une ablation multi-graines."""
    cells: list[str]
    seeds: list[int]
    wins: list[WinCount]
