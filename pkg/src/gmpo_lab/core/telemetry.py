# src/gmpo_lab/core/telemetry.py
# Diagnostics par mise à jour et sérialisation CSV

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from gmpo_lab.core.constants import (
    ErrorMessages, TELEMETRY_COLUMNS, TELEMETRY_INT_COLUMNS
)
from gmpo_lab.core.exceptions import (
    InvalidArgumentError, MissingTelemetryError, OutputWriteError, ShapeError
)
from gmpo_lab.core.policy import Policy, rollout_buckets, token_log_probs
from gmpo_lab.core.rollout import Rollout
from gmpo_lab.core.utils.logging_config import get_logger

logger = get_logger()


@dataclass(frozen=True)
class StepTelemetry:
    """Une ligne du CSV: diagnostics d'une mise à jour interne."""
    round: int
    update: int
    ratio_log_min: float
    ratio_log_max: float
    mean_entropy: float
    kl_ref: float
    kl_old: float
    mean_reward: float
    clip_fraction: float
    objective_value: float

    def __post_init__(self) -> None:
        if self.ratio_log_min > self.ratio_log_max:
            raise InvalidArgumentError("ratio_log_min doit être <= ratio_log_max")
        if not 0.0 <= self.clip_fraction <= 1.0:
            raise InvalidArgumentError(f"clip_fraction hors de [0, 1]: {self.clip_fraction}")
        if not 0.0 <= self.mean_reward <= 1.0:
            raise InvalidArgumentError(f"mean_reward hors de [0, 1]: {self.mean_reward}")
        if self.mean_entropy < 0.0:
            raise InvalidArgumentError(f"mean_entropy négative: {self.mean_entropy}")

    @property
    def envelope_width(self) -> float:
        return self.ratio_log_max - self.ratio_log_min


def ratio_envelope(new_logps: Sequence[np.ndarray], rollouts: Sequence[Rollout]) -> tuple[float, float]:
    """
    Extrêmes des log-ratios bruts (avant clipping) sur les tokens valides.

    Raises:
        InvalidArgumentError: Si le minibatch est vide
    """
    if len(rollouts) == 0:
        raise InvalidArgumentError(ErrorMessages.EMPTY_BATCH)
    if len(new_logps) != len(rollouts):
        raise ShapeError(ErrorMessages.SHAPE_MISMATCH.format(len(new_logps), len(rollouts)))

    valid = np.concatenate([
        (np.asarray(new, dtype=np.float64) - r.old_logps)[r.mask]
        for new, r in zip(new_logps, rollouts)
    ])
    return float(valid.min()), float(valid.max())


def kl_estimate(current: Policy, reference: Policy, rollouts: Sequence[Rollout]) -> float:
    """
    Estimateur on-sample de D_KL(pi_theta || pi_ref): moyenne sur les tokens
    valides de log pi_theta - log pi_ref. Peut être légèrement négatif.
    """
    diffs = []
    for rollout in rollouts:
        buckets = rollout_buckets(current, rollout)
        delta = token_log_probs(current, buckets, rollout.tokens) - token_log_probs(
            reference, buckets, rollout.tokens
        )
        diffs.append(delta[rollout.mask])
    if not diffs:
        return 0.0
    return float(np.concatenate(diffs).mean())


# ============================================================================
# CSV
# ============================================================================

def telemetry_frame(records: Sequence[StepTelemetry]) -> pd.DataFrame:
    """DataFrame dans l'ordre documenté des colonnes."""
    df = pd.DataFrame([asdict(r) for r in records], columns=TELEMETRY_COLUMNS)
    for col in TELEMETRY_INT_COLUMNS:
        df[col] = df[col].astype('int64')
    return df


def write_frame(df: pd.DataFrame, path: Path) -> Path:
    """Écriture CSV déterministe: repr la plus courte, fin de ligne '\\n'."""
    try:
        df.to_csv(path, index=False, lineterminator='\n')
    except OSError as e:
        raise OutputWriteError(ErrorMessages.IO_FAILURE.format(path, e)) from e
    return path


def write_csv(records: Sequence[StepTelemetry], path: Path) -> Path:
    """
    Écrit la série de télémétrie.

    Args:
        records: Lignes dans l'ordre d'émission
        path: Fichier de destination

    Returns:
        Chemin écrit

    Raises:
        OutputWriteError: En cas d'échec d'écriture (message avec le chemin)
    """
    write_frame(telemetry_frame(records), path)
    logger.debug(f"Télémétrie écrite: {path} ({len(records)} lignes)")
    return path


def read_csv(path: Path) -> pd.DataFrame:
    """Relit un CSV de télémétrie sans perte de précision."""
    if not path.is_file():
        raise MissingTelemetryError(ErrorMessages.NO_TELEMETRY.format(path))
    return pd.read_csv(path, float_precision='round_trip')


def records_from_frame(df: pd.DataFrame) -> list[StepTelemetry]:
    return [
        StepTelemetry(**{col: row[col] for col in TELEMETRY_COLUMNS})
        for row in df[TELEMETRY_COLUMNS].to_dict(orient='records')
    ]


def moving_average(values: Sequence[float] | pd.Series, window: int) -> pd.Series:
    """
    Moyenne mobile arrière: chaque point est la moyenne des `window` dernières
    valeurs (préfixe plus court au début). window = 1 rend la série intacte.
    """
    if window < 1:
        raise InvalidArgumentError(f"La fenêtre doit être >= 1 (reçu {window})")
    series = pd.Series(values, dtype='float64').reset_index(drop=True)
    if window == 1:
        return series.copy()
    return series.rolling(window=window, min_periods=1).mean()
