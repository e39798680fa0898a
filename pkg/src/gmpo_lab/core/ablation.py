# src/gmpo_lab/core/ablation.py
# Cellules d'ablation (objectifs, seuils) et tableau comparatif

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import pandas as pd

from gmpo_lab.core.constants import GRPO_CLIP_HIGHER_UPPER, GRPO_DEFAULT_EPSILON, THRESHOLD_SWEEP
from gmpo_lab.core.rollout import ClipConfig, ObjectiveKind
from gmpo_lab.models.experiment_config import ClipSettings, TrainConfig
from gmpo_lab.models.run_summary import RunSummary, WinCount

CLIP_HIGHER_CELL = "GRPO_CLIP_HIGHER"

# Colonnes de comparison.csv
CELL_COLUMN = "cell"
SEED_COLUMN = "seed"
COMPARISON_METRICS = [
    "mean_envelope_width",
    "final_mean_entropy",
    "final_kl_ref",
    "final_reward_moving_average",
    "final_mean_reward",
    "greedy_pass_at_1",
]


@dataclass(frozen=True)
class AblationCell:
    """
    Une configuration de l'ablation. alias_of désigne une cellule identique
    dont le run est recopié au lieu d'être relancé.
    """
    name: str
    config: TrainConfig
    alias_of: str | None = None


def threshold_cell_name(log_epsilon: float) -> str:
    return "GMPO_epsinf" if math.isinf(log_epsilon) else f"GMPO_eps{log_epsilon:g}"


def _with_clip(base: TrainConfig, kind: ObjectiveKind, clip: ClipConfig | None) -> TrainConfig:
    settings = ClipSettings.from_clip(clip) if clip is not None else None
    return base.model_copy(update={'objective': kind, 'clip': settings})


def ablation_cells(
    base: TrainConfig,
    with_clip_higher: bool = False,
    with_thresholds: bool = True,
) -> list[AblationCell]:
    """
    Construit les cellules: les cinq objectifs (seuils par défaut), GRPO
    clip-higher en option, puis le balayage des seuils de GMPO.

    La cellule du balayage identique à GMPO par défaut (eps = 0.4) est un
    alias de la cellule GMPO.

    Args:
        base: Configuration commune (tâche, politique, graine de collecte)
        with_clip_higher: Ajoute GRPO avec bornes linéaires (0.8, 1.28)
        with_thresholds: Ajoute le balayage des seuils

    Returns:
        Cellules dans l'ordre d'écriture du tableau comparatif
    """
    ordered = sorted(ObjectiveKind, key=lambda k: k.ablation_row)
    cells = [AblationCell(kind.value, _with_clip(base, kind, None)) for kind in ordered]

    if with_clip_higher:
        clip = ClipConfig.from_linear(1.0 - GRPO_DEFAULT_EPSILON, GRPO_CLIP_HIGHER_UPPER)
        cells.append(AblationCell(CLIP_HIGHER_CELL, _with_clip(base, ObjectiveKind.GRPO, clip)))

    if with_thresholds:
        gmpo_default = ObjectiveKind.GMPO.default_clip()
        for eps in THRESHOLD_SWEEP:
            clip = ClipConfig.disabled() if math.isinf(eps) else ClipConfig.symmetric(eps)
            config = _with_clip(base, ObjectiveKind.GMPO, clip)
            alias = ObjectiveKind.GMPO.value if clip == gmpo_default else None
            cells.append(AblationCell(threshold_cell_name(eps), config, alias))
    return cells


def comparison_frame(results: Sequence[tuple[str, RunSummary]]) -> pd.DataFrame:
    """
    Tableau (cellule, graine) -> métriques du résumé, trié dans l'ordre reçu
    des cellules puis par graine.
    """
    rows = []
    for cell, summary in results:
        row = {
            CELL_COLUMN: cell,
            SEED_COLUMN: summary.seed,
            "objective": summary.objective.value,
            "clip_lower_log": summary.clip_lower_log,
            "clip_upper_log": summary.clip_upper_log,
            "clip_mode": summary.clip_mode.value,
        }
        row.update({metric: getattr(summary, metric) for metric in COMPARISON_METRICS})
        rows.append(row)
    df = pd.DataFrame(rows)
    if df.empty:
        return df
    order = {cell: i for i, cell in enumerate(dict.fromkeys(df[CELL_COLUMN]))}
    df = df.sort_values(by=[CELL_COLUMN, SEED_COLUMN], key=lambda col: col.map(order) if col.name == CELL_COLUMN else col)
    return df.reset_index(drop=True)


# (critère, métrique, gagnant, perdant, comparaison gagnant/perdant)
_WIN_CRITERIA: list[tuple[str, str, str, str, Callable[[float, float], bool]]] = [
    ("envelope_narrower", "mean_envelope_width", "GMPO", "GRPO", lambda w, l: w < l),
    ("entropy_higher_or_equal", "final_mean_entropy", "GMPO", "GRPO", lambda w, l: w >= l),
    ("kl_ref_lower_or_equal", "final_kl_ref", "GMPO", "GRPO", lambda w, l: w <= l),
    ("reward_higher_or_equal", "final_reward_moving_average", "GMPO", "GRPO", lambda w, l: w >= l),
    ("envelope_narrower", "mean_envelope_width", "GMPO", "GMPO_SEQCLIP", lambda w, l: w < l),
]


def win_counts(df: pd.DataFrame) -> list[WinCount]:
    """
    Compte, graine par graine, les victoires de GMPO sur GRPO et du clipping
    par token sur le clipping de séquence. Une valeur manquante ne compte pas.
    """
    wins: list[WinCount] = []
    if df.empty:
        return wins
    for criterion, metric, winner, loser, beats in _WIN_CRITERIA:
        left = df[df[CELL_COLUMN] == winner].set_index(SEED_COLUMN)[metric]
        right = df[df[CELL_COLUMN] == loser].set_index(SEED_COLUMN)[metric]
        shared = left.index.intersection(right.index)
        count = sum(
            1 for seed in shared
            if pd.notna(left[seed]) and pd.notna(right[seed]) and beats(float(left[seed]), float(right[seed]))
        )
        wins.append(WinCount(criterion=criterion, winner=winner, loser=loser, wins=count, seeds=len(shared)))
    return wins
