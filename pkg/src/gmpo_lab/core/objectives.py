# src/gmpo_lab/core/objectives.py
# Objectifs de substitution GRPO / GMPO et coefficients exacts de gradient

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from gmpo_lab.core.advantages import sgn
from gmpo_lab.core.constants import ErrorMessages
from gmpo_lab.core.exceptions import (
    InvalidArgumentError, InvalidValueError, ShapeError
)
from gmpo_lab.core.rollout import (
    ClipConfig, ClipMode, ObjectiveKind, Rollout, RolloutGroup
)


@dataclass(frozen=True, eq=False)
class ObjectiveResult:
    """
    Contribution d'un rollout à l'objectif.

    token_scores[t] = c_t tel que dJ/dtheta = sum_t c_t * d log pi(o_t)/dtheta.
    Les tokens clippés et masqués ont un coefficient nul.
    """
    value: float
    token_scores: np.ndarray
    clipped_flags: np.ndarray
    ratio_log_sum: float
    log_ratios: np.ndarray

    @property
    def clipped_count(self) -> int:
        return int(self.clipped_flags.sum())


def _log_ratios(new_logps, rollout: Rollout) -> np.ndarray:
    """d_t = new_logps[t] - old_logps[t], après validation."""
    new = np.asarray(new_logps, dtype=np.float64)
    if new.shape != rollout.tokens.shape:
        raise ShapeError(ErrorMessages.SHAPE_MISMATCH.format(new.shape, rollout.tokens.shape))
    if not np.all(np.isfinite(new)):
        raise InvalidValueError(ErrorMessages.NON_FINITE.format("new_logps"))
    return new - rollout.old_logps


def _check_advantage(advantage: float) -> float:
    if not math.isfinite(advantage):
        raise InvalidValueError(ErrorMessages.NON_FINITE.format(advantage))
    return float(advantage)


def _pessimistic_log_clip(signed: np.ndarray, lower: float, upper: float) -> np.ndarray:
    """min(x, clamp(x, L, U)): seule la borne haute agit en espace signé."""
    return np.minimum(signed, np.clip(signed, lower, upper))


def grpo_rollout_objective(
    new_logps, rollout: Rollout, advantage: float, clip: ClipConfig
) -> ObjectiveResult:
    """
    Objectif GRPO d'un rollout: moyenne arithmétique des termes
    min(rho_t * A, clip(rho_t, e^L, e^U) * A) sur les tokens valides.

    Args:
        new_logps: Log-probabilités sous la politique courante
        rollout: Rollout échantillonné sous l'ancienne politique
        advantage: Avantage normalisé du rollout
        clip: Seuils en espace log (mode token ou none)

    Returns:
        ObjectiveResult
    """
    if clip.mode is ClipMode.SEQUENCE:
        raise InvalidArgumentError(ErrorMessages.WRONG_CLIP_MODE.format(clip.mode.value, "GRPO"))
    advantage = _check_advantage(advantage)
    d = _log_ratios(new_logps, rollout)
    mask = rollout.mask
    n = rollout.valid_count
    lower, upper = clip.bounds

    ratio = np.exp(d)
    clipped_log = np.clip(d, lower, upper)
    unclipped_term = ratio * advantage
    clipped_term = np.exp(clipped_log) * advantage

    clipped = (clipped_term < unclipped_term) & mask
    terms = np.where(clipped, clipped_term, unclipped_term)
    value = float(terms[mask].sum() / n)

    scores = np.where(clipped | ~mask, 0.0, unclipped_term / n)
    post_min_log = np.where(clipped, clipped_log, d)
    return ObjectiveResult(
        value=value,
        token_scores=scores,
        clipped_flags=clipped,
        ratio_log_sum=float(post_min_log[mask].sum()),
        log_ratios=d,
    )


def _gmpo_token_level(
    new_logps, rollout: Rollout, advantage: float, clip: ClipConfig, normalize: bool, name: str
) -> ObjectiveResult:
    if clip.mode is ClipMode.SEQUENCE:
        raise InvalidArgumentError(ErrorMessages.WRONG_CLIP_MODE.format(clip.mode.value, name))
    advantage = _check_advantage(advantage)
    d = _log_ratios(new_logps, rollout)
    mask = rollout.mask
    n = rollout.valid_count
    lower, upper = clip.bounds
    s = sgn(advantage)

    signed = s * d
    log_min = s * _pessimistic_log_clip(signed, lower, upper)
    clipped = (signed > upper) & mask

    log_sum = float(log_min[mask].sum())
    exponent = log_sum / n if normalize else log_sum
    value = advantage * float(np.exp(exponent))

    weight = value / n if normalize else value
    scores = np.where(clipped | ~mask, 0.0, weight)
    return ObjectiveResult(
        value=value,
        token_scores=scores,
        clipped_flags=clipped,
        ratio_log_sum=log_sum,
        log_ratios=d,
    )


def gmpo_rollout_objective(
    new_logps, rollout: Rollout, advantage: float, clip: ClipConfig
) -> ObjectiveResult:
    """
    Objectif GMPO d'un rollout, évalué en espace log.

    m_t = s * min(s * d_t, clamp(s * d_t, L, U)) avec s = sgn(A), puis
    valeur = A * exp(sum_valid(m_t) / |o|). Un token est clippé si s * d_t > U;
    son clamp entre dans la valeur mais son coefficient de gradient est nul.
    """
    return _gmpo_token_level(new_logps, rollout, advantage, clip, True, "GMPO")


def gmpo_nonorm_rollout_objective(
    new_logps, rollout: Rollout, advantage: float, clip: ClipConfig
) -> ObjectiveResult:
    """Comme gmpo_rollout_objective, sans l'exposant 1/|o|."""
    return _gmpo_token_level(new_logps, rollout, advantage, clip, False, "GMPO_NONORM")


def gmpo_seqclip_rollout_objective(
    new_logps, rollout: Rollout, advantage: float, clip: ClipConfig
) -> ObjectiveResult:
    """
    GMPO avec clipping au niveau séquence: le clamp porte sur S = sum_valid(d_t).

    Si la séquence est clippée, tous ses tokens perdent leur gradient.
    """
    if clip.mode is ClipMode.TOKEN:
        raise InvalidArgumentError(
            ErrorMessages.WRONG_CLIP_MODE.format(clip.mode.value, "GMPO_SEQCLIP")
        )
    advantage = _check_advantage(advantage)
    d = _log_ratios(new_logps, rollout)
    mask = rollout.mask
    n = rollout.valid_count
    lower, upper = clip.bounds
    s = sgn(advantage)

    total = float(d[mask].sum())
    signed = s * total
    log_min = s * min(signed, min(max(signed, lower), upper))
    is_clipped = signed > upper
    value = advantage * float(np.exp(log_min / n))

    clipped = mask.copy() if is_clipped else np.zeros_like(mask)
    scores = np.where(clipped | ~mask, 0.0, value / n)
    return ObjectiveResult(
        value=value,
        token_scores=scores,
        clipped_flags=clipped,
        ratio_log_sum=log_min,
        log_ratios=d,
    )


RolloutObjective = Callable[[object, Rollout, float, ClipConfig], ObjectiveResult]

OBJECTIVES: dict[ObjectiveKind, RolloutObjective] = {
    ObjectiveKind.GRPO: grpo_rollout_objective,
    ObjectiveKind.GMPO: gmpo_rollout_objective,
    ObjectiveKind.GMPO_NOCLIP: gmpo_rollout_objective,
    ObjectiveKind.GMPO_SEQCLIP: gmpo_seqclip_rollout_objective,
    ObjectiveKind.GMPO_NONORM: gmpo_nonorm_rollout_objective,
}


def rollout_objective(
    kind: ObjectiveKind, new_logps, rollout: Rollout, advantage: float, clip: ClipConfig
) -> ObjectiveResult:
    """Évalue la variante `kind`, après adaptation du mode de clipping."""
    return OBJECTIVES[kind](new_logps, rollout, advantage, kind.resolve_clip(clip))


@dataclass(frozen=True, eq=False)
class BatchEvaluation:
    """Valeur moyenne d'un batch et résultats par rollout, dans l'ordre du batch."""
    value: float
    results: list[ObjectiveResult]

    @property
    def batch_size(self) -> int:
        return len(self.results)


def evaluate_minibatch(
    items: Sequence[tuple[Rollout, float]],
    new_logps: Sequence[np.ndarray],
    kind: ObjectiveKind,
    clip: ClipConfig,
) -> BatchEvaluation:
    """
    Moyenne de l'objectif sur des paires (rollout, avantage).

    La réduction suit l'ordre du batch. Le gradient de la moyenne vaut
    (1/N) * sum des coefficients de chaque rollout.
    """
    if len(items) == 0:
        raise InvalidArgumentError(ErrorMessages.EMPTY_BATCH)
    if len(new_logps) != len(items):
        raise ShapeError(ErrorMessages.SHAPE_MISMATCH.format(len(new_logps), len(items)))

    results = [
        rollout_objective(kind, logps, rollout, advantage, clip)
        for (rollout, advantage), logps in zip(items, new_logps)
    ]
    value = math.fsum(r.value for r in results) / len(results)
    return BatchEvaluation(value=value, results=results)


def flatten_groups(groups: Sequence[RolloutGroup]) -> list[tuple[Rollout, float]]:
    """Aplatit des groupes en paires (rollout, avantage), groupe par groupe."""
    return [item for group in groups for item in group.items()]


def batch_objective(
    groups: Sequence[RolloutGroup],
    new_logps: Sequence[Sequence[np.ndarray]],
    kind: ObjectiveKind,
    clip: ClipConfig,
) -> float:
    """
    Objectif moyen sur tous les rollouts des groupes (à maximiser).

    Args:
        groups: Groupes de rollouts
        new_logps: Log-probabilités courantes, une liste par groupe
        kind: Variante d'objectif
        clip: Seuils de clipping

    Returns:
        Moyenne des contributions par rollout

    Raises:
        InvalidArgumentError: Si le batch est vide
    """
    if len(groups) == 0:
        raise InvalidArgumentError(ErrorMessages.EMPTY_BATCH)
    if len(new_logps) != len(groups):
        raise ShapeError(ErrorMessages.SHAPE_MISMATCH.format(len(new_logps), len(groups)))

    flat_logps: list[np.ndarray] = []
    for group, group_logps in zip(groups, new_logps):
        if len(group_logps) != group.size:
            raise ShapeError(ErrorMessages.SHAPE_MISMATCH.format(len(group_logps), group.size))
        flat_logps.extend(group_logps)
    return evaluate_minibatch(flatten_groups(groups), flat_logps, kind, clip).value


def gradient_weight_comparison(ratios) -> tuple[np.ndarray, float]:
    """
    Poids de gradient par token: rho_t pour GRPO (à un facteur A/|o| près),
    et la moyenne géométrique (prod rho_t)^(1/|o|) partagée par tous les
    tokens pour GMPO.

    Raises:
        InvalidValueError: Si un ratio est <= 0 ou non fini
    """
    values = np.asarray(ratios, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ShapeError(ErrorMessages.SHAPE_MISMATCH.format(values.shape, "(|o|,)"))
    if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
        raise InvalidValueError("Les ratios d'importance doivent être finis et > 0")
    return values.copy(), math.exp(float(np.log(values).mean()))
