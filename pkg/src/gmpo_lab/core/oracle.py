# src/gmpo_lab/core/oracle.py
# Oracles indépendants: différences finies, objectif en espace linéaire, AM-GM
#
# Ces fonctions ne réutilisent ni les objectifs ni le log-softmax de la
# politique: formules et réductions sont réécrites ici.

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from gmpo_lab.core.advantages import normalize_group
from gmpo_lab.core.constants import (
    AMGM_DEFAULT_INSTANCES, AMGM_EQUALITY_TOLERANCE, AMGM_MAX_LENGTH, AMGM_TOLERANCE,
    FINITE_DIFF_STEP, GRAD_CHECK_DEFAULT_INSTANCES, GRAD_CHECK_DENOM_FLOOR,
    GRAD_CHECK_TOLERANCE, KINK_MARGIN_STEPS, LINEAR_ORACLE_MAX_LENGTH,
    LINEAR_ORACLE_MAX_LOG_RATIO, ErrorMessages
)
from gmpo_lab.core.exceptions import InvalidArgumentError, OracleDomainError
from gmpo_lab.core.objectives import gmpo_rollout_objective, grpo_rollout_objective
from gmpo_lab.core.policy import PolicyParams, context_bucket
from gmpo_lab.core.rollout import ClipConfig, ObjectiveKind, Rollout
from gmpo_lab.core.trainer import minibatch_gradient
from gmpo_lab.core.utils.hashing import derive_rng
from gmpo_lab.core.utils.logging_config import get_logger
from gmpo_lab.models.check_reports import AmgmReport, GradCheckReport

logger = get_logger()

# Seuil absolu au-delà duquel un gradient est considéré non nul
SUPPORT_TOLERANCE = 1e-8


# ============================================================================
# OBJECTIF EN ESPACE LINÉAIRE
# ============================================================================

def linear_space_objective(
    new_logps, rollout: Rollout, advantage: float, kind: ObjectiveKind, clip: ClipConfig
) -> float:
    """
    Évalue l'objectif littéralement: ratios, produits et racine |o|-ième.

    Raises:
        OracleDomainError: Si |o| > 12 ou si un |d_t| dépasse 5
    """
    new = np.asarray(new_logps, dtype=np.float64)
    mask = rollout.mask
    d = [float(x) for x in (new - rollout.old_logps)[mask]]
    n = len(d)
    if n > LINEAR_ORACLE_MAX_LENGTH or any(abs(x) > LINEAR_ORACLE_MAX_LOG_RATIO for x in d):
        raise OracleDomainError(
            ErrorMessages.ORACLE_DOMAIN.format(f"|o|={n}, max|d|={max(abs(x) for x in d):.3g}")
        )

    lower, upper = kind.resolve_clip(clip).bounds
    lo, hi = math.exp(lower), math.exp(upper)
    # Bornes vues depuis un avantage négatif: clip(rho, e^-U, e^-L)
    neg_lo, neg_hi = math.exp(-upper), math.exp(-lower)

    def pessimistic(ratio: float) -> float:
        if advantage > 0.0:
            return min(ratio, min(max(ratio, lo), hi))
        return max(ratio, min(max(ratio, neg_lo), neg_hi))

    ratios = [math.exp(x) for x in d]

    if kind is ObjectiveKind.GRPO:
        total = 0.0
        for ratio in ratios:
            clipped = min(max(ratio, lo), hi)
            total += min(ratio * advantage, clipped * advantage)
        return total / n

    if kind is ObjectiveKind.GMPO_SEQCLIP:
        product = 1.0
        for ratio in ratios:
            product *= ratio
        return advantage * pessimistic(product) ** (1.0 / n)

    product = 1.0
    for ratio in ratios:
        product *= pessimistic(ratio)
    if kind is ObjectiveKind.GMPO_NONORM:
        return advantage * product
    return advantage * product ** (1.0 / n)


# ============================================================================
# DIFFÉRENCES FINIES
# ============================================================================

def _plain_log_probs(table: np.ndarray, buckets: np.ndarray, tokens: np.ndarray) -> np.ndarray:
    """log p = x_token - log(sum exp x), sans soustraction du maximum."""
    rows = table[buckets]
    return rows[np.arange(tokens.size), tokens] - np.log(np.exp(rows).sum(axis=1))


def _buckets(params: PolicyParams, rollout: Rollout) -> np.ndarray:
    tokens = [int(t) for t in rollout.tokens]
    return np.array([
        context_bucket(rollout.prompt_id, tokens[:t], params.context_order, params.num_buckets)
        for t in range(len(tokens))
    ], dtype=np.int64)


def _free_tokens(d: np.ndarray, mask: np.ndarray, advantage: float, kind: ObjectiveKind,
                 clip: ClipConfig) -> np.ndarray:
    """Tokens valides dont le terme dépend encore du log-ratio (hors zone clippée)."""
    lower, upper = kind.resolve_clip(clip).bounds
    if kind is ObjectiveKind.GRPO:
        clipped = d > upper if advantage > 0.0 else d < lower
        return mask & ~clipped
    s = 1.0 if advantage > 0.0 else -1.0
    if kind is ObjectiveKind.GMPO_SEQCLIP:
        return mask.copy() if s * float(d[mask].sum()) <= upper else np.zeros_like(mask)
    return mask & ~(s * d > upper)


def _objective_increment(d: np.ndarray, mask: np.ndarray, advantage: float, kind: ObjectiveKind,
                         clip: ClipConfig, up: np.ndarray, down: np.ndarray) -> float:
    """
    J(d + up) - J(d + down) d'un rollout, écrit avec expm1 pour ne jamais
    soustraire deux valeurs voisines. La zone de clipping est celle de d.
    """
    free = _free_tokens(d, mask, advantage, kind, clip)
    n = int(mask.sum())
    if kind is ObjectiveKind.GRPO:
        gain = np.exp(d[free]) * (np.expm1(up[free]) - np.expm1(down[free]))
        return advantage * math.fsum(gain) / n
    if not free.any():
        return 0.0

    s = 1.0 if advantage > 0.0 else -1.0
    _, upper = kind.resolve_clip(clip).bounds
    clipped_count = int((mask & ~free).sum())
    level = float(d[free].sum()) + (s * upper * clipped_count if clipped_count else 0.0)
    k = 1.0 if kind is ObjectiveKind.GMPO_NONORM else 1.0 / n
    return advantage * math.exp(k * level) * (
        math.expm1(k * float(up[free].sum())) - math.expm1(k * float(down[free].sum()))
    )


def finite_diff_objective_grad(
    params: PolicyParams,
    items: Sequence[tuple[Rollout, float]],
    kind: ObjectiveKind,
    clip: ClipConfig,
    h: float = FINITE_DIFF_STEP,
) -> np.ndarray:
    """
    Différences centrées (J(theta + h e) - J(theta - h e)) / 2h sur chaque
    logit d'un bucket visité par le minibatch. Les autres entrées restent à 0.

    Le décalage d'un log-softmax quand le logit (b, v) bouge de h est exact:
    h * [token = v] - log1p(p_v * expm1(h)). Les pas h et h/2 sont combinés
    par extrapolation de Richardson.

    Returns:
        Tableau H x V
    """
    if h <= 0.0:
        raise InvalidArgumentError(f"Le pas h doit être > 0 (reçu {h})")
    if len(items) == 0:
        raise InvalidArgumentError(ErrorMessages.EMPTY_BATCH)

    table = params.logit_table
    exp_table = np.exp(table)
    probs = exp_table / exp_table.sum(axis=1, keepdims=True)
    buckets = [_buckets(params, rollout) for rollout, _ in items]
    log_ratios = [
        _plain_log_probs(table, b, rollout.tokens) - rollout.old_logps
        for b, (rollout, _) in zip(buckets, items)
    ]
    rows = sorted({int(x) for b in buckets for x in b})

    def central(step: float) -> np.ndarray:
        gradient = np.zeros_like(table)
        for row in rows:
            for col in range(table.shape[1]):
                p = float(probs[row, col])
                shift_up = -math.log1p(p * math.expm1(step))
                shift_down = -math.log1p(p * math.expm1(-step))
                total = 0.0
                for b, d, (rollout, advantage) in zip(buckets, log_ratios, items):
                    in_row = b == row
                    if not in_row.any():
                        continue
                    hit = in_row & (rollout.tokens == col)
                    up = np.where(in_row, shift_up, 0.0) + np.where(hit, step, 0.0)
                    down = np.where(in_row, shift_down, 0.0) - np.where(hit, step, 0.0)
                    total += _objective_increment(d, rollout.mask, advantage, kind, clip, up, down)
                gradient[row, col] = total / len(items) / (2.0 * step)
        return gradient

    return (4.0 * central(h / 2.0) - central(h)) / 3.0


@dataclass(eq=False)
class GradInstance:
    """Minibatch figé pour la vérification des gradients."""
    params: PolicyParams
    items: list[tuple[Rollout, float]]
    kind: ObjectiveKind
    clip: ClipConfig
    description: dict[str, Any]


def _kink_points(clip: ClipConfig) -> list[float]:
    lower, upper = clip.bounds
    return [x for x in (lower, upper, -lower, -upper) if math.isfinite(x)]


def _move_off_kinks(old: np.ndarray, new: np.ndarray, mask: np.ndarray, kind: ObjectiveKind,
                    clip: ClipConfig, margin: float) -> np.ndarray:
    """
    Décale old_logps vers le bas tant qu'un log-ratio (ou leur somme en
    mode séquence) est à moins de `margin` d'un coude de clipping.
    """
    kinks = _kink_points(kind.resolve_clip(clip))
    old = old.copy()
    first_valid = int(np.argmax(mask))
    for _ in range(20):
        d = new - old
        if kind is ObjectiveKind.GMPO_SEQCLIP:
            total = float(d[mask].sum())
            if not any(abs(total - k) < margin for k in kinks):
                break
            old[first_valid] -= 3.0 * margin
            continue
        near = [t for t in range(d.size) if mask[t] and any(abs(d[t] - k) < margin for k in kinks)]
        if not near:
            break
        for t in near:
            old[t] -= 3.0 * margin
    return old


def random_grad_instance(seed: int, index: int, h: float = FINITE_DIFF_STEP) -> GradInstance:
    """
    Instance aléatoire reproductible: V <= 5, |o| <= 6, petit H, clipping
    actif la plupart du temps, coudes évités à 10h près.
    """
    rng = derive_rng(seed, index)
    kinds = list(ObjectiveKind)
    kind = kinds[index % len(kinds)]

    vocab = int(rng.integers(2, 6))
    num_buckets = int(rng.integers(3, 9))
    order = int(rng.integers(0, 3))
    params = PolicyParams(rng.normal(0.0, 1.0, size=(num_buckets, vocab)), order, seed)

    if kind is ObjectiveKind.GRPO:
        eps = float(rng.choice([0.1, 0.2]))
        clip = ClipConfig.from_linear(1.0 - eps, 1.0 + eps)
    elif rng.random() < 0.8:
        clip = ClipConfig.symmetric(float(rng.choice([0.1, 0.2, 0.4])))
    else:
        clip = ClipConfig.disabled()

    group_size = int(rng.integers(2, 4))
    prompt_id = int(rng.integers(0, 1000))
    rewards = np.zeros(group_size)
    rewards[0] = 1.0
    rewards[2:] = rng.integers(0, 2, size=group_size - 2)
    rewards = rng.permutation(rewards)
    advantages = normalize_group(rewards)

    margin = KINK_MARGIN_STEPS * h
    items: list[tuple[Rollout, float]] = []
    for advantage in advantages:
        length = int(rng.integers(1, 7))
        tokens = rng.integers(0, vocab, size=length)
        mask = np.ones(length, dtype=bool)
        if length >= 2 and rng.random() < 0.2:
            mask[int(rng.integers(0, length))] = False
        rollout_stub = Rollout(prompt_id, tokens, np.full(length, -1.0), mask)
        new = _plain_log_probs(params.logit_table, _buckets(params, rollout_stub), tokens)
        old = np.minimum(new - rng.normal(0.0, 0.4, size=length), -1e-6)
        old = _move_off_kinks(old, new, mask, kind, clip, margin)
        items.append((Rollout(prompt_id, tokens, old, mask), float(advantage)))

    description = {
        'seed': seed,
        'index': index,
        'objective': kind.value,
        'num_buckets': num_buckets,
        'vocab_size': vocab,
        'context_order': order,
        'clip': {'lower_log': clip.lower_log, 'upper_log': clip.upper_log, 'mode': clip.mode.value},
        'rollouts': [{**r.to_dict(), 'advantage': a} for r, a in items],
    }
    return GradInstance(params, items, kind, clip, description)


def grad_check(
    instances: int = GRAD_CHECK_DEFAULT_INSTANCES,
    seed: int = 0,
    h: float = FINITE_DIFF_STEP,
    tolerance: float = GRAD_CHECK_TOLERANCE,
) -> GradCheckReport:
    """
    Compare le gradient analytique du trainer aux différences finies.

    L'erreur relative d'une entrée vaut |a - n| / max(|a|, |n|, 1e-12).
    Une entrée non nulle d'un côté et nulle de l'autre, ou un gradient
    analytique hors des buckets visités, compte comme incohérence de support.

    Args:
        instances: Nombre d'instances (>= 1)
        seed: Graine de reproduction
        h: Pas des différences centrées
        tolerance: Erreur relative maximale admise

    Returns:
        GradCheckReport
    """
    if instances < 1:
        raise InvalidArgumentError(f"Le nombre d'instances doit être >= 1 (reçu {instances})")

    max_rel = 0.0
    worst_param: tuple[int, int] | None = None
    worst_kind: str | None = None
    worst_instance: dict[str, Any] | None = None
    clipped_instances = 0
    mismatches = 0

    for index in range(instances):
        inst = random_grad_instance(seed, index, h)
        analytic_mg = minibatch_gradient(inst.params, inst.items, inst.kind, inst.clip)
        analytic = analytic_mg.gradient
        numeric = finite_diff_objective_grad(inst.params, inst.items, inst.kind, inst.clip, h)
        if any(res.clipped_count > 0 for res in analytic_mg.evaluation.results):
            clipped_instances += 1

        touched = np.zeros(analytic.shape[0], dtype=bool)
        for rollout, _ in inst.items:
            touched[_buckets(inst.params, rollout)] = True
        outside = np.abs(analytic[~touched]) > 0.0
        mismatches += int(outside.sum())

        a = analytic[touched]
        n = numeric[touched]
        support = ((a == 0.0) & (np.abs(n) > SUPPORT_TOLERANCE)) | ((n == 0.0) & (np.abs(a) > SUPPORT_TOLERANCE))
        mismatches += int(support.sum())

        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), GRAD_CHECK_DENOM_FLOOR)
        rel = np.where(touched[:, None], np.abs(analytic - numeric) / denom, 0.0)
        local = float(rel.max())
        if local > max_rel or worst_instance is None:
            max_rel = max(max_rel, local)
            row, col = np.unravel_index(int(np.argmax(rel)), rel.shape)
            worst_param = (int(row), int(col))
            worst_kind = inst.kind.value
            worst_instance = inst.description

    passed = max_rel < tolerance and mismatches == 0
    logger.info(
        f"grad-check: {instances} instances, erreur relative max {max_rel:.3e}, "
        f"{clipped_instances} avec clipping actif, {mismatches} incohérences de support"
    )
    return GradCheckReport(
        instances=instances,
        seed=seed,
        tolerance=tolerance,
        step=h,
        max_rel_error=max_rel,
        worst_parameter=worst_param,
        worst_objective=worst_kind,
        worst_instance=worst_instance,
        clipped_instances=clipped_instances,
        support_mismatches=mismatches,
        passed=passed,
    )


# ============================================================================
# AM-GM
# ============================================================================

def amgm_sweep(instances: int = AMGM_DEFAULT_INSTANCES, seed: int = 0) -> AmgmReport:
    """
    Vérifie |J_GMPO| <= |J_GRPO| + 1e-12 sans clipping, sur des instances
    |o| dans [1, 50], log-ratios ~ N(0, 1), avantage non nul; et l'égalité
    à 1e-9 près quand tous les ratios sont égaux.
    """
    if instances < 1:
        raise InvalidArgumentError(f"Le nombre d'instances doit être >= 1 (reçu {instances})")

    no_clip = ClipConfig.disabled()
    violations = 0
    worst_margin = math.inf
    max_equality_error = 0.0
    worst_instance: dict[str, Any] | None = None

    for index in range(instances):
        rng = derive_rng(seed, index)
        length = int(rng.integers(1, AMGM_MAX_LENGTH + 1))
        log_ratios = rng.normal(0.0, 1.0, size=length)
        advantage = 0.0
        while advantage == 0.0:
            advantage = float(rng.normal())

        rollout = Rollout(0, np.zeros(length, dtype=np.int64), np.zeros(length))
        grpo = grpo_rollout_objective(log_ratios, rollout, advantage, no_clip).value
        gmpo = gmpo_rollout_objective(log_ratios, rollout, advantage, no_clip).value
        margin = abs(grpo) - abs(gmpo)
        if margin < -AMGM_TOLERANCE:
            violations += 1
        if margin < worst_margin:
            worst_margin = margin
            worst_instance = {
                'seed': seed,
                'index': index,
                'length': length,
                'advantage': advantage,
                'log_ratios': log_ratios.tolist(),
                'grpo': grpo,
                'gmpo': gmpo,
            }

        equal = np.full(length, log_ratios[0])
        eq_grpo = grpo_rollout_objective(equal, rollout, advantage, no_clip).value
        eq_gmpo = gmpo_rollout_objective(equal, rollout, advantage, no_clip).value
        error = abs(abs(eq_grpo) - abs(eq_gmpo))
        max_equality_error = max(max_equality_error, error)
        if error > AMGM_EQUALITY_TOLERANCE:
            violations += 1

    passed = violations == 0
    logger.info(
        f"amgm-check: {instances} instances, {violations} violations, marge minimale {worst_margin:.3e}"
    )
    return AmgmReport(
        instances=instances,
        seed=seed,
        tolerance=AMGM_TOLERANCE,
        violations=violations,
        worst_margin=worst_margin,
        max_equality_error=max_equality_error,
        worst_instance=worst_instance,
        passed=passed,
    )
