# src/gmpo_lab/core/trainer.py
# Boucle d'entraînement: collecte groupée, mises à jour internes, synchronisation

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from gmpo_lab.core.constants import (
    ADVANTAGE_STD_FLOOR, ADVANTAGE_STD_MODE, KL_ESTIMATOR_DESCRIPTION,
    REWARD_MOVING_AVERAGE_WINDOW, ErrorMessages
)
from gmpo_lab.core.exceptions import ConfigError, NonFiniteGradientError
from gmpo_lab.core.objectives import BatchEvaluation, evaluate_minibatch, flatten_groups
from gmpo_lab.core.policy import (
    Policy, PolicyParams, PolicySnapshot, accumulate_scores, apply_gradient,
    entropy_rows, rollout_buckets, sample_rollout, token_log_probs
)
from gmpo_lab.core.rollout import ClipConfig, ObjectiveKind, Rollout, RolloutGroup
from gmpo_lab.core.tasks import Task, build_task
from gmpo_lab.core.telemetry import StepTelemetry, kl_estimate, moving_average, ratio_envelope
from gmpo_lab.core.utils.hashing import derive_rng
from gmpo_lab.core.utils.logging_config import get_logger, get_run_logger
from gmpo_lab.models.experiment_config import TrainConfig
from gmpo_lab.models.run_summary import RunMetadata, RunSummary

logger = get_logger()
run_logger = get_run_logger()

# Flux aléatoire du mélange des minibatchs, distinct des flux par prompt
SHUFFLE_STREAM = 1_000_003


# ============================================================================
# COLLECTE
# ============================================================================

def round_prompts(task: Task, prompts_per_round: int, round_index: int) -> list[int]:
    """Prompts du round, parcourus cycliquement: slot j -> (round * P + j) mod n."""
    prompts = task.prompt_ids
    if not prompts:
        raise ConfigError(ErrorMessages.EMPTY_PROMPT_SET)
    offset = round_index * prompts_per_round
    return [prompts[(offset + j) % len(prompts)] for j in range(prompts_per_round)]


def collect_round(
    old_snapshot: PolicySnapshot,
    task: Task,
    config: TrainConfig,
    round_index: int,
) -> list[RolloutGroup]:
    """
    Échantillonne G rollouts par prompt depuis pi_theta_old.

    Chaque slot de prompt a son propre flux derive_rng(seed, round, slot):
    l'ordre de collecte ne change pas les rollouts.

    Args:
        old_snapshot: Politique figée du round
        task: Tâche vérifiant les sorties
        config: Configuration d'entraînement
        round_index: Indice du round

    Returns:
        Groupes dans l'ordre des slots

    Raises:
        ConfigError: Si la tâche n'a aucun prompt
    """
    groups = []
    for slot, prompt_id in enumerate(round_prompts(task, config.prompts_per_round, round_index)):
        rng = derive_rng(config.seed, round_index, slot)
        rollouts = [
            sample_rollout(old_snapshot, prompt_id, task.max_len, config.temperature, rng, task.eos_token)
            for _ in range(config.group_size)
        ]
        rewards = [task.verify(prompt_id, r.tokens) for r in rollouts]
        groups.append(RolloutGroup.from_rewards(rollouts, rewards))
    return groups


def partition_minibatches(
    items: Sequence[tuple[Rollout, float]], inner_updates: int, rng: np.random.Generator
) -> list[list[tuple[Rollout, float]]]:
    """Mélange une fois puis découpe en inner_updates blocs contigus (une passe exacte)."""
    order = rng.permutation(len(items))
    return [[items[i] for i in part] for part in np.array_split(order, inner_updates)]


# ============================================================================
# GRADIENT
# ============================================================================

@dataclass(eq=False)
class MinibatchGradient:
    """Gradient exact d'un minibatch et les quantités qui ont servi à le calculer."""
    gradient: np.ndarray
    evaluation: BatchEvaluation
    buckets: list[np.ndarray]
    new_logps: list[np.ndarray]


def minibatch_gradient(
    params: Policy,
    items: Sequence[tuple[Rollout, float]],
    kind: ObjectiveKind,
    clip: ClipConfig,
) -> MinibatchGradient:
    """
    Gradient de l'objectif moyen: (1/N) sum_rollouts sum_t c_t * score(bucket_t, token_t).
    """
    buckets = [rollout_buckets(params, rollout) for rollout, _ in items]
    new_logps = [
        token_log_probs(params, b, rollout.tokens) for b, (rollout, _) in zip(buckets, items)
    ]
    evaluation = evaluate_minibatch(items, new_logps, kind, clip)

    gradient = np.zeros_like(params.logit_table)
    scale = 1.0 / len(items)
    for b, (rollout, _), result in zip(buckets, items, evaluation.results):
        accumulate_scores(params, b, rollout.tokens, result.token_scores * scale, gradient)
    return MinibatchGradient(gradient, evaluation, buckets, new_logps)


def _abort_dump(
    mg: MinibatchGradient,
    items: Sequence[tuple[Rollout, float]],
    round_index: int,
    update_index: int,
    kind: ObjectiveKind,
    clip: ClipConfig,
) -> dict[str, Any]:
    offending = 0
    for i, result in enumerate(mg.evaluation.results):
        if not np.all(np.isfinite(result.token_scores)) or not np.isfinite(result.value):
            offending = i
            break
    rollout, advantage = items[offending]
    return {
        'round': round_index,
        'update': update_index,
        'objective': kind.value,
        'clip': {'lower_log': clip.lower_log, 'upper_log': clip.upper_log, 'mode': clip.mode.value},
        'rollout_index': offending,
        'rollout': rollout.to_dict(),
        'advantage': advantage,
        'new_logps': mg.new_logps[offending].tolist(),
        'token_scores': mg.evaluation.results[offending].token_scores.tolist(),
    }


def inner_update(
    params: PolicyParams,
    items: Sequence[tuple[Rollout, float]],
    kind: ObjectiveKind,
    clip: ClipConfig,
    step_size: float,
    *,
    reference: Policy,
    round_index: int = 0,
    update_index: int = 0,
    mean_reward: float = 0.0,
    momentum: float = 0.0,
) -> StepTelemetry:
    """
    Une mise à jour interne: log-probabilités courantes, objectif, gradient
    exact, pas d'ascension. La télémétrie décrit l'état avant le pas.

    Raises:
        NonFiniteGradientError: Gradient non fini, avec un dump du rollout fautif
    """
    mg = minibatch_gradient(params, items, kind, clip)
    if not np.all(np.isfinite(mg.gradient)):
        dump = _abort_dump(mg, items, round_index, update_index, kind, clip)
        logger.error(f"Gradient non fini: round {round_index}, update {update_index}, dump={dump}")
        raise NonFiniteGradientError(
            ErrorMessages.NON_FINITE_GRADIENT.format(round_index, update_index), dump
        )

    rollouts = [r for r, _ in items]
    log_ratios = [(new - r.old_logps)[r.mask] for new, r in zip(mg.new_logps, rollouts)]
    all_ratios = np.concatenate(log_ratios)
    ratio_min, ratio_max = ratio_envelope(mg.new_logps, rollouts)
    clipped = sum(res.clipped_count for res in mg.evaluation.results)
    entropies = np.concatenate([
        entropy_rows(params.logit_table[b])[r.mask] for b, r in zip(mg.buckets, rollouts)
    ])

    record = StepTelemetry(
        round=round_index,
        update=update_index,
        ratio_log_min=ratio_min,
        ratio_log_max=ratio_max,
        mean_entropy=float(entropies.mean()),
        kl_ref=kl_estimate(params, reference, rollouts),
        kl_old=float(all_ratios.mean()),
        mean_reward=mean_reward,
        clip_fraction=clipped / all_ratios.size,
        objective_value=mg.evaluation.value,
    )
    logger.debug(
        f"Round {round_index} update {update_index}: J={record.objective_value:.6g}, "
        f"enveloppe=[{record.ratio_log_min:.4g}, {record.ratio_log_max:.4g}], "
        f"clip={record.clip_fraction:.3f}"
    )

    apply_gradient(params, mg.gradient, step_size, momentum)
    return record


# ============================================================================
# ÉVALUATION
# ============================================================================

def greedy_pass_at_1(policy: Policy, task: Task) -> float:
    """Fraction des prompts résolus par un seul décodage glouton."""
    prompts = task.prompt_ids
    if not prompts:
        raise ConfigError(ErrorMessages.EMPTY_PROMPT_SET)
    rng = derive_rng(0)
    solved = 0
    for prompt_id in prompts:
        rollout = sample_rollout(policy, prompt_id, task.max_len, 0.0, rng, task.eos_token)
        solved += task.verify(prompt_id, rollout.tokens)
    return solved / len(prompts)


# ============================================================================
# ENTRAÎNEMENT
# ============================================================================

@dataclass(eq=False)
class TrainingResult:
    params: PolicyParams
    telemetry: list[StepTelemetry]
    summary: RunSummary


@dataclass(eq=False)
class Trainer:
    """
    État d'un entraînement. pi_ref est la politique initiale, pi_theta_old
    est resynchronisée en fin de round uniquement.

    La télémétrie reste accessible après une interruption.
    """
    config: TrainConfig
    task: Task = field(init=False)
    clip: ClipConfig = field(init=False)
    params: PolicyParams = field(init=False)
    reference: PolicySnapshot = field(init=False)
    old: PolicySnapshot = field(init=False)
    telemetry: list[StepTelemetry] = field(init=False, default_factory=list)
    round_rewards: list[float] = field(init=False, default_factory=list)

    def __post_init__(self) -> None:
        self.task = build_task(self.config.task)
        if not self.task.prompt_ids:
            raise ConfigError(ErrorMessages.EMPTY_PROMPT_SET)
        self.clip = self.config.resolved_clip()
        policy_cfg = self.config.policy
        self.params = PolicyParams.initial(
            vocab_size=self.task.vocab_size,
            num_buckets=policy_cfg.num_buckets,
            context_order=policy_cfg.context_order,
            seed=self.config.seed,
            init_scale=policy_cfg.init_scale,
        )
        self.reference = self.params.snapshot()
        self.old = self.reference

    def run_round(self, round_index: int) -> None:
        """collect_round, puis epochs x inner_updates mises à jour, puis synchronisation."""
        config = self.config
        groups = collect_round(self.old, self.task, config, round_index)

        rewards = np.concatenate([g.rewards for g in groups])
        mean_reward = float(rewards.mean())
        self.round_rewards.append(mean_reward)
        if all(np.all(g.advantages == 0.0) for g in groups):
            run_logger.warning(f"Round {round_index}: aucun groupe n'a de variance de récompense")

        items = flatten_groups(groups)
        update_index = 0
        for epoch in range(config.epochs_per_round):
            rng = derive_rng(config.seed, round_index, SHUFFLE_STREAM, epoch)
            for minibatch in partition_minibatches(items, config.inner_updates, rng):
                record = inner_update(
                    self.params,
                    minibatch,
                    config.objective,
                    self.clip,
                    config.step_size,
                    reference=self.reference,
                    round_index=round_index,
                    update_index=update_index,
                    mean_reward=mean_reward,
                    momentum=config.momentum,
                )
                self.telemetry.append(record)
                update_index += 1

        self.old = self.params.snapshot()
        last = self.telemetry[-1]
        run_logger.info(
            f"Round {round_index}: récompense={mean_reward:.4f}, "
            f"enveloppe=[{last.ratio_log_min:.4g}, {last.ratio_log_max:.4g}], "
            f"clip={last.clip_fraction:.3f}, kl_ref={last.kl_ref:.4g}"
        )

    def run(self) -> TrainingResult:
        """Exécute total_rounds rounds et construit le résumé."""
        logger.info(
            f"Entraînement {self.config.objective.value}: {self.config.total_rounds} rounds, "
            f"seuils log=({self.clip.lower_log}, {self.clip.upper_log}), mode={self.clip.mode.value}"
        )
        for round_index in range(self.config.total_rounds):
            self.run_round(round_index)
        return TrainingResult(self.params, self.telemetry, self.summarize())

    def summarize(self) -> RunSummary:
        config = self.config
        rewards = [r.mean_reward for r in self.telemetry]
        smoothed = moving_average(rewards, REWARD_MOVING_AVERAGE_WINDOW) if rewards else None
        last_round = [r for r in self.telemetry if r.round == self.telemetry[-1].round] if self.telemetry else []

        def _mean(values: list[float]) -> float | None:
            return float(np.mean(values)) if values else None

        return RunSummary(
            objective=config.objective,
            seed=config.seed,
            task=config.task.name,
            clip_lower_log=self.clip.lower_log,
            clip_upper_log=self.clip.upper_log,
            clip_mode=self.clip.mode,
            total_rounds=config.total_rounds,
            total_updates=len(self.telemetry),
            final_mean_reward=self.round_rewards[-1] if self.round_rewards else None,
            greedy_pass_at_1=greedy_pass_at_1(self.params, self.task),
            initial_reward_moving_average=float(smoothed.iloc[0]) if smoothed is not None else None,
            final_reward_moving_average=float(smoothed.iloc[-1]) if smoothed is not None else None,
            mean_envelope_width=_mean([r.envelope_width for r in self.telemetry]),
            final_mean_entropy=_mean([r.mean_entropy for r in last_round]),
            final_kl_ref=_mean([r.kl_ref for r in last_round]),
            metadata=RunMetadata(
                advantage_std=ADVANTAGE_STD_MODE,
                advantage_std_floor=ADVANTAGE_STD_FLOOR,
                kl_estimator=KL_ESTIMATOR_DESCRIPTION,
                clip_resolution=_describe_clip(config, self.clip),
                minibatch_rollouts=config.effective_minibatch,
            ),
        )


def _describe_clip(config: TrainConfig, clip: ClipConfig) -> str:
    source = "configuration" if config.clip is not None else "défaut de l'objectif"
    low, high = clip.linear_bounds
    return (
        f"{config.objective.value}: seuils {source}, log=({clip.lower_log}, {clip.upper_log}), "
        f"linéaire=({low:.6g}, {high:.6g}), mode={clip.mode.value}"
    )


def train(config: TrainConfig) -> TrainingResult:
    """
    Entraîne une politique selon la configuration; déterministe pour une graine donnée.

    Args:
        config: Configuration validée

    Returns:
        TrainingResult (paramètres finaux, télémétrie, résumé)
    """
    return Trainer(config).run()
