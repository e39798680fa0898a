# src/gmpo_lab/core/rollout.py
# Types de domaine partagés: rollouts, groupes, configuration de clipping

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from gmpo_lab.core.constants import (
    ErrorMessages, GMPO_DEFAULT_LOG_EPSILON, GRPO_DEFAULT_EPSILON
)
from gmpo_lab.core.exceptions import (
    InvalidGroupError, InvalidValueError, ShapeError
)


def _frozen(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class Rollout:
    """
    Une séquence de tokens échantillonnée pour un prompt.

    Les log-probabilités de l'ancienne politique sont enregistrées au moment
    de l'échantillonnage et ne changent plus pendant le round.
    """
    prompt_id: int
    tokens: np.ndarray
    old_logps: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        tokens = np.array(self.tokens, dtype=np.int64)
        old_logps = np.array(self.old_logps, dtype=np.float64)
        if self.mask is None:
            mask = np.ones(tokens.shape, dtype=bool)
        else:
            mask = np.array(self.mask, dtype=bool)

        if tokens.ndim != 1 or tokens.size == 0:
            raise ShapeError("Un rollout doit contenir au moins un token")
        if old_logps.shape != tokens.shape:
            raise ShapeError(ErrorMessages.SHAPE_MISMATCH.format(old_logps.shape, tokens.shape))
        if mask.shape != tokens.shape:
            raise ShapeError(ErrorMessages.SHAPE_MISMATCH.format(mask.shape, tokens.shape))
        if not mask.any():
            raise InvalidValueError(ErrorMessages.EMPTY_MASK)
        if not np.all(np.isfinite(old_logps)):
            raise InvalidValueError(ErrorMessages.NON_FINITE.format("old_logps"))
        if np.any(old_logps > 0.0):
            raise InvalidValueError(ErrorMessages.POSITIVE_OLD_LOGP)

        object.__setattr__(self, "tokens", _frozen(tokens))
        object.__setattr__(self, "old_logps", _frozen(old_logps))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def length(self) -> int:
        return int(self.tokens.size)

    @property
    def valid_count(self) -> int:
        """Nombre de tokens valides (|o| dans les objectifs)."""
        return int(self.mask.sum())

    def to_dict(self) -> dict:
        """Sérialisation pour les dumps de diagnostic."""
        return {
            "prompt_id": self.prompt_id,
            "tokens": self.tokens.tolist(),
            "old_logps": self.old_logps.tolist(),
            "mask": self.mask.tolist(),
        }


@dataclass(frozen=True, eq=False)
class RolloutGroup:
    """
    Les G rollouts d'un même prompt, leurs récompenses binaires et leurs
    avantages normalisés. Construire via RolloutGroup.from_rewards().
    """
    rollouts: tuple[Rollout, ...]
    rewards: np.ndarray
    advantages: np.ndarray

    def __post_init__(self) -> None:
        rollouts = tuple(self.rollouts)
        rewards = np.array(self.rewards, dtype=np.float64)
        advantages = np.array(self.advantages, dtype=np.float64)

        if len(rollouts) < 2:
            raise InvalidGroupError(ErrorMessages.GROUP_TOO_SMALL.format(len(rollouts)))
        if rewards.shape != (len(rollouts),) or advantages.shape != (len(rollouts),):
            raise ShapeError(ErrorMessages.SHAPE_MISMATCH.format(rewards.shape, (len(rollouts),)))
        if len({r.prompt_id for r in rollouts}) != 1:
            raise InvalidGroupError(ErrorMessages.MIXED_PROMPTS)
        if not np.all((rewards == 0.0) | (rewards == 1.0)):
            raise InvalidGroupError(ErrorMessages.NON_BINARY_REWARD.format(rewards.tolist()))

        object.__setattr__(self, "rollouts", rollouts)
        object.__setattr__(self, "rewards", _frozen(rewards))
        object.__setattr__(self, "advantages", _frozen(advantages))

    @classmethod
    def from_rewards(cls, rollouts: list[Rollout] | tuple[Rollout, ...], rewards) -> RolloutGroup:
        """
        Construit un groupe et calcule les avantages relatifs au groupe.

        Args:
            rollouts: G rollouts du même prompt
            rewards: G récompenses binaires

        Returns:
            RolloutGroup avec avantages normalisés
        """
        from gmpo_lab.core.advantages import normalize_group

        rewards = np.asarray(rewards, dtype=np.float64)
        if len(rollouts) < 2:
            raise InvalidGroupError(ErrorMessages.GROUP_TOO_SMALL.format(len(rollouts)))
        return cls(tuple(rollouts), rewards, normalize_group(rewards))

    @property
    def prompt_id(self) -> int:
        return self.rollouts[0].prompt_id

    @property
    def size(self) -> int:
        return len(self.rollouts)

    def items(self) -> list[tuple[Rollout, float]]:
        """Paires (rollout, avantage) dans l'ordre du groupe."""
        return [(r, float(a)) for r, a in zip(self.rollouts, self.advantages)]


class ClipMode(str, Enum):
    """Granularité du clipping."""
    TOKEN = "token"
    SEQUENCE = "sequence"
    NONE = "none"


@dataclass(frozen=True)
class ClipConfig:
    """
    Seuils de clipping en espace log: lower_log = ln(eps1) <= 0 <= upper_log = ln(eps2).
    """
    lower_log: float
    upper_log: float
    mode: ClipMode = ClipMode.TOKEN

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", ClipMode(self.mode))
        if math.isnan(self.lower_log) or math.isnan(self.upper_log):
            raise InvalidValueError(ErrorMessages.NON_FINITE.format("seuil de clipping"))
        if not (self.lower_log <= 0.0 <= self.upper_log):
            raise InvalidValueError(
                ErrorMessages.BAD_CLIP_BOUNDS.format(self.lower_log, self.upper_log)
            )

    @classmethod
    def symmetric(cls, log_epsilon: float, mode: ClipMode = ClipMode.TOKEN) -> ClipConfig:
        """Bornes (e^-eps, e^eps), le réglage de l'algorithme GMPO."""
        return cls(-log_epsilon, log_epsilon, mode)

    @classmethod
    def from_linear(cls, low: float, high: float, mode: ClipMode = ClipMode.TOKEN) -> ClipConfig:
        """Bornes linéaires (low, high) de GRPO, converties en espace log."""
        if not (0.0 <= low <= 1.0 <= high):
            raise InvalidValueError(ErrorMessages.BAD_CLIP_BOUNDS.format(low, high))
        lower = math.log(low) if low > 0.0 else -math.inf
        return cls(lower, math.log(high), mode)

    @classmethod
    def disabled(cls) -> ClipConfig:
        return cls(-math.inf, math.inf, ClipMode.NONE)

    def with_mode(self, mode: ClipMode) -> ClipConfig:
        return ClipConfig(self.lower_log, self.upper_log, mode)

    @property
    def bounds(self) -> tuple[float, float]:
        """Bornes effectives: infinies quand le mode est none."""
        if self.mode is ClipMode.NONE:
            return -math.inf, math.inf
        return self.lower_log, self.upper_log

    @property
    def linear_bounds(self) -> tuple[float, float]:
        lower, upper = self.bounds
        return math.exp(lower), math.exp(upper)


class ObjectiveKind(str, Enum):
    """Les cinq objectifs d'entraînement comparés dans l'ablation."""
    GRPO = "GRPO"
    GMPO = "GMPO"
    GMPO_NOCLIP = "GMPO_NOCLIP"
    GMPO_SEQCLIP = "GMPO_SEQCLIP"
    GMPO_NONORM = "GMPO_NONORM"

    @property
    def ablation_row(self) -> int:
        return _ABLATION_ROWS[self]

    def default_clip(self) -> ClipConfig:
        """Seuils par défaut de chaque variante."""
        if self is ObjectiveKind.GRPO:
            return ClipConfig.from_linear(1.0 - GRPO_DEFAULT_EPSILON, 1.0 + GRPO_DEFAULT_EPSILON)
        if self is ObjectiveKind.GMPO_NOCLIP:
            return ClipConfig.disabled()
        if self is ObjectiveKind.GMPO_SEQCLIP:
            return ClipConfig.symmetric(GMPO_DEFAULT_LOG_EPSILON, ClipMode.SEQUENCE)
        return ClipConfig.symmetric(GMPO_DEFAULT_LOG_EPSILON)

    def resolve_clip(self, clip: ClipConfig) -> ClipConfig:
        """
        Adapte une configuration au mode imposé par la variante.

        GMPO_NOCLIP ignore les seuils, GMPO_SEQCLIP clippe la séquence, les
        autres clippent par token. Le mode none est conservé tel quel.
        """
        if self is ObjectiveKind.GMPO_NOCLIP:
            return ClipConfig.disabled()
        if clip.mode is ClipMode.NONE:
            return clip
        if self is ObjectiveKind.GMPO_SEQCLIP:
            return clip.with_mode(ClipMode.SEQUENCE)
        return clip.with_mode(ClipMode.TOKEN)


_ABLATION_ROWS = {
    ObjectiveKind.GRPO: 1,
    ObjectiveKind.GMPO_NOCLIP: 2,
    ObjectiveKind.GMPO_SEQCLIP: 3,
    ObjectiveKind.GMPO_NONORM: 4,
    ObjectiveKind.GMPO: 5,
}
