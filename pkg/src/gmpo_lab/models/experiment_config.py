# src/gmpo_lab/models/experiment_config.py
# Schéma versionné du fichier de configuration d'expérience (JSON)

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from gmpo_lab.core.constants import (
    DEFAULT_CONTEXT_ORDER, DEFAULT_GROUP_SIZE, DEFAULT_INNER_UPDATES,
    DEFAULT_NUM_BUCKETS, DEFAULT_PROMPTS_PER_ROUND, ErrorMessages, TaskName
)
from gmpo_lab.core.exceptions import ConfigError
from gmpo_lab.core.rollout import ClipConfig, ClipMode, ObjectiveKind

CONFIG_SCHEMA_VERSION = 1


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid', ser_json_inf_nan='constants')


class TaskConfig(_StrictModel):
    """
    Bloc tâche. Pour la parité, min/max_target_len bornent le nombre de bits
    demandé et alphabet_size est ignoré.
    """
    name: Literal["copy", "parity"] = TaskName.PARITY
    alphabet_size: int = Field(3, ge=2)
    min_target_len: int = Field(2, ge=1)
    max_target_len: int = Field(3, ge=1)
    num_prompts: int = Field(8, ge=1)
    max_len: int = Field(6, ge=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode='after')
    def _check_lengths(self) -> TaskConfig:
        if self.min_target_len > self.max_target_len:
            raise ValueError("min_target_len doit être <= max_target_len")
        if self.max_len < self.max_target_len:
            raise ValueError("max_len doit permettre d'émettre la cible la plus longue")
        return self


class PolicyConfig(_StrictModel):
    """Dimensions de la table de logits."""
    num_buckets: int = Field(DEFAULT_NUM_BUCKETS, ge=1)
    context_order: int = Field(DEFAULT_CONTEXT_ORDER, ge=0)
    init_scale: float = Field(0.0, ge=0.0)


class ClipSettings(_StrictModel):
    """Seuils en espace log; -inf / +inf s'écrivent -Infinity / Infinity."""
    lower_log: float = Field(allow_inf_nan=True)
    upper_log: float = Field(allow_inf_nan=True)
    mode: ClipMode = ClipMode.TOKEN

    @model_validator(mode='after')
    def _check_bounds(self) -> ClipSettings:
        if math.isnan(self.lower_log) or math.isnan(self.upper_log):
            raise ValueError("les seuils ne peuvent pas être NaN")
        if not (self.lower_log <= 0.0 <= self.upper_log):
            raise ValueError(ErrorMessages.BAD_CLIP_BOUNDS.format(self.lower_log, self.upper_log))
        return self

    @classmethod
    def from_clip(cls, clip: ClipConfig) -> ClipSettings:
        return cls(lower_log=clip.lower_log, upper_log=clip.upper_log, mode=clip.mode)

    def to_clip(self) -> ClipConfig:
        return ClipConfig(self.lower_log, self.upper_log, self.mode)


class TrainConfig(_StrictModel):
    """
    Configuration complète d'un entraînement.

    clip = None signifie "seuils par défaut de l'objectif". minibatch_rollouts
    est dérivé (G * prompts_per_round / inner_updates) quand il est absent.
    """
    schema_version: Literal[1] = CONFIG_SCHEMA_VERSION
    objective: ObjectiveKind = ObjectiveKind.GMPO
    group_size: int = Field(DEFAULT_GROUP_SIZE, ge=2)
    prompts_per_round: int = Field(DEFAULT_PROMPTS_PER_ROUND, ge=1)
    inner_updates: int = Field(DEFAULT_INNER_UPDATES, ge=1)
    minibatch_rollouts: int | None = Field(None, ge=1)
    epochs_per_round: int = Field(1, ge=1)
    step_size: float = Field(5.0, ge=0.0)
    momentum: float = Field(0.0, ge=0.0, lt=1.0)
    total_rounds: int = Field(20, ge=0)
    temperature: float = Field(1.0, ge=0.0)
    seed: int = Field(0, ge=0)
    clip: ClipSettings | None = None
    task: TaskConfig = Field(default_factory=TaskConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)

    @model_validator(mode='after')
    def _check_partition(self) -> TrainConfig:
        collected = self.group_size * self.prompts_per_round
        if collected < self.inner_updates:
            raise ValueError(
                f"{collected} rollouts par round ne couvrent pas {self.inner_updates} mises à jour"
            )
        if self.minibatch_rollouts is not None:
            if self.minibatch_rollouts * self.inner_updates != collected:
                raise ValueError(
                    f"minibatch_rollouts x inner_updates doit valoir {collected} "
                    f"(une passe exacte sur les rollouts du round)"
                )
        return self

    @property
    def rollouts_per_round(self) -> int:
        return self.group_size * self.prompts_per_round

    @property
    def effective_minibatch(self) -> int:
        """Taille nominale des minibatchs (la dernière partition peut différer)."""
        if self.minibatch_rollouts is not None:
            return self.minibatch_rollouts
        return self.rollouts_per_round // self.inner_updates

    def resolved_clip(self) -> ClipConfig:
        """Seuils effectifs, après défaut de l'objectif et adaptation du mode."""
        clip = self.clip.to_clip() if self.clip is not None else self.objective.default_clip()
        return self.objective.resolve_clip(clip)

    def resolved(self) -> TrainConfig:
        """Copie avec des seuils explicites: une entrée valide et idempotente."""
        return self.model_copy(update={'clip': ClipSettings.from_clip(self.resolved_clip())})


def _format_location(error: dict) -> str:
    return ".".join(str(part) for part in error.get('loc', ())) or "<racine>"


def parse_config(text: str, source: str = "<texte>") -> TrainConfig:
    """
    Analyse un texte JSON de configuration.

    Raises:
        ConfigError: Avec ligne/colonne pour une erreur de syntaxe, ou le
            chemin pointé du champ fautif pour une erreur de validation
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(ErrorMessages.CONFIG_SYNTAX.format(source, e.lineno, e.colno, e.msg)) from e

    try:
        return TrainConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(
            ErrorMessages.CONFIG_FIELD.format(source, _format_location(first), first['msg'])
        ) from e


def load_config(path: Path) -> TrainConfig:
    """
    Charge un fichier de configuration.

    Args:
        path: Fichier JSON

    Returns:
        TrainConfig validé

    Raises:
        ConfigError: Fichier illisible ou invalide
    """
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigError(f"Configuration {path}: lecture impossible ({e})") from e
    return parse_config(text, str(path))


def dump_config(config: TrainConfig) -> str:
    """JSON indenté, stable d'un run à l'autre."""
    return config.model_dump_json(indent=2) + "\n"
