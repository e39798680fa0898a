# src/gmpo_lab/core/tasks.py
# Tâches synthétiques à récompense binaire vérifiable (copie, parité)

from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gmpo_lab.core.constants import (
    EXACT_ENUMERATION_LIMIT, MONTE_CARLO_SAMPLES, TaskName
)
from gmpo_lab.core.exceptions import ConfigError, InvalidArgumentError
from gmpo_lab.core.utils.hashing import derive_rng
from gmpo_lab.models.experiment_config import TaskConfig


def emitted_tokens(tokens: Sequence[int], eos_token: int) -> list[int]:
    """Tokens avant le premier EOS; un rollout tronqué est pris tel quel."""
    out: list[int] = []
    for token in tokens:
        if int(token) == eos_token:
            break
        out.append(int(token))
    return out


def verify_copy(target: Sequence[int], tokens: Sequence[int], eos_token: int) -> int:
    """1 si les tokens émis reproduisent exactement la cible, 0 sinon."""
    return int(emitted_tokens(tokens, eos_token) == list(target))


def verify_parity(parity: int, length: int, tokens: Sequence[int], eos_token: int) -> int:
    """1 si exactement `length` bits sont émis et que le nombre de 1 a la parité demandée."""
    bits = emitted_tokens(tokens, eos_token)
    if len(bits) != length or any(b not in (0, 1) for b in bits):
        return 0
    return int(sum(bits) % 2 == parity)


@dataclass(frozen=True)
class UniformRewardEstimate:
    """Probabilité de succès d'une politique uniforme."""
    value: float
    std_error: float
    exact: bool


class Task(ABC):
    """
    Tâche autorégressive: vocabulaire de `alphabet_size` symboles plus EOS.

    Les prompts sont des entiers 0..n-1; ils ne conditionnent la politique
    qu'au travers du hachage de contexte.
    """
    name: str

    def __init__(self, alphabet_size: int, max_len: int, seed: int = 0):
        if max_len < 1:
            raise ConfigError(f"max_len doit être >= 1 (reçu {max_len})")
        self.alphabet_size = alphabet_size
        self.eos_token = alphabet_size
        self.vocab_size = alphabet_size + 1
        self.max_len = max_len
        self.seed = seed

    @property
    @abstractmethod
    def prompt_ids(self) -> list[int]:
        ...

    @abstractmethod
    def required_length(self, prompt_id: int) -> int:
        """Nombre de symboles qu'une réponse correcte doit émettre."""

    @abstractmethod
    def verify(self, prompt_id: int, tokens: Sequence[int]) -> int:
        ...

    @abstractmethod
    def reference_solution(self, prompt_id: int) -> list[int]:
        """Une sortie récompensée de longueur <= max_len."""

    def _check_prompt(self, prompt_id: int) -> None:
        if prompt_id not in range(len(self.prompt_ids)):
            raise InvalidArgumentError(f"Prompt {prompt_id} inconnu pour la tâche {self.name}")

    def _terminated(self, symbols: list[int]) -> list[int]:
        if len(symbols) < self.max_len:
            return symbols + [self.eos_token]
        return symbols

    def describe(self) -> dict:
        return {
            'name': self.name,
            'vocab_size': self.vocab_size,
            'eos_token': self.eos_token,
            'max_len': self.max_len,
            'num_prompts': len(self.prompt_ids),
        }


class CopyTask(Task):
    """Reproduire une cible de 2 à 6 symboles (tirés avec remise), puis émettre EOS."""
    name = TaskName.COPY

    def __init__(
        self,
        alphabet_size: int = 3,
        min_target_len: int = 2,
        max_target_len: int = 3,
        num_prompts: int = 8,
        max_len: int = 5,
        seed: int = 0,
        targets: Sequence[Sequence[int]] | None = None,
    ):
        super().__init__(alphabet_size, max_len, seed)
        if min_target_len < 1:
            raise ConfigError("La longueur de cible doit être >= 1")
        if targets is None:
            rng = derive_rng(seed)
            targets = []
            for _ in range(num_prompts):
                length = int(rng.integers(min_target_len, max_target_len + 1))
                targets.append(rng.integers(0, alphabet_size, size=length).tolist())
        self.targets = [list(map(int, t)) for t in targets]
        for target in self.targets:
            if len(target) == 0:
                raise ConfigError("Une cible de longueur 0 n'a pas de réponse récompensée")
            if len(target) > max_len or any(not 0 <= s < alphabet_size for s in target):
                raise ConfigError(f"Cible {target} hors de portée (alphabet {alphabet_size}, max_len {max_len})")

    @property
    def prompt_ids(self) -> list[int]:
        return list(range(len(self.targets)))

    def required_length(self, prompt_id: int) -> int:
        self._check_prompt(prompt_id)
        return len(self.targets[prompt_id])

    def verify(self, prompt_id: int, tokens: Sequence[int]) -> int:
        self._check_prompt(prompt_id)
        return verify_copy(self.targets[prompt_id], tokens, self.eos_token)

    def reference_solution(self, prompt_id: int) -> list[int]:
        self._check_prompt(prompt_id)
        return self._terminated(list(self.targets[prompt_id]))


class ParityTask(Task):
    """
    Émettre exactement n bits dont la somme a la parité p.

    Les prompts énumèrent (p, n) pour n dans [min_bits, max_bits]:
    prompt j -> n = min_bits + j // 2, p = j % 2 (0 = pair).
    """
    name = TaskName.PARITY

    def __init__(self, min_bits: int = 2, max_bits: int = 4, max_len: int = 6, seed: int = 0):
        super().__init__(2, max_len, seed)
        if min_bits < 1:
            raise ConfigError("Le nombre de bits demandé doit être >= 1")
        if max_bits > max_len:
            raise ConfigError(f"{max_bits} bits ne tiennent pas dans max_len={max_len}")
        self.specs = [(p, n) for n in range(min_bits, max_bits + 1) for p in (0, 1)]

    @property
    def prompt_ids(self) -> list[int]:
        return list(range(len(self.specs)))

    def required_length(self, prompt_id: int) -> int:
        self._check_prompt(prompt_id)
        return self.specs[prompt_id][1]

    def verify(self, prompt_id: int, tokens: Sequence[int]) -> int:
        self._check_prompt(prompt_id)
        parity, length = self.specs[prompt_id]
        return verify_parity(parity, length, tokens, self.eos_token)

    def reference_solution(self, prompt_id: int) -> list[int]:
        self._check_prompt(prompt_id)
        parity, length = self.specs[prompt_id]
        bits = [1] * length
        if length % 2 != parity:
            bits[-1] = 0
        return self._terminated(bits)


def build_task(config: TaskConfig) -> Task:
    """Instancie la tâche décrite par le bloc de configuration."""
    if config.name == TaskName.COPY:
        return CopyTask(
            alphabet_size=config.alphabet_size,
            min_target_len=config.min_target_len,
            max_target_len=config.max_target_len,
            num_prompts=config.num_prompts,
            max_len=config.max_len,
            seed=config.seed,
        )
    return ParityTask(
        min_bits=config.min_target_len,
        max_bits=config.max_target_len,
        max_len=config.max_len,
        seed=config.seed,
    )


# ============================================================================
# CALIBRATION DE LA DIFFICULTÉ
# ============================================================================

def _exact_length_outcomes(task: Task, prompt_id: int) -> int:
    return task.alphabet_size ** task.required_length(prompt_id)


def _autoregressive_outcomes(task: Task) -> int:
    a = task.alphabet_size
    return sum(a ** m for m in range(task.max_len)) + a ** task.max_len


def _monte_carlo(successes: np.ndarray) -> UniformRewardEstimate:
    mean = float(successes.mean())
    std_error = math.sqrt(mean * (1.0 - mean) / successes.size)
    return UniformRewardEstimate(mean, std_error, exact=False)


def expected_uniform_reward(task: Task, prompt_id: int, include_stop: bool = False) -> UniformRewardEstimate:
    """
    Probabilité qu'une politique uniforme obtienne la récompense 1.

    Modèle par défaut (include_stop=False): exactement la longueur demandée de
    symboles uniformes, EOS placé ensuite. Avec include_stop=True, chaque
    position tire uniformément parmi les V tokens EOS compris, jusqu'à EOS
    ou max_len.

    Énumération exacte tant que l'espace des issues reste <= 10^6, sinon
    Monte-Carlo avec erreur standard.
    """
    length = task.required_length(prompt_id)
    a = task.alphabet_size
    rng = derive_rng(task.seed, prompt_id)

    if not include_stop:
        if _exact_length_outcomes(task, prompt_id) <= EXACT_ENUMERATION_LIMIT:
            wins = sum(
                task.verify(prompt_id, list(symbols) + [task.eos_token])
                for symbols in itertools.product(range(a), repeat=length)
            )
            return UniformRewardEstimate(wins / a ** length, 0.0, exact=True)
        samples = rng.integers(0, a, size=(MONTE_CARLO_SAMPLES, length))
        eos = np.full((MONTE_CARLO_SAMPLES, 1), task.eos_token)
        rows = np.hstack([samples, eos])
        return _monte_carlo(np.array([task.verify(prompt_id, row) for row in rows]))

    v = task.vocab_size
    if _autoregressive_outcomes(task) <= EXACT_ENUMERATION_LIMIT:
        total = 0.0
        for m in range(task.max_len + 1):
            stop = m < task.max_len
            weight = (1.0 / v) ** (m + 1 if stop else m)
            suffix = [task.eos_token] if stop else []
            for symbols in itertools.product(range(a), repeat=m):
                if task.verify(prompt_id, list(symbols) + suffix):
                    total += weight
        return UniformRewardEstimate(total, 0.0, exact=True)

    draws = rng.integers(0, v, size=(MONTE_CARLO_SAMPLES, task.max_len))
    return _monte_carlo(np.array([task.verify(prompt_id, row) for row in draws]))
