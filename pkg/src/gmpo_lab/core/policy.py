# src/gmpo_lab/core/policy.py
# Politique softmax autorégressive tabulaire, indexée par contexte haché

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from gmpo_lab.core.constants import (
    DEFAULT_CONTEXT_ORDER, DEFAULT_NUM_BUCKETS, ErrorMessages
)
from gmpo_lab.core.exceptions import (
    InvalidValueError, ShapeError, TokenIndexError
)
from gmpo_lab.core.rollout import Rollout
from gmpo_lab.core.utils.hashing import context_digest, derive_rng


class _LogitTable:
    """Accès en lecture commun aux paramètres et aux snapshots."""

    logit_table: np.ndarray
    context_order: int
    seed: int

    @property
    def num_buckets(self) -> int:
        return int(self.logit_table.shape[0])

    @property
    def vocab_size(self) -> int:
        return int(self.logit_table.shape[1])

    def bucket_of(self, prompt_id: int, preceding: Sequence[int]) -> int:
        return context_bucket(prompt_id, preceding, self.context_order, self.num_buckets)


def _validate_table(table: np.ndarray, context_order: int) -> None:
    if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 2:
        raise ShapeError(ErrorMessages.SHAPE_MISMATCH.format(table.shape, "(H >= 1, V >= 2)"))
    if context_order < 0:
        raise InvalidValueError(f"L'ordre de contexte doit être >= 0 (reçu {context_order})")
    if not np.all(np.isfinite(table)):
        raise InvalidValueError(ErrorMessages.NON_FINITE.format("logit_table"))


class PolicyParams(_LogitTable):
    """
    Paramètres modifiables de la politique pi_theta.
    Seul le trainer les modifie, via apply_gradient().
    """

    def __init__(self, logit_table: np.ndarray, context_order: int = DEFAULT_CONTEXT_ORDER, seed: int = 0):
        table = np.array(logit_table, dtype=np.float64)
        _validate_table(table, context_order)
        self.logit_table = table
        self.context_order = int(context_order)
        self.seed = int(seed)
        # Vitesse de l'option momentum, créée au premier pas
        self.velocity: np.ndarray | None = None

    @classmethod
    def initial(
        cls,
        vocab_size: int,
        num_buckets: int = DEFAULT_NUM_BUCKETS,
        context_order: int = DEFAULT_CONTEXT_ORDER,
        seed: int = 0,
        init_scale: float = 0.0,
    ) -> PolicyParams:
        """
        Crée une politique initiale: uniforme si init_scale = 0, sinon des
        logits gaussiens d'écart-type init_scale tirés depuis la graine.
        """
        if init_scale > 0.0:
            table = derive_rng(seed).normal(0.0, init_scale, size=(num_buckets, vocab_size))
        else:
            table = np.zeros((num_buckets, vocab_size))
        return cls(table, context_order, seed)

    def snapshot(self) -> PolicySnapshot:
        """Copie figée (pi_theta_old ou pi_ref)."""
        return PolicySnapshot(self.logit_table, self.context_order, self.seed)

    def copy(self) -> PolicyParams:
        clone = PolicyParams(self.logit_table, self.context_order, self.seed)
        if self.velocity is not None:
            clone.velocity = self.velocity.copy()
        return clone

    def to_dict(self) -> dict[str, Any]:
        return {
            'num_buckets': self.num_buckets,
            'vocab_size': self.vocab_size,
            'context_order': self.context_order,
            'seed': self.seed,
        }

    def __repr__(self) -> str:
        return (
            f"<PolicyParams(H={self.num_buckets}, V={self.vocab_size}, "
            f"k={self.context_order}, seed={self.seed})>"
        )


class PolicySnapshot(_LogitTable):
    """Copie immuable d'une politique, partageable entre workers."""

    def __init__(self, logit_table: np.ndarray, context_order: int, seed: int = 0):
        table = np.array(logit_table, dtype=np.float64)
        _validate_table(table, context_order)
        table.setflags(write=False)
        self.logit_table = table
        self.context_order = int(context_order)
        self.seed = int(seed)

    def __setattr__(self, name: str, value: Any) -> None:
        if name in self.__dict__:
            raise AttributeError(f"PolicySnapshot est immuable ({name})")
        super().__setattr__(name, value)

    def __repr__(self) -> str:
        return f"<PolicySnapshot(H={self.num_buckets}, V={self.vocab_size}, k={self.context_order})>"


Policy = PolicyParams | PolicySnapshot


# ============================================================================
# CONTEXTES
# ============================================================================

def context_bucket(prompt_id: int, preceding: Sequence[int], context_order: int, num_buckets: int) -> int:
    """
    Indice de bucket d'un contexte: SHA256("<prompt_id>|<t1>,...,<tk>") sur
    8 octets big-endian, modulo H. Seuls les min(k, n) derniers tokens comptent.
    """
    if context_order > 0:
        tail = tuple(int(t) for t in preceding[-context_order:])
    else:
        tail = ()
    return context_digest(int(prompt_id), tail) % num_buckets


def rollout_buckets(policy: Policy, rollout: Rollout) -> np.ndarray:
    """Bucket de chaque position d'un rollout (contexte = tokens précédents)."""
    tokens = rollout.tokens.tolist()
    return np.array(
        [policy.bucket_of(rollout.prompt_id, tokens[:t]) for t in range(len(tokens))],
        dtype=np.int64,
    )


# ============================================================================
# SOFTMAX
# ============================================================================

def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Log-softmax par ligne avec soustraction du maximum."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _check_token(policy: Policy, token: int) -> None:
    if not 0 <= token < policy.vocab_size:
        raise TokenIndexError(token, policy.vocab_size)


def log_prob(policy: Policy, bucket: int, token: int) -> float:
    """
    log pi(token | bucket), toujours <= 0.

    Raises:
        TokenIndexError: Si le token est hors du vocabulaire
    """
    _check_token(policy, token)
    return float(log_softmax(policy.logit_table[bucket])[token])


def score(policy: Policy, bucket: int, token: int) -> np.ndarray:
    """
    Gradient de log pi(token | bucket) par rapport à la ligne du bucket:
    onehot(token) - softmax(logits). Nul pour les autres buckets.
    """
    _check_token(policy, token)
    grad = -softmax(policy.logit_table[bucket])
    grad[token] += 1.0
    return grad


def entropy(policy: Policy, bucket: int) -> float:
    """Entropie de Shannon (nats) de la distribution du bucket."""
    return float(entropy_rows(policy.logit_table[[bucket]])[0])


def entropy_rows(logits: np.ndarray) -> np.ndarray:
    logp = log_softmax(logits)
    return np.maximum(-(np.exp(logp) * logp).sum(axis=-1), 0.0)


def token_log_probs(policy: Policy, buckets: np.ndarray, tokens: np.ndarray) -> np.ndarray:
    """Log-probabilités des tokens d'un rollout, position par position."""
    if np.any(tokens < 0) or np.any(tokens >= policy.vocab_size):
        bad = int(tokens[(tokens < 0) | (tokens >= policy.vocab_size)][0])
        raise TokenIndexError(bad, policy.vocab_size)
    rows = log_softmax(policy.logit_table[buckets])
    return rows[np.arange(tokens.size), tokens]


def accumulate_scores(
    policy: Policy, buckets: np.ndarray, tokens: np.ndarray, coefficients: np.ndarray, out: np.ndarray
) -> None:
    """
    Ajoute sum_t c_t * score(bucket_t, token_t) au tableau `out` (H x V).

    Les buckets répétés s'accumulent via np.add.at.
    """
    contributions = -softmax(policy.logit_table[buckets]) * coefficients[:, None]
    contributions[np.arange(tokens.size), tokens] += coefficients
    np.add.at(out, buckets, contributions)


# ============================================================================
# MISE À JOUR
# ============================================================================

def apply_gradient(params: PolicyParams, gradient: np.ndarray, step_size: float, momentum: float = 0.0) -> PolicyParams:
    """
    Pas d'ascension en place: theta += step_size * gradient.

    Avec momentum > 0, la vitesse v = momentum * v + gradient remplace le gradient.

    Raises:
        ShapeError: Si le gradient n'a pas la forme de la table
    """
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != params.logit_table.shape:
        raise ShapeError(ErrorMessages.SHAPE_MISMATCH.format(gradient.shape, params.logit_table.shape))

    direction = gradient
    if momentum > 0.0:
        if params.velocity is None:
            params.velocity = np.zeros_like(params.logit_table)
        params.velocity = momentum * params.velocity + gradient
        direction = params.velocity

    if step_size != 0.0:
        params.logit_table += step_size * direction
    return params


# ============================================================================
# ÉCHANTILLONNAGE
# ============================================================================

def sample_rollout(
    policy: Policy,
    prompt_id: int,
    max_len: int,
    temperature: float,
    rng: np.random.Generator,
    eos_token: int | None = None,
) -> Rollout:
    """
    Échantillonne une séquence jusqu'à EOS ou max_len.

    Args:
        policy: Politique (snapshot de pi_theta_old en entraînement)
        prompt_id: Identifiant du prompt
        max_len: Longueur maximale (>= 1)
        temperature: 0 pour un décodage glouton (plus petit indice en cas d'égalité)
        rng: Flux aléatoire propre à ce rollout
        eos_token: Token de fin, ou None pour toujours aller jusqu'à max_len

    Returns:
        Rollout dont old_logps sont les log-probabilités à température 1
    """
    if max_len < 1:
        raise InvalidValueError(f"max_len doit être >= 1 (reçu {max_len})")
    if temperature < 0.0:
        raise InvalidValueError(f"La température doit être >= 0 (reçu {temperature})")

    tokens: list[int] = []
    logps: list[float] = []
    for _ in range(max_len):
        bucket = policy.bucket_of(prompt_id, tokens)
        logits = policy.logit_table[bucket]
        row_logp = log_softmax(policy.logit_table[[bucket]])[0]

        if temperature == 0.0:
            token = int(np.argmax(logits))
        else:
            cdf = np.cumsum(softmax(logits / temperature))
            token = int(np.searchsorted(cdf, rng.random() * cdf[-1], side='right'))
            token = min(token, policy.vocab_size - 1)

        tokens.append(token)
        logps.append(float(row_logp[token]))
        if eos_token is not None and token == eos_token:
            break

    return Rollout(prompt_id, np.array(tokens), np.array(logps))
