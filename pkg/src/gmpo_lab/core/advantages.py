# src/gmpo_lab/core/advantages.py
# Normalisation des récompenses relative au groupe

import math

import numpy as np

from gmpo_lab.core.constants import ADVANTAGE_STD_FLOOR, ErrorMessages
from gmpo_lab.core.exceptions import InvalidGroupError, InvalidValueError


def normalize_group(rewards) -> np.ndarray:
    """
    Calcule A_i = (r_i - moyenne) / max(std, delta) avec l'écart-type de
    population (division par G).

    Un groupe sans variance donne des avantages exactement nuls.

    Args:
        rewards: G récompenses (G >= 2)

    Returns:
        Tableau des G avantages

    Raises:
        InvalidGroupError: Si G < 2
        InvalidValueError: Si une récompense n'est pas finie
    """
    values = np.asarray(rewards, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise InvalidGroupError(ErrorMessages.GROUP_TOO_SMALL.format(values.size))
    if not np.all(np.isfinite(values)):
        raise InvalidValueError(ErrorMessages.NON_FINITE.format("récompense"))

    if np.all(values == values[0]):
        return np.zeros_like(values)

    centered = values - values.mean()
    std = float(np.sqrt(np.mean(centered ** 2)))
    return centered / max(std, ADVANTAGE_STD_FLOOR)


def sgn(advantage: float) -> float:
    """
    +1 si l'avantage est strictement positif, -1 sinon (y compris 0).

    Raises:
        InvalidValueError: Si l'avantage n'est pas fini
    """
    if not math.isfinite(advantage):
        raise InvalidValueError(ErrorMessages.NON_FINITE.format(advantage))
    return 1.0 if advantage > 0.0 else -1.0
