# src/gmpo_lab/core/checkpoint.py
# Sauvegarde et chargement de la table de logits (format texte stable)
#
# Format:
#   ligne 1: "# gmpo-lab policy checkpoint v1"
#   ligne 2: "H V k seed"
#   lignes suivantes: H lignes de V logits séparés par un espace (repr Python)

from pathlib import Path

import numpy as np

from gmpo_lab.core.constants import CHECKPOINT_MAGIC, ErrorMessages
from gmpo_lab.core.exceptions import CheckpointFormatError, OutputWriteError
from gmpo_lab.core.policy import PolicyParams, PolicySnapshot
from gmpo_lab.core.utils.logging_config import get_logger

logger = get_logger()


def format_checkpoint(policy: PolicyParams | PolicySnapshot) -> str:
    """Sérialise une politique; deux politiques égales donnent le même texte."""
    lines = [
        f"# {CHECKPOINT_MAGIC}",
        f"{policy.num_buckets} {policy.vocab_size} {policy.context_order} {policy.seed}",
    ]
    for row in policy.logit_table:
        lines.append(" ".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def save_checkpoint(policy: PolicyParams | PolicySnapshot, path: Path) -> Path:
    """
    Écrit le checkpoint d'une politique.

    Args:
        policy: Politique à sauvegarder
        path: Fichier de destination

    Returns:
        Chemin écrit

    Raises:
        OutputWriteError: En cas d'échec d'écriture
    """
    try:
        path.write_text(format_checkpoint(policy), encoding='utf-8')
    except OSError as e:
        raise OutputWriteError(ErrorMessages.IO_FAILURE.format(path, e)) from e
    logger.debug(f"Checkpoint écrit: {path}")
    return path


def load_checkpoint(path: Path) -> PolicyParams:
    """
    Relit un checkpoint écrit par save_checkpoint().

    Raises:
        CheckpointFormatError: Si l'en-tête ou les dimensions sont invalides
    """
    try:
        lines = path.read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise CheckpointFormatError(f"Lecture impossible de {path}: {e}") from e

    if len(lines) < 2 or lines[0] != f"# {CHECKPOINT_MAGIC}":
        raise CheckpointFormatError(f"En-tête de checkpoint inconnu dans {path}")

    try:
        num_buckets, vocab_size, context_order, seed = (int(x) for x in lines[1].split())
        rows = [[float(x) for x in line.split()] for line in lines[2:]]
    except ValueError as e:
        raise CheckpointFormatError(f"Checkpoint {path} illisible: {e}") from e

    table = np.array(rows, dtype=np.float64)
    if table.shape != (num_buckets, vocab_size):
        raise CheckpointFormatError(
            ErrorMessages.SHAPE_MISMATCH.format(table.shape, (num_buckets, vocab_size))
        )
    return PolicyParams(table, context_order, seed)
