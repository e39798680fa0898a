# src/gmpo_lab/core/utils/hashing.py
# Hachage stable des contextes et dérivation des graines

import hashlib

import numpy as np
from cachetools import LRUCache, cached

from gmpo_lab.core.constants import BUCKET_HASH_CACHE_SIZE


def context_key(prompt_id: int, tail: tuple[int, ...]) -> bytes:
    """
    Sérialise un contexte en octets.

    Format: "<prompt_id>|<t1>,<t2>,...", encodé en UTF-8. Un historique vide
    donne "<prompt_id>|".
    """
    return f"{prompt_id}|{','.join(str(t) for t in tail)}".encode("utf-8")


@cached(cache=LRUCache(maxsize=BUCKET_HASH_CACHE_SIZE))
def context_digest(prompt_id: int, tail: tuple[int, ...]) -> int:
    """
    Retourne les 8 premiers octets du SHA256 de la clé de contexte, en entier
    non signé big-endian. Indépendant de la plateforme et du PYTHONHASHSEED.

    Args:
        prompt_id: Identifiant du prompt
        tail: Derniers tokens retenus (au plus k)

    Returns:
        Entier sur 64 bits
    """
    hash_obj = hashlib.sha256(context_key(prompt_id, tail))
    return int.from_bytes(hash_obj.digest()[:8], "big")


def derive_rng(*entropy: int) -> np.random.Generator:
    """
    Crée un flux aléatoire indépendant et reproductible à partir d'entiers.

    Args:
        entropy: Graine racine suivie des indices (round, slot, ...)

    Returns:
        Générateur numpy
    """
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))
