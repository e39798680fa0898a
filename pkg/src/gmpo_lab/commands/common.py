# src/gmpo_lab/commands/common.py
# Utilitaires partagés par les commandes

import argparse
import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from gmpo_lab.core.constants import RESOLVED_CONFIG_FILE
from gmpo_lab.core.utils.folder_manager import get_run_file_path, write_text_file


def positive_int(value: str) -> int:
    """Type argparse: entier >= 1."""
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"entier attendu, reçu '{value}'")
    if number < 1:
        raise argparse.ArgumentTypeError(f"doit être >= 1 (reçu {number})")
    return number


def non_negative_int(value: str) -> int:
    """Type argparse: entier >= 0."""
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"entier attendu, reçu '{value}'")
    if number < 0:
        raise argparse.ArgumentTypeError(f"doit être >= 0 (reçu {number})")
    return number


def write_model(path: Path, model: BaseModel) -> Path:
    """Écrit un modèle pydantic en JSON indenté."""
    return write_text_file(path, model.model_dump_json(indent=2) + "\n")


def write_json(path: Path, data: dict[str, Any]) -> Path:
    return write_text_file(path, json.dumps(data, indent=2) + "\n")


def write_resolved_config(run_dir: Path, model: BaseModel) -> Path:
    """Snapshot de configuration écrit à côté des sorties de chaque commande."""
    return write_model(get_run_file_path(run_dir, RESOLVED_CONFIG_FILE), model)
