# src/gmpo_lab/core/utils/folder_manager.py
# Gestion des répertoires de sortie des runs

import os
import shutil
from pathlib import Path

from gmpo_lab.core.constants import (
    DEFAULT_OUTPUT_ROOT, ErrorMessages, OUTPUT_ROOT_ENV
)
from gmpo_lab.core.exceptions import OutputWriteError


def get_output_root() -> Path:
    """
    Retourne la racine des sorties.

    Returns:
        $GMPO_LAB_OUTPUT_ROOT si défini, sinon ./runs
    """
    return Path(os.getenv(OUTPUT_ROOT_ENV, str(DEFAULT_OUTPUT_ROOT)))


def resolve_out_dir(out: Path | None, command: str) -> Path:
    """Répertoire explicite (--out) ou <racine>/<commande>."""
    return out if out is not None else get_output_root() / command


def create_run_directory(run_dir: Path) -> Path:
    """
    Crée le répertoire d'un run s'il n'existe pas.

    Raises:
        OutputWriteError: Si la création échoue
    """
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputWriteError(ErrorMessages.IO_FAILURE.format(run_dir, e)) from e
    return run_dir


def get_run_file_path(run_dir: Path, filename: str) -> Path:
    """Chemin d'un fichier du run (utiliser les constantes *_FILE)."""
    return run_dir / filename


def get_cell_dir(root: Path, cell: str, seed: int) -> Path:
    """Répertoire d'une cellule d'ablation pour une graine: <root>/<cell>/seed_<s>."""
    return root / cell / f"seed_{seed}"


def write_text_file(path: Path, content: str) -> Path:
    """Écrit un fichier texte UTF-8 avec fins de ligne '\\n'."""
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(content)
    except OSError as e:
        raise OutputWriteError(ErrorMessages.IO_FAILURE.format(path, e)) from e
    return path


def copy_run_directory(source: Path, destination: Path) -> Path:
    """
    Copie un run complet (cellule partagée entre deux balayages).

    Returns:
        Répertoire de destination
    """
    if destination.exists():
        shutil.rmtree(destination)
    try:
        shutil.copytree(source, destination)
    except OSError as e:
        raise OutputWriteError(ErrorMessages.IO_FAILURE.format(destination, e)) from e
    return destination
