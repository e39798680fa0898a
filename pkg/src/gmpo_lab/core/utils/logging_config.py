# src/gmpo_lab/core/utils/logging_config.py
# Configuration centralisée du système de logging

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path

from gmpo_lab.core.constants import APP_LOG_FILE, RUN_LOG_FILE, APP_NAME


LOG_FORMAT = logging.Formatter(
    fmt='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)


def setup_logging(level: int = logging.INFO) -> logging.Logger:
    """
    Configure le logger principal et le logger des runs (console uniquement).

    Les fichiers sont attachés séparément par attach_file_handlers(), pour
    que l'import du paquet n'écrive jamais sur le disque.

    Args:
        level: Niveau de la console

    Returns:
        Logger principal
    """
    app_logger = logging.getLogger(APP_NAME)
    app_logger.setLevel(logging.DEBUG)
    app_logger.propagate = False

    # Handler console (stderr: stdout est réservé aux résultats des commandes)
    if not any(getattr(h, "_gmpo_console", False) for h in app_logger.handlers):
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(LOG_FORMAT)
        console_handler._gmpo_console = True  # type: ignore[attr-defined]
        app_logger.addHandler(console_handler)

    for handler in app_logger.handlers:
        if getattr(handler, "_gmpo_console", False):
            handler.setLevel(level)

    # Logger des runs: hérite de la console via propagate
    run_logger = logging.getLogger(f'{APP_NAME}.run')
    run_logger.setLevel(logging.DEBUG)

    return app_logger


def attach_file_handlers(app_log_file: Path = APP_LOG_FILE, run_log_file: Path = RUN_LOG_FILE) -> None:
    """
    Ajoute les handlers fichiers avec rotation (10 MB max, 5 fichiers).

    Args:
        app_log_file: Fichier du logger principal
        run_log_file: Fichier dédié aux événements d'entraînement
    """
    app_log_file.parent.mkdir(parents=True, exist_ok=True)
    run_log_file.parent.mkdir(parents=True, exist_ok=True)

    app_logger = logging.getLogger(APP_NAME)
    if not any(isinstance(h, RotatingFileHandler) for h in app_logger.handlers):
        file_handler = RotatingFileHandler(
            app_log_file,
            maxBytes=10 * 1024 * 1024,  # 10 MB
            backupCount=5,
            encoding='utf-8'
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(LOG_FORMAT)
        app_logger.addHandler(file_handler)

    run_logger = get_run_logger()
    if not any(isinstance(h, RotatingFileHandler) for h in run_logger.handlers):
        run_handler = RotatingFileHandler(
            run_log_file,
            maxBytes=10 * 1024 * 1024,
            backupCount=5,
            encoding='utf-8'
        )
        run_handler.setLevel(logging.INFO)
        run_handler.setFormatter(LOG_FORMAT)
        run_logger.addHandler(run_handler)


def get_logger(name: str = APP_NAME) -> logging.Logger:
    """
    Récupère un logger configuré.

    Args:
        name: Nom du logger (par défaut: 'gmpo_lab')

    Returns:
        Logger configuré
    """
    return logging.getLogger(name)


def get_run_logger() -> logging.Logger:
    """
    Récupère le logger des événements d'entraînement.

    Returns:
        Logger des runs
    """
    return logging.getLogger(f'{APP_NAME}.run')


# Initialiser le logging au chargement du module
setup_logging()
