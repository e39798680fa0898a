# src/gmpo_lab/core/report.py
# Fichiers de tracé (step, value) à partir des CSV de télémétrie

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import pandas as pd

from gmpo_lab.core.constants import (
    RATIO_METRICS, TELEMETRY_FILE, ErrorMessages, TelemetryCols
)
from gmpo_lab.core.exceptions import MissingMetricError, MissingTelemetryError
from gmpo_lab.core.telemetry import moving_average, read_csv, write_frame
from gmpo_lab.core.utils.logging_config import get_logger

logger = get_logger()

STEP_COLUMN = "step"
VALUE_COLUMN = "value"
ENVELOPE_FILE = "ratio_envelope.csv"


@dataclass(frozen=True)
class TelemetrySource:
    """Un CSV de télémétrie et son libellé dans les noms de fichiers produits."""
    label: str
    path: Path


def find_telemetry(run_dirs: Sequence[Path]) -> list[TelemetrySource]:
    """
    Liste les CSV de télémétrie des répertoires d'entrée: le fichier à la
    racine s'il existe, sinon tous ceux des sous-répertoires (ablation).

    Raises:
        MissingTelemetryError: Si un répertoire n'en contient aucun
    """
    sources: list[TelemetrySource] = []
    for position, run_dir in enumerate(run_dirs):
        direct = run_dir / TELEMETRY_FILE
        paths = [direct] if direct.is_file() else sorted(run_dir.rglob(TELEMETRY_FILE))
        if not paths:
            raise MissingTelemetryError(ErrorMessages.NO_TELEMETRY.format(run_dir))
        for path in paths:
            relative = path.parent.relative_to(run_dir).parts
            name = "_".join((run_dir.resolve().name,) + relative)
            sources.append(TelemetrySource(f"run{position}_{name}", path))
    return sources


def metric_series(df: pd.DataFrame, metric: str, smooth: int = 1) -> pd.DataFrame:
    """
    Série (step, value) d'une métrique; step est l'indice global de mise à jour.

    Raises:
        MissingMetricError: Si la colonne n'existe pas (message avec les colonnes disponibles)
    """
    if metric not in df.columns or metric in (TelemetryCols.ROUND, TelemetryCols.UPDATE):
        raise MissingMetricError(metric, [c for c in df.columns if c not in (TelemetryCols.ROUND, TelemetryCols.UPDATE)])
    return pd.DataFrame({
        STEP_COLUMN: range(len(df)),
        VALUE_COLUMN: moving_average(df[metric], smooth),
    })


def build_report(run_dirs: Sequence[Path], metric: str, smooth: int, out_dir: Path) -> list[Path]:
    """
    Écrit un fichier <libellé>__<métrique>.csv par run, et pour les
    métriques de ratio un fichier d'enveloppe min/max combiné. Les CSV
    d'entrée ne sont jamais modifiés.

    Args:
        run_dirs: Répertoires de runs (ou d'ablation)
        metric: Colonne de télémétrie
        smooth: Fenêtre de moyenne mobile (1 = aucune)
        out_dir: Répertoire de sortie

    Returns:
        Chemins écrits, dans l'ordre des entrées
    """
    sources = find_telemetry(run_dirs)
    out_dir.mkdir(parents=True, exist_ok=True)

    written: list[Path] = []
    envelope_parts: list[pd.DataFrame] = []
    for source in sources:
        df = read_csv(source.path)
        series = metric_series(df, metric, smooth)
        written.append(write_frame(series, out_dir / f"{source.label}__{metric}.csv"))

        if metric in RATIO_METRICS:
            envelope_parts.append(pd.DataFrame({
                f"{source.label}_min": moving_average(df[TelemetryCols.RATIO_LOG_MIN], smooth),
                f"{source.label}_max": moving_average(df[TelemetryCols.RATIO_LOG_MAX], smooth),
            }))

    if envelope_parts:
        envelope = pd.concat(envelope_parts, axis=1)
        envelope.insert(0, STEP_COLUMN, range(len(envelope)))
        written.append(write_frame(envelope, out_dir / ENVELOPE_FILE))

    logger.info(f"Report: {len(written)} fichiers écrits dans {out_dir}")
    return written
