# src/gmpo_lab/commands/ablate.py
# Commande ablate: objectifs et seuils, une ou plusieurs graines, en parallèle

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from gmpo_lab.commands.common import positive_int, write_model, write_resolved_config
from gmpo_lab.commands.train import add_config_arguments, build_config, run_training
from gmpo_lab.core.ablation import AblationCell, ablation_cells, comparison_frame, win_counts
from gmpo_lab.core.constants import (
    COMPARISON_FILE, COMPARISON_SUMMARY_FILE, SUMMARY_FILE, ExitCode, SuccessMessages
)
from gmpo_lab.core.telemetry import write_frame
from gmpo_lab.core.utils.folder_manager import (
    copy_run_directory, create_run_directory, get_cell_dir, get_run_file_path, resolve_out_dir
)
from gmpo_lab.core.utils.logging_config import get_logger
from gmpo_lab.models.experiment_config import TrainConfig
from gmpo_lab.models.run_summary import AblationSummary, RunSummary

logger = get_logger()

COMMAND = "ablate"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("ablate", help="Compare les objectifs et les seuils de clipping")
    add_config_arguments(parser)
    parser.add_argument("--seeds", type=positive_int, default=1, help="Nombre de graines (seed .. seed+N-1)")
    parser.add_argument("--jobs", type=positive_int, default=1, help="Processus parallèles")
    parser.add_argument("--with-clip-higher", action="store_true", help="Ajoute la cellule GRPO (0.8, 1.28)")
    parser.add_argument("--no-thresholds", action="store_true", help="Sans le balayage des seuils")
    parser.set_defaults(handler=execute)


@dataclass(frozen=True)
class CellJob:
    cell: str
    seed: int
    config: TrainConfig
    run_dir: Path


def run_cell(job: CellJob) -> tuple[str, int, RunSummary]:
    """Exécute une cellule pour une graine (fonction de module, sérialisable par les workers)."""
    summary = run_training(job.config, job.run_dir)
    logger.info(f"Cellule {job.cell} (graine {job.seed}) terminée")
    return job.cell, job.seed, summary


def _jobs_for(cells: list[AblationCell], seeds: list[int], root: Path) -> list[CellJob]:
    return [
        CellJob(cell.name, seed, cell.config.model_copy(update={'seed': seed}), get_cell_dir(root, cell.name, seed))
        for cell in cells if cell.alias_of is None
        for seed in seeds
    ]


def run_ablation(
    base: TrainConfig,
    root: Path,
    seeds: int = 1,
    jobs: int = 1,
    with_clip_higher: bool = False,
    with_thresholds: bool = True,
) -> AblationSummary:
    """
    Lance toutes les cellules et écrit comparison.csv et comparison_summary.json.

    Les cellules partagent les graines de collecte; chaque (cellule, graine)
    écrit seule dans <root>/<cellule>/seed_<s>. Le résultat ne dépend pas
    de `jobs`.

    Args:
        base: Configuration commune
        root: Répertoire racine de l'ablation
        seeds: Nombre de graines à partir de base.seed
        jobs: Processus parallèles (1 = séquentiel)
        with_clip_higher: Ajoute la cellule GRPO clip-higher
        with_thresholds: Ajoute le balayage des seuils

    Returns:
        AblationSummary
    """
    create_run_directory(root)
    write_resolved_config(root, base)

    cells = ablation_cells(base, with_clip_higher, with_thresholds)
    seed_list = [base.seed + i for i in range(seeds)]
    pending = _jobs_for(cells, seed_list, root)
    logger.info(f"Ablation: {len(cells)} cellules x {len(seed_list)} graines, {jobs} processus")

    if jobs == 1:
        outcomes = [run_cell(job) for job in pending]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_cell, pending))
    summaries = {(cell, seed): summary for cell, seed, summary in outcomes}

    for cell in cells:
        if cell.alias_of is None:
            continue
        for seed in seed_list:
            copy_run_directory(get_cell_dir(root, cell.alias_of, seed), get_cell_dir(root, cell.name, seed))
            summaries[(cell.name, seed)] = RunSummary.model_validate_json(
                get_run_file_path(get_cell_dir(root, cell.name, seed), SUMMARY_FILE).read_text(encoding='utf-8')
            )

    ordered = [(cell.name, summaries[(cell.name, seed)]) for cell in cells for seed in seed_list]
    frame = comparison_frame(ordered)
    write_frame(frame, get_run_file_path(root, COMPARISON_FILE))

    summary = AblationSummary(
        cells=[cell.name for cell in cells],
        seeds=seed_list,
        wins=win_counts(frame),
    )
    write_model(get_run_file_path(root, COMPARISON_SUMMARY_FILE), summary)
    return summary


def execute(args: argparse.Namespace) -> int:
    base = build_config(args)
    root = resolve_out_dir(args.out, COMMAND)
    summary = run_ablation(
        base,
        root,
        seeds=args.seeds,
        jobs=args.jobs,
        with_clip_higher=args.with_clip_higher,
        with_thresholds=not args.no_thresholds,
    )

    logger.info(SuccessMessages.ABLATION_DONE)
    print(f"Ablation: {len(summary.cells)} cellules, graines {summary.seeds}, sorties dans {root}")
    for win in summary.wins:
        print(f"  {win.criterion}: {win.winner} bat {win.loser} sur {win.wins}/{win.seeds} graines")
    return ExitCode.SUCCESS
