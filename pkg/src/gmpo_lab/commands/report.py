# src/gmpo_lab/commands/report.py
# Commande report: séries (step, value) prêtes à tracer

import argparse
from pathlib import Path

from gmpo_lab.commands.common import positive_int, write_resolved_config
from gmpo_lab.core.constants import ExitCode, SuccessMessages
from gmpo_lab.core.report import build_report
from gmpo_lab.core.utils.folder_manager import create_run_directory, resolve_out_dir
from gmpo_lab.core.utils.logging_config import get_logger
from gmpo_lab.models.check_reports import ReportConfig

logger = get_logger()

COMMAND = "report"


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("report", help="Extrait une métrique de la télémétrie")
    parser.add_argument("--in", dest="inputs", type=Path, nargs="+", required=True, help="Répertoires de runs")
    parser.add_argument("--metric", required=True, help="Colonne de télémétrie (ex. mean_entropy)")
    parser.add_argument("--smooth", type=positive_int, default=1, help="Fenêtre de moyenne mobile")
    parser.add_argument("--out", type=Path, help="Répertoire de sortie")
    parser.set_defaults(handler=execute)


def execute(args: argparse.Namespace) -> int:
    config = ReportConfig(inputs=[str(p) for p in args.inputs], metric=args.metric, smooth=args.smooth)
    out_dir = create_run_directory(resolve_out_dir(args.out, COMMAND))

    written = build_report(args.inputs, config.metric, config.smooth, out_dir)
    write_resolved_config(out_dir, config)

    logger.info(SuccessMessages.REPORT_DONE)
    for path in written:
        print(path)
    return ExitCode.SUCCESS
