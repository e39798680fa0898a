# src/gmpo_lab/commands/checks.py
# Commandes grad-check et amgm-check

import argparse
from pathlib import Path

from gmpo_lab.commands.common import non_negative_int, positive_int, write_model, write_resolved_config
from gmpo_lab.core.constants import (
    AMGM_DEFAULT_INSTANCES, AMGM_TOLERANCE, CHECK_REPORT_FILE, FINITE_DIFF_STEP,
    GRAD_CHECK_DEFAULT_INSTANCES, GRAD_CHECK_TOLERANCE, ExitCode, SuccessMessages
)
from gmpo_lab.core.exceptions import CheckFailedError
from gmpo_lab.core.oracle import amgm_sweep, grad_check
from gmpo_lab.core.utils.folder_manager import create_run_directory, get_run_file_path, resolve_out_dir
from gmpo_lab.core.utils.logging_config import get_logger
from gmpo_lab.models.check_reports import CheckConfig

logger = get_logger()


def register(subparsers: argparse._SubParsersAction) -> None:
    grad = subparsers.add_parser("grad-check", help="Gradient analytique contre différences finies")
    grad.add_argument("--instances", type=positive_int, default=GRAD_CHECK_DEFAULT_INSTANCES)
    grad.add_argument("--seed", type=non_negative_int, default=0)
    grad.add_argument("--out", type=Path, help="Répertoire de sortie")
    grad.set_defaults(handler=execute_grad_check)

    amgm = subparsers.add_parser("amgm-check", help="Vérifie |J_GMPO| <= |J_GRPO| sans clipping")
    amgm.add_argument("--instances", type=positive_int, default=AMGM_DEFAULT_INSTANCES)
    amgm.add_argument("--seed", type=non_negative_int, default=0)
    amgm.add_argument("--out", type=Path, help="Répertoire de sortie")
    amgm.set_defaults(handler=execute_amgm_check)


def _prepare(out: Path | None, config: CheckConfig) -> Path:
    run_dir = create_run_directory(resolve_out_dir(out, config.command))
    write_resolved_config(run_dir, config)
    return run_dir


def execute_grad_check(args: argparse.Namespace) -> int:
    config = CheckConfig(
        command="grad-check",
        instances=args.instances,
        seed=args.seed,
        tolerance=GRAD_CHECK_TOLERANCE,
        step=FINITE_DIFF_STEP,
    )
    run_dir = _prepare(args.out, config)

    report = grad_check(config.instances, config.seed, FINITE_DIFF_STEP, config.tolerance)
    write_model(get_run_file_path(run_dir, CHECK_REPORT_FILE), report)
    print(
        f"grad-check: erreur relative max={report.max_rel_error:.3e} "
        f"(tolérance {report.tolerance:g}), incohérences de support={report.support_mismatches}"
    )

    if not report.passed:
        raise CheckFailedError(
            f"grad-check échoué (objectif {report.worst_objective}, paramètre {report.worst_parameter}); "
            f"reproduire avec --seed {config.seed} --instances {config.instances}"
        )
    logger.info(SuccessMessages.GRAD_CHECK_PASSED)
    return ExitCode.SUCCESS


def execute_amgm_check(args: argparse.Namespace) -> int:
    config = CheckConfig(
        command="amgm-check",
        instances=args.instances,
        seed=args.seed,
        tolerance=AMGM_TOLERANCE,
    )
    run_dir = _prepare(args.out, config)

    report = amgm_sweep(config.instances, config.seed)
    write_model(get_run_file_path(run_dir, CHECK_REPORT_FILE), report)
    print(
        f"amgm-check: {report.violations} violations, marge minimale={report.worst_margin:.3e}, "
        f"erreur d'égalité max={report.max_equality_error:.3e}"
    )

    if not report.passed:
        index = report.worst_instance['index'] if report.worst_instance else None
        raise CheckFailedError(
            f"amgm-check échoué ({report.violations} violations, pire instance {index}); "
            f"reproduire avec --seed {config.seed} --instances {config.instances}"
        )
    logger.info(SuccessMessages.AMGM_CHECK_PASSED)
    return ExitCode.SUCCESS
