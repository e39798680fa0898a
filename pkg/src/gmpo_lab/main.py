# src/gmpo_lab/main.py
# Point d'entrée de la ligne de commande

import argparse
import logging
import sys
from typing import NoReturn, Sequence

from gmpo_lab.commands import register_commands
from gmpo_lab.core.constants import APP_DESCRIPTION, APP_NAME, APP_VERSION, ExitCode
from gmpo_lab.core.exceptions import LabError
from gmpo_lab.core.utils.logging_config import attach_file_handlers, get_logger, setup_logging

logger = get_logger()


class LabArgumentParser(argparse.ArgumentParser):
    """Parser dont les erreurs d'usage sortent avec le code 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(ExitCode.USAGE, f"{self.prog}: erreur: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = LabArgumentParser(prog=APP_NAME.replace("_", "-"), description=APP_DESCRIPTION)
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default="INFO",
        help="Niveau de log de la console",
    )
    parser.add_argument("--no-log-file", action="store_true", help="N'écrit pas les fichiers de log")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=LabArgumentParser)
    register_commands(subparsers)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """
    Exécute une commande et retourne son code de sortie.

    Args:
        argv: Arguments (sys.argv[1:] par défaut)

    Returns:
        0 succès, 1 usage, 2 vérification échouée, 3 interruption
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else ExitCode.USAGE

    setup_logging(getattr(logging, args.log_level))
    if not args.no_log_file:
        try:
            attach_file_handlers()
        except OSError as e:
            logger.warning(f"Fichiers de log indisponibles: {e}")

    try:
        return args.handler(args)
    except LabError as e:
        logger.error(e.message)
        return e.exit_code


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
