# src/gmpo_lab/commands/__init__.py
# Enregistrement de toutes les sous-commandes

import argparse

from gmpo_lab.commands.ablate import register as register_ablate
from gmpo_lab.commands.checks import register as register_checks
from gmpo_lab.commands.report import register as register_report
from gmpo_lab.commands.train import register as register_train


def register_commands(subparsers: argparse._SubParsersAction) -> None:
    register_train(subparsers)
    register_ablate(subparsers)
    register_checks(subparsers)
    register_report(subparsers)


__all__ = ["register_commands"]
