# src/gmpo_lab/commands/train.py
# Commande train: un entraînement complet et ses fichiers de sortie

import argparse
import math
from pathlib import Path

from pydantic import ValidationError

from gmpo_lab.commands.common import (
    non_negative_int, write_json, write_model, write_resolved_config
)
from gmpo_lab.core.checkpoint import save_checkpoint
from gmpo_lab.core.constants import (
    ABORT_DUMP_FILE, CHECKPOINT_FILE, SUMMARY_FILE, TELEMETRY_FILE,
    ErrorMessages, ExitCode, SuccessMessages
)
from gmpo_lab.core.exceptions import ConfigError, InvalidValueError, NonFiniteGradientError
from gmpo_lab.core.rollout import ClipConfig, ClipMode, ObjectiveKind
from gmpo_lab.core.telemetry import write_csv
from gmpo_lab.core.trainer import Trainer
from gmpo_lab.core.utils.folder_manager import (
    create_run_directory, get_run_file_path, resolve_out_dir
)
from gmpo_lab.core.utils.logging_config import get_logger
from gmpo_lab.models.experiment_config import (
    ClipSettings, TrainConfig, load_config
)
from gmpo_lab.models.run_summary import RunSummary

logger = get_logger()

COMMAND = "train"


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="Fichier de configuration JSON")
    parser.add_argument("--seed", type=non_negative_int, help="Graine (remplace la configuration)")
    parser.add_argument("--rounds", type=non_negative_int, help="Nombre de rounds (remplace total_rounds)")
    parser.add_argument("--out", type=Path, help="Répertoire de sortie")


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train", help="Entraîne une politique et écrit télémétrie, checkpoint et résumé")
    add_config_arguments(parser)
    parser.add_argument(
        "--objective", choices=[k.value for k in ObjectiveKind], help="Objectif d'entraînement"
    )
    lower = parser.add_mutually_exclusive_group()
    lower.add_argument("--clip-lower", type=float, help="Seuil bas en espace log (L = ln eps1 <= 0)")
    lower.add_argument("--clip-lower-linear", type=float, help="Seuil bas linéaire (ex. 0.8 pour GRPO)")
    upper = parser.add_mutually_exclusive_group()
    upper.add_argument("--clip-upper", type=float, help="Seuil haut en espace log (U = ln eps2 >= 0)")
    upper.add_argument("--clip-upper-linear", type=float, help="Seuil haut linéaire (ex. 1.2 pour GRPO)")
    parser.add_argument("--clip-mode", choices=[m.value for m in ClipMode], help="Granularité du clipping")
    parser.set_defaults(handler=execute)


def _linear_to_log(value: float, name: str) -> float:
    if value < 0.0:
        raise ConfigError(f"{name} doit être >= 0 (reçu {value})")
    return math.log(value) if value > 0.0 else -math.inf


def build_config(args: argparse.Namespace) -> TrainConfig:
    """
    Configuration du fichier (ou par défaut), puis surcharges des options.

    Les options de seuil ne remplacent que le côté donné; l'autre côté vient
    de la configuration ou du défaut de l'objectif.

    Raises:
        ConfigError: Fichier invalide ou combinaison d'options invalide
    """
    config = load_config(args.config) if args.config is not None else TrainConfig()
    updates: dict = {}
    if getattr(args, 'objective', None) is not None:
        updates['objective'] = ObjectiveKind(args.objective)
    if args.seed is not None:
        updates['seed'] = args.seed
    if args.rounds is not None:
        updates['total_rounds'] = args.rounds

    lower = getattr(args, 'clip_lower', None)
    upper = getattr(args, 'clip_upper', None)
    if getattr(args, 'clip_lower_linear', None) is not None:
        lower = _linear_to_log(args.clip_lower_linear, "--clip-lower-linear")
    if getattr(args, 'clip_upper_linear', None) is not None:
        upper = _linear_to_log(args.clip_upper_linear, "--clip-upper-linear")
    mode = getattr(args, 'clip_mode', None)

    if lower is not None or upper is not None or mode is not None:
        objective = updates.get('objective', config.objective)
        base = config.clip.to_clip() if config.clip is not None else objective.default_clip()
        try:
            clip = ClipConfig(
                base.lower_log if lower is None else lower,
                base.upper_log if upper is None else upper,
                ClipMode(mode) if mode is not None else base.mode,
            )
        except InvalidValueError as e:
            raise ConfigError(e.message) from e
        updates['clip'] = ClipSettings.from_clip(clip).model_dump()

    if not updates:
        return config
    data = config.model_dump()
    data.update(updates)
    try:
        return TrainConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get('loc', ()))
        raise ConfigError(ErrorMessages.CONFIG_FIELD.format("<options>", field, first['msg'])) from e


def run_training(config: TrainConfig, run_dir: Path) -> RunSummary:
    """
    Exécute un entraînement et écrit ses sorties dans run_dir.

    Fichiers: resolved_config.json, telemetry.csv, policy_checkpoint.txt,
    summary.json; abort_dump.json en cas d'interruption.

    Raises:
        NonFiniteGradientError: Après écriture de la télémétrie partielle et du dump
    """
    create_run_directory(run_dir)
    write_resolved_config(run_dir, config.resolved())

    trainer = Trainer(config)
    try:
        result = trainer.run()
    except NonFiniteGradientError as e:
        write_csv(trainer.telemetry, get_run_file_path(run_dir, TELEMETRY_FILE))
        write_json(get_run_file_path(run_dir, ABORT_DUMP_FILE), e.dump)
        logger.error(f"Entraînement interrompu, dump écrit dans {run_dir / ABORT_DUMP_FILE}")
        raise

    write_csv(result.telemetry, get_run_file_path(run_dir, TELEMETRY_FILE))
    save_checkpoint(result.params, get_run_file_path(run_dir, CHECKPOINT_FILE))
    write_model(get_run_file_path(run_dir, SUMMARY_FILE), result.summary)
    return result.summary


def execute(args: argparse.Namespace) -> int:
    config = build_config(args)
    run_dir = resolve_out_dir(args.out, COMMAND)
    summary = run_training(config, run_dir)

    logger.info(SuccessMessages.TRAINING_DONE)
    print(
        f"{summary.objective.value}: récompense finale={summary.final_mean_reward}, "
        f"pass@1 glouton={summary.greedy_pass_at_1}, sorties dans {run_dir}"
    )
    return ExitCode.SUCCESS
