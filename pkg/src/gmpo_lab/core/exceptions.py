# Exceptions personnalisées pour le laboratoire

from typing import Any

from gmpo_lab.core.constants import ExitCode, ErrorMessages


class LabError(Exception):
    """Base de toutes les erreurs du laboratoire."""
    exit_code = ExitCode.RUNTIME_ABORT

    def __init__(self, message="Erreur du laboratoire."):
        self.message = message
        super().__init__(self.message)

class InvalidGroupError(LabError):
    """Exception levée lorsqu'un groupe de rollouts est mal formé."""
    def __init__(self, message="Groupe de rollouts invalide."):
        super().__init__(message)

class InvalidValueError(LabError):
    """Exception levée pour une valeur numérique invalide (non finie, hors domaine)."""
    def __init__(self, message="Valeur invalide."):
        super().__init__(message)

class ShapeError(LabError):
    """Exception levée lorsque des dimensions ne correspondent pas."""
    def __init__(self, message="Dimensions incompatibles."):
        super().__init__(message)

class InvalidArgumentError(LabError):
    """Exception levée pour un argument invalide (batch vide, mode incompatible)."""
    def __init__(self, message="Argument invalide."):
        super().__init__(message)

class TokenIndexError(LabError, IndexError):
    """Exception levée lorsqu'un token sort du vocabulaire."""
    def __init__(self, token: int, vocab_size: int):
        super().__init__(ErrorMessages.TOKEN_OUT_OF_RANGE.format(token, vocab_size))

class ConfigError(LabError):
    """Exception levée lorsque la configuration est invalide."""
    exit_code = ExitCode.USAGE

    def __init__(self, message="La configuration est invalide."):
        super().__init__(message)

class NonFiniteGradientError(LabError):
    """Exception levée lorsqu'un gradient non fini interrompt l'entraînement."""
    def __init__(self, message: str, dump: dict[str, Any]):
        self.dump = dump
        super().__init__(message)

class OracleDomainError(LabError):
    """Exception levée lorsqu'une instance sort du domaine d'un oracle."""
    def __init__(self, message="Instance hors du domaine de l'oracle."):
        super().__init__(message)

class CheckFailedError(LabError):
    """Exception levée lorsqu'une vérification (gradients, AM-GM) échoue."""
    exit_code = ExitCode.CHECK_FAILURE

    def __init__(self, message="La vérification a échoué."):
        super().__init__(message)

class MissingMetricError(LabError):
    """Exception levée lorsqu'une métrique demandée est absente de la télémétrie."""
    exit_code = ExitCode.USAGE

    def __init__(self, metric: str, available: list[str]):
        self.available = available
        super().__init__(ErrorMessages.MISSING_METRIC.format(metric, ", ".join(available)))

class CheckpointFormatError(LabError):
    """Exception levée lorsqu'un fichier de checkpoint est illisible."""
    def __init__(self, message="Le fichier de checkpoint est invalide."):
        super().__init__(message)

class OutputWriteError(LabError):
    """Exception levée lorsqu'un fichier de sortie ne peut pas être écrit."""
    def __init__(self, message="Échec d'écriture d'un fichier de sortie."):
        super().__init__(message)

class MissingTelemetryError(LabError):
    """Exception levée lorsqu'un répertoire d'entrée ne contient aucune télémétrie."""
    exit_code = ExitCode.USAGE

    def __init__(self, message="Aucun fichier de télémétrie trouvé."):
        super().__init__(message)
