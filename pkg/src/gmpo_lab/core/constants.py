# src/gmpo_lab/core/constants.py
# Constantes centralisées du laboratoire

import math
import os
from pathlib import Path

# ============================================================================
# APPLICATION
# ============================================================================

APP_NAME = "gmpo_lab"
APP_VERSION = "0.1.0"
APP_DESCRIPTION = "Laboratoire d'optimisation de politique GMPO / GRPO à l'échelle du bureau"

# ============================================================================
# CHEMINS DE BASE
# ============================================================================

# Répertoire racine du laboratoire (logs), surchargeable par variable d'environnement
LAB_HOME_ENV = "GMPO_LAB_HOME"
APP_ROOT_DIR = Path(os.getenv(LAB_HOME_ENV, str(Path.home() / APP_NAME)))

LOGS_DIR = APP_ROOT_DIR / "logs"
APP_LOG_FILE = LOGS_DIR / "lab.log"
RUN_LOG_FILE = LOGS_DIR / "runs.log"

# Racine des sorties quand --out n'est pas fourni
OUTPUT_ROOT_ENV = "GMPO_LAB_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = Path("runs")

# ============================================================================
# NOMS DE FICHIERS PAR RUN
# ============================================================================

# Structure: <out>/
TELEMETRY_FILE = "telemetry.csv"
CHECKPOINT_FILE = "policy_checkpoint.txt"
SUMMARY_FILE = "summary.json"
RESOLVED_CONFIG_FILE = "resolved_config.json"
ABORT_DUMP_FILE = "abort_dump.json"
CHECK_REPORT_FILE = "check_report.json"
COMPARISON_FILE = "comparison.csv"
COMPARISON_SUMMARY_FILE = "comparison_summary.json"

# ============================================================================
# COLONNES DE LA TÉLÉMÉTRIE (schéma CSV stable)
# ============================================================================

class TelemetryCols:
    """Noms des colonnes du CSV de télémétrie, dans l'ordre d'écriture."""
    ROUND = "round"
    UPDATE = "update"
    RATIO_LOG_MIN = "ratio_log_min"
    RATIO_LOG_MAX = "ratio_log_max"
    MEAN_ENTROPY = "mean_entropy"
    KL_REF = "kl_ref"
    KL_OLD = "kl_old"
    MEAN_REWARD = "mean_reward"
    CLIP_FRACTION = "clip_fraction"
    OBJECTIVE_VALUE = "objective_value"

TELEMETRY_COLUMNS = [
    TelemetryCols.ROUND,
    TelemetryCols.UPDATE,
    TelemetryCols.RATIO_LOG_MIN,
    TelemetryCols.RATIO_LOG_MAX,
    TelemetryCols.MEAN_ENTROPY,
    TelemetryCols.KL_REF,
    TelemetryCols.KL_OLD,
    TelemetryCols.MEAN_REWARD,
    TelemetryCols.CLIP_FRACTION,
    TelemetryCols.OBJECTIVE_VALUE,
]

TELEMETRY_INT_COLUMNS = [TelemetryCols.ROUND, TelemetryCols.UPDATE]

# Métriques de ratio pour lesquelles le report produit une enveloppe min/max
RATIO_METRICS = [TelemetryCols.RATIO_LOG_MIN, TelemetryCols.RATIO_LOG_MAX]

# ============================================================================
# NORMALISATION DES AVANTAGES
# ============================================================================

# Garde de division pour l'écart-type de population
ADVANTAGE_STD_FLOOR = 1e-8
ADVANTAGE_STD_MODE = "population"

# ============================================================================
# SEUILS DE CLIPPING PAR DÉFAUT
# ============================================================================

# GMPO: epsilon en espace log, bornes (e^-0.4, e^0.4)
GMPO_DEFAULT_LOG_EPSILON = 0.4

# GRPO: bornes linéaires (1 - eps, 1 + eps)
GRPO_DEFAULT_EPSILON = 0.2

# Variante "clip higher" de GRPO
GRPO_CLIP_HIGHER_UPPER = 1.28

# Balayage des seuils (epsilon log), inf = sans clipping
THRESHOLD_SWEEP = [0.2, 0.4, 0.8, math.inf]

# ============================================================================
# POLITIQUE TABULAIRE
# ============================================================================

DEFAULT_NUM_BUCKETS = 4096
DEFAULT_CONTEXT_ORDER = 2

# Cache LRU du hachage des contextes
BUCKET_HASH_CACHE_SIZE = 65536

CHECKPOINT_MAGIC = "gmpo-lab policy checkpoint v1"

# ============================================================================
# ENTRAÎNEMENT
# ============================================================================

DEFAULT_GROUP_SIZE = 8
DEFAULT_PROMPTS_PER_ROUND = 128
DEFAULT_INNER_UPDATES = 8

# Fenêtre de la moyenne mobile des récompenses du résumé
REWARD_MOVING_AVERAGE_WINDOW = 50

KL_ESTIMATOR_DESCRIPTION = (
    "moyenne sur les tokens échantillonnés de log pi_theta - log pi_ref "
    "(estimateur on-sample, pas la KL exacte)"
)

# ============================================================================
# ORACLES
# ============================================================================

FINITE_DIFF_STEP = 1e-5
GRAD_CHECK_TOLERANCE = 1e-6
GRAD_CHECK_DEFAULT_INSTANCES = 100
# Plancher absolu du dénominateur de l'erreur relative
GRAD_CHECK_DENOM_FLOOR = 1e-12
# Marge autour des coudes de clipping, en multiples de h
KINK_MARGIN_STEPS = 10

AMGM_TOLERANCE = 1e-12
AMGM_EQUALITY_TOLERANCE = 1e-9
AMGM_DEFAULT_INSTANCES = 10_000
AMGM_MAX_LENGTH = 50

# Domaine de l'évaluation en espace linéaire
LINEAR_ORACLE_MAX_LENGTH = 12
LINEAR_ORACLE_MAX_LOG_RATIO = 5.0

# ============================================================================
# TÂCHES SYNTHÉTIQUES
# ============================================================================

# Au-delà, expected_uniform_reward passe en Monte-Carlo
EXACT_ENUMERATION_LIMIT = 1_000_000
MONTE_CARLO_SAMPLES = 100_000

# Plage de récompense uniforme attendue pour les prompts livrés
UNIFORM_REWARD_RANGE = (0.02, 0.9)

class TaskName:
    """Noms des tâches disponibles."""
    COPY = "copy"
    PARITY = "parity"

# ============================================================================
# CODES DE SORTIE CLI
# ============================================================================

class ExitCode:
    """Codes de sortie standardisés de la ligne de commande."""
    SUCCESS = 0
    USAGE = 1
    CHECK_FAILURE = 2
    RUNTIME_ABORT = 3

# ============================================================================
# MESSAGES D'ERREUR STANDARDISÉS
# ============================================================================

class ErrorMessages:
    """Messages d'erreur standardisés."""
    GROUP_TOO_SMALL = "Un groupe doit contenir au moins 2 rollouts (reçu {})"
    NON_BINARY_REWARD = "Les récompenses doivent être binaires (0 ou 1), reçu {}"
    MIXED_PROMPTS = "Tous les rollouts d'un groupe doivent partager le même prompt"
    NON_FINITE = "Valeur non finie: {}"
    SHAPE_MISMATCH = "Dimensions incompatibles: {} contre {}"
    EMPTY_BATCH = "Le batch est vide"
    EMPTY_MASK = "Au moins un token doit être valide dans le masque"
    POSITIVE_OLD_LOGP = "Les log-probabilités de l'ancienne politique doivent être <= 0"
    TOKEN_OUT_OF_RANGE = "Token {} hors du vocabulaire (taille {})"
    BAD_CLIP_BOUNDS = "Bornes de clipping invalides: il faut L <= 0 <= U (reçu L={}, U={})"
    WRONG_CLIP_MODE = "Mode de clipping {} incompatible avec l'objectif {}"
    EMPTY_PROMPT_SET = "L'ensemble de prompts est vide"
    NON_FINITE_GRADIENT = "Gradient non fini détecté (round {}, update {})"
    ORACLE_DOMAIN = "Instance hors du domaine de l'oracle: {}"
    MISSING_METRIC = "Métrique '{}' absente. Colonnes disponibles: {}"
    NO_TELEMETRY = "Aucun fichier de télémétrie trouvé dans {}"
    CONFIG_SYNTAX = "Configuration {}: JSON invalide ligne {}, colonne {}: {}"
    CONFIG_FIELD = "Configuration {}: champ '{}': {}"
    IO_FAILURE = "Échec d'écriture de {}: {}"

# ============================================================================
# MESSAGES DE SUCCÈS STANDARDISÉS
# ============================================================================

class SuccessMessages:
    """Messages de succès standardisés."""
    TRAINING_DONE = "Entraînement terminé avec succès"
    ABLATION_DONE = "Ablation terminée avec succès"
    GRAD_CHECK_PASSED = "Vérification des gradients réussie"
    AMGM_CHECK_PASSED = "Vérification AM-GM réussie"
    REPORT_DONE = "Fichiers de tracé générés avec succès"
