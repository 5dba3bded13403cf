#!/usr/bin/env python3
"""
Default Configuration

This module defines default configuration values for the simulator.
"""

# Longest trajectory kept per user; also the number of position rows
MAX_SEQ_LEN = 200

# Latent dimensions a recommender may use
SUPPORTED_DIMS = (8, 16, 32, 64, 128)

# Initial distribution shared by every model in one experiment
INIT_MEAN = 0.0
INIT_STD = 0.1
DEFAULT_INIT_SEED = 0

# Local training (plain SGD)
DEFAULT_LEARNING_RATE = 0.002
DEFAULT_BATCH_SIZE = 16
DEFAULT_MAX_EPOCHS = 50
DEFAULT_DROPOUT = 0.2

# Dataset preparation
DEFAULT_MIN_INTERACTIONS = 10
PRIOR_FRACTION = 0.15
REFERENCE_FRACTION = 0.15
KMEANS_MAX_ITER = 100
DEFAULT_REGION_COUNT = 5

# Collaborative learning
DEFAULT_ROUNDS = 3
DEFAULT_GROUP_SIZE = 4
DEFAULT_DISTILL_WEIGHT = 1.0

# Attack
SHADOW_MAX_STEP_KM = 5.0
FABRICATION_ATTEMPTS = 1000
DEFAULT_SHADOW_COUNT = 5
# Shadow sequences are cut to the POIs leading up to the target
SHADOW_WINDOW = 3
# Prior-pool users turned into public models for attacker training
MIRROR_USERS = 20
DEFAULT_SHADOW_DIM = 64
SHADOW_MAX_EPOCHS = 200
SHADOW_TOLERANCE = 1e-5
SHADOW_PATIENCE = 3
SHADOW_LEARNING_RATE = 0.01
ATTACK_HIDDEN = (64, 32, 8)
ATTACK_EPOCHS = 300
ATTACK_LEARNING_RATE = 0.05
ATTACK_BATCH_SIZE = 32
VISITED_THRESHOLD = 0.5
VARIANCE_FLOOR = 1e-12
REGION_NOISE_FLOOR = 0.01
DEFAULT_IMIA_QUANTILE = 0.9

# Defense
DEFAULT_MU = 0.6
UNRELATED_COUNT = 5
DEFAULT_SENSITIVE_COUNT = 10
AGD_TOLERANCE = 1e-4
AGD_PATIENCE = 3

# Evaluation
DEFAULT_TOP_K = 10
CANDIDATE_COUNT = 200

# Runs
DEFAULT_SEEDS = (1, 2, 3)
DEFAULT_MAX_USERS = 50

# Default synthetic world
DEFAULT_SYNTHETIC = {
    'users': 400,
    'pois': 500,
    'regions': 5,
    'categories': 20,
    'concentration': 1.0,
    'max_regions_per_user': 3,
    'favorites_per_region': 15,
    'mean_length': 50,
    'min_length': 12,
    'region_spread_km': 1.5,
    'city_span_km': 40.0,
    'origin': [40.75, -73.98],
    'seed': 7,
}

# Default configuration dictionary
DEFAULT_CONFIG = {
    'dataset': {
        'source': 'synthetic',
        'csv_path': None,
        'min_interactions': DEFAULT_MIN_INTERACTIONS,
        'synthetic': DEFAULT_SYNTHETIC,
    },
    'protocol': 'model_sharing',
    'attacks': ['ptia'],
    'defense': {
        'kind': 'none',
        'ldp_lambda': 0.0,
        'sensitive_count': DEFAULT_SENSITIVE_COUNT,
        'sensitive_pois': None,
        'mu': DEFAULT_MU,
        'unrelated_count': UNRELATED_COUNT,
        'pretrain_epochs': ATTACK_EPOCHS,
        'max_epochs': DEFAULT_MAX_EPOCHS,
        'tolerance': AGD_TOLERANCE,
    },
    'model': {
        'latent_dim': 64,
        'latent_dims': list(SUPPORTED_DIMS),
        'init_std': INIT_STD,
        'init_seed': DEFAULT_INIT_SEED,
    },
    'train': {
        'learning_rate': DEFAULT_LEARNING_RATE,
        'batch_size': DEFAULT_BATCH_SIZE,
        'max_epochs': DEFAULT_MAX_EPOCHS,
        'dropout': DEFAULT_DROPOUT,
    },
    'collab': {
        'rounds': DEFAULT_ROUNDS,
        'group_size': DEFAULT_GROUP_SIZE,
        'distill_weight': DEFAULT_DISTILL_WEIGHT,
    },
    'attack': {
        'shadow_count': DEFAULT_SHADOW_COUNT,
        'shadow_dim': DEFAULT_SHADOW_DIM,
        'shadow_window': SHADOW_WINDOW,
        'mirror_users': MIRROR_USERS,
        'regions': DEFAULT_REGION_COUNT,
        'region_noise_floor': REGION_NOISE_FLOOR,
        'imia_quantile': DEFAULT_IMIA_QUANTILE,
        'mlp_epochs': ATTACK_EPOCHS,
        'mlp_learning_rate': ATTACK_LEARNING_RATE,
        'shadow_epochs': SHADOW_MAX_EPOCHS,
        'shadow_learning_rate': SHADOW_LEARNING_RATE,
        'f1_mode': 'per_region',
    },
    'eval': {
        'top_k': DEFAULT_TOP_K,
        'candidates': CANDIDATE_COUNT,
    },
    'run': {
        'seeds': list(DEFAULT_SEEDS),
        'max_users': DEFAULT_MAX_USERS,
        'workers': 1,
        'output_dir': None,
    },
    'sweep': None,
}

# Environment variable naming the output root for run directories
OUTPUT_ROOT_ENV = "POI_PRIVACY_SIM_OUTPUT"
DEFAULT_OUTPUT_ROOT = "runs"

# Application name
APP_NAME = "POI Privacy Simulator"

# Application ID (used for the console script and file magic)
APP_ID = "poi-privacy-sim"

# Application version
APP_VERSION = "0.3.0"

# Application description
APP_DESCRIPTION = "Trajectory inference attacks and defenses for decentralized POI recommenders"
