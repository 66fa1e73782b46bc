"""Constants used throughout tabembed."""

# Embedding defaults
DEFAULT_EMBED_DIM = 16
DEFAULT_NUM_LAYERS = 2
DEFAULT_NUM_WIDTH = 500
DEFAULT_EXU_CAP = 1.0
DEFAULT_CAT_LAYERS = 1
DEFAULT_DISCRETIZE_BUCKETS = 20
DEFAULT_TEMPERATURE = 1.0
DEFAULT_HASH_FUNCTIONS = 2
DEFAULT_HASH_BUCKET_FRACTION = 4  # v_hat = ceil(v / 4)
DEFAULT_NUMERICAL_METHOD = "deep"
DEFAULT_CATEGORICAL_METHOD = "deep"

# Backbone
DEFAULT_BACKBONE_HIDDEN = (64, 64)

# Training protocol
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_BATCH_SIZE = 1024
DEFAULT_PATIENCE = 5
DEFAULT_MAX_EPOCHS = 50
DEFAULT_N_SEEDS = 5
DEFAULT_MASTER_SEED = 0
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Numerics
BCE_EPS = 1e-7
GRADCHECK_EPS = 1e-6

# Data
MIN_SPLIT_ROWS = 10
SPLIT_RATIOS = (8, 1, 1)
SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST = "train", "val", "test"
NORMALIZATIONS = ("minmax", "zscore")
DEFAULT_NORMALIZATION = "minmax"
DEFAULT_LABEL_COLUMN = "label"
POSITIVE_LABEL_VALUES = ["1", "1.0", "true", "yes", "click", "positive"]
NEGATIVE_LABEL_VALUES = ["0", "0.0", "false", "no", "noclick", "negative"]
ZIPF_EXPONENT = 1.2
DEFAULT_SYNTH_ROWS = 5000
DEFAULT_SYNTH_VOCAB = 1000
LABEL_NOISE = 0.05

# Environment
SEED_ENV_VAR = "DTE_SEED"

# Output file names
DEFAULT_OUTPUT_DIR = "./tabembed_results"
REPORT_FILE = "report.json"
EPOCHS_FILE = "epochs.csv"
CHECKPOINT_FILE = "model.ckpt"
SWEEP_FILE = "sweep.csv"
PARAMS_FILE = "params.csv"
COMPARE_FILE = "compare.csv"
CSV_FLOAT_FORMAT = "%.6g"

# Checkpoint container
CHECKPOINT_MAGIC = "TABEMBED"
CHECKPOINT_FORMAT_VERSION = 1

# CLI exit codes
EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2
EXIT_DATA_ERROR = 3
