"""Constants for the hybrid level-set estimator."""

from __future__ import annotations

# Geometry tolerances
EPS_GEOM_RELATIVE = 1e-9
EPS_GEOM_FLOOR = 1e-12
CHORD_TOLERANCE_RELATIVE = 1e-3
BRUTE_FORCE_GRID_DENSITY = 200

# Raster defaults
DEFAULT_RESOLUTION = 512
MIN_RESOLUTION = 16
BBOX_BANDWIDTH_PADDING = 3.0

# Dichotomy defaults
DEFAULT_J = 40
BRACKET_LOW_FACTOR = 1e-3
BRACKET_HIGH_FACTOR = 2.0
MAX_BRACKET_EXPANSIONS = 30
DEFAULT_NU = 1.0

# Kernel density estimation
LSCV_RESTART_FACTORS = (1.0, 0.5, 2.0)
LSCV_SIMPLEX_STEP = 0.1
LSCV_XATOL = 1e-7
LSCV_MAX_ITER = 400
# log-h floor: this fraction of the smallest nonzero coordinate spacing
LSCV_MIN_SPACING_FRACTION = 0.1
KDE_CHUNK_SIZE = 2048
MIN_LSCV_SAMPLE = 5

# Splitter
DEFAULT_SMOOTHNESS_ORDER = 2
DIMENSION = 2
MARGIN_REFITS = 30

# Calibration grid
DEFAULT_TAU = 0.9
DEFAULT_I = 10
DEFAULT_DELTA_CAP = 0.01
DEFAULT_B = 500
DEFAULT_M_MC = 3000
DEFAULT_K_GRID = (1, 3, 5)
MIN_CALIBRATION_SAMPLE = 30
DEGENERATE_CELL_ERROR = 1.0
DEGENERATE_WARNING_FRACTION = 0.2
ERROR_METRIC_PROBABILITY = "probability"
ERROR_METRIC_LEBESGUE = "lebesgue"
LEBESGUE_RESOLUTION = 128

# Synthetic references
ORACLE_GAMMA_COUNT = 60
ORACLE_GAMMA_SPAN = (0.01, 2.0)
ORACLE_BAND_CELLS = 3
CONTAINMENT_DILATION_CELLS = 2

# Environment variables
ENV_THREADS = "LEVELSET_THREADS"
DEFAULT_THREADS = 1

# Output files
REPORT_FILE = "report.json"
TIMINGS_FILE = "timings.json"
GEOJSON_FILE = "region.geojson"
FIGURE_FILE = "figure.svg"
EXPERIMENT_JSON_FILE = "experiment.json"
EXPERIMENT_CSV_FILE = "experiment.csv"
REPORT_SCHEMA_VERSION = 1
SVG_HASH_SALT = "hybrid-levelset"

# CSV labels
LABEL_CASE = "case"
LABEL_CONTROL = "control"
UNLABELLED = "all"

# Logging format
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
