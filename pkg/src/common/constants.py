"""
Constants and configuration values for the gated policy-gradient lab.
"""

# Application Information
APP_NAME = "gated-pg"
VERSION = "0.2.0"

# Report / document schema
REPORT_SCHEMA_VERSION = "1.0"
SUPPORTED_SCHEMA_MAJOR = 1

# Numerics
PROB_FLOOR = 1e-30  # clamp before taking logs
SIMPLEX_TOL = 1e-12
CENTERING_TOL = 1e-12
BELLMAN_TOL = 1e-10

# Gap sweep defaults (tabular escape-time protocol)
DEFAULT_GAPS = (0.5, 0.2, 0.1, 0.05, 0.03, 0.02, 0.015, 0.012, 0.01)
DEFAULT_INIT_LOGITS = (-1.0, 5.0, 1.0)
DEFAULT_DT = 1.0
DEFAULT_MAX_TIME = 10_000_000
DEFAULT_ETA = 1.0
DEFAULT_SWEEP_METHODS = ("pg", "dg")

# Three-arm demo instance and its bad initialization
DEMO_REWARDS = (1.0, 0.9, 0.1)
DEMO_INIT_POLICY = (0.01, 0.05, 0.94)

# Flow command
FLOW_MAX_TIME = 100_000
FLOW_RECORD_EVERY = 10

# Discrete updates
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 1_000_000
RATE_FIT_MIN_POINTS = 20

# MDP
CORNER_DEPTH = 6.0
OPTIMAL_MARGIN = 1e-8
CONVERGED_TV = 1e-3

# Theory checks
DEFAULT_EPS_BAR = 0.5
DEFAULT_GRID_RESOLUTION = 400
DEFAULT_SHELLS = (0.1, 0.01, 0.001)

# Shared-parameter counterexample
COUNTEREXAMPLE_GRID = 10_000
COUNTEREXAMPLE_P_RANGE = (0.001, 0.999)
COUNTEREXAMPLE_ROOT_TOL = 1e-10
FINITE_DIFF_STEP = 1e-6
DG_TEMPERATURE_SWEEP = (0.1, 0.5, 1.0, 2.0, 5.0)

# Output schemas
SWEEP_COLUMNS = ("method", "gap", "inv_gap", "escape_time", "escaped")
COUNTEREXAMPLE_COLUMNS = ("p", "F_PG", "F_EG", "F_DG")

# File Names
LOG_FILE = "gated_pg.log"
SWEEP_FILE = "sweep.csv"
SWEEP_SUMMARY_FILE = "sweep_summary.json"
COUNTEREXAMPLE_GRID_FILE = "counterexample_grid.csv"
COUNTEREXAMPLE_REPORT_FILE = "counterexample.json"
MDP_RUN_FILE = "mdp_run.csv"
MDP_SUMMARY_FILE = "mdp_run.json"
FLOW_FILE_TEMPLATE = "flow_{gate}.csv"
FLOW_SUMMARY_FILE = "flow_summary.json"
VERIFY_REPORT_FILE = "verify.json"

# Environment variables (read through python-dotenv at start-up)
ENV_OUT_DIR = "GATED_PG_OUT_DIR"
ENV_SEED = "GATED_PG_SEED"
DEFAULT_OUT_DIR = "out"
DEFAULT_SEED = 0

# Exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_VERIFICATION_FAILED = 2
EXIT_NUMERICAL_ABORT = 3

# Logging Configuration
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVEL = "INFO"
