"""Constants and defaults for ncgmomentum."""

# Trace CSV schema version
TRACE_SCHEMA_VERSION = "V1"

# Rank decisions (SVD cut-off relative to the largest singular value)
RANK_RTOL = 1e-10

# Momentum denominators below this fraction of their Cauchy-Schwarz scale are zero
ZERO_DENOMINATOR_RTOL = 1e-14

# Exact line search refuses directions with p'Ap <= this * ||p||^2
DEGENERATE_DIRECTION_RTOL = 1e-14

# Symmetry / PSD checks on quadratic problems
SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-12

# Strict SPD requirement for the convergence bound check
SPD_RTOL = 1e-10

# Multiplicative slack when comparing a residual against its bound
BOUND_SLACK = 1e-8

# Quadratic benchmark defaults
DEFAULT_QUAD_SIZE = 500
DEFAULT_QUAD_ALPHA = 0.3
DEFAULT_GDM_BETA = 0.9
DEFAULT_QUAD_ITERS = 3000

# Sparse benchmark defaults
DEFAULT_ROWS = 256
DEFAULT_COLS = 1024
DEFAULT_SPARSITY = 5
DEFAULT_SNR_DB = 30.0
DEFAULT_LAMBDA = 0.1
DEFAULT_SPARSE_ITERS = 1000
DEFAULT_SEED = 1

# Decade grid used to tune both delta and lambda
TUNING_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1)

# Final objectives within this relative gap of the best count as ties; the larger step wins
TUNING_TIE_RTOL = 1e-12

# Step size used while tuning lambda
LAMBDA_TUNING_DELTA = 1e-3

# DCA inner solver defaults
DEFAULT_INNER_TOL = 1e-10
DEFAULT_INNER_MAX = 500

# Constructed-instance generation
CONSTRUCTION_TOL = 1e-12
CONSTRUCTION_MAX_ITERS = 10000
CONSTRUCTION_MAX_ATTEMPTS = 20

# Nonzero amplitudes of generated sparse signals are at least this large
SPARSE_AMPLITUDE_FLOOR = 0.1

# Verification run defaults
DEFAULT_VERIFY_SIZE = 50
DEFAULT_VERIFY_SEED = 2
DEFAULT_VERIFY_ITERS = 30

# Pseudo-random generator pinned for cross-run reproducibility
PRNG_NAME = "Philox4x64-10"

# Log-scale plots clamp non-positive values to this floor
PLOT_FLOOR = 1e-16

# Trace CSV header (bit-exact)
TRACE_CSV_HEADER = ("iter", "objective", "rel_error", "norm", "alpha", "beta", "flags")
PLOT_COLUMNS = ("objective", "rel_error", "norm")

# Bound report CSV header
BOUND_CSV_HEADER = ("l", "lhs", "k_bound", "k_statement", "rhs", "cg_rhs", "holds", "z_rank")

# Trace row flags
FLAG_DIVERGED = "diverged"
FLAG_BETA_FALLBACK = "beta_fallback"
FLAG_BETA_CAPPED = "beta_capped"
FLAG_DEGENERATE = "degenerate_direction"

# Output locations
OUTPUT_DIR_ENV = "NCGMOMENTUM_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"
CONFIG_ECHO_NAME = "config-echo.json"
SUMMARY_NAME = "summary.json"

# CLI exit codes
EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_GENERATION = 3
