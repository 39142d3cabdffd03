# wavescope/util/constants.py

# Global defaults and calibration constants for the laboratory.
# Constants that the inequalities only assert to exist are calibration values
# with a documented default. Every report carries its calibration.

# --- Data File Paths (relative to the project root) ---

DATA_DIR = "data/"

DEFAULT_CALIBRATION_PATH = DATA_DIR + "default_calibration.json"

# --- Geometry ---

# Slack allowed on the chart norm check before a ChartViolation is raised
# (relative to E * rho0). Finite differences overestimate the norm slightly.
CHART_NORM_SLACK = 0.02

# d0 of the relative-graph comparison, as a fraction of rho0.
D0_FRACTION = 0.1

# Default Hoelder exponent used for gamma_{1,alpha}.
RELATIVE_GRAPH_ALPHA = 0.5

# Connectivity-graph spacing for path chains, as a fraction of r.
PATH_GRAPH_SPACING_FRACTION = 0.125

# Cone-chain constants q, a, b (the "for instance" choice of the cone section).
CONE_Q = 0.5
CONE_A = 0.25
CONE_B = 1.0 / 3.0

# --- Wave solver ---

# Delta t <= C_CFL * h * sqrt(lambda)
C_CFL = 0.5

# Cut cells with a boundary fraction below this value are imposed by
# interpolation instead of ghost extrapolation.
THETA_MIN = 0.5

# Tolerance for the chart/grid conformity check, in grid spacings.
BOUNDARY_TOLERANCE = 1.0e-9

# Relative energy drift tolerated by the homogeneous conservation check.
ENERGY_DRIFT_TOLERANCE = 1.0e-3

# Divided differences larger than this (relative to the analytic scale)
# are reported as InsufficientSmoothness.
SMOOTHNESS_BLOWUP = 1.0e8

# --- FBI transform ---

# Gauss-Legendre points per panel and the node cap.
FBI_NODES_PER_PANEL = 16
FBI_NODE_CAP = 400_000

# y-grid half width R = KAPPA_Y * T
KAPPA_Y = 0.3

# Window truncation: exp(-mu w^2 / 2) below exp(-FBI_WINDOW_EXPONENT)
FBI_WINDOW_EXPONENT = 40.0

# Cap on mu when it is selected from epsilon.
MU_CAP = 1.0e6

# --- Three-sphere inequality and propagation ---

BETA_1 = 4.0
C_CARLEMAN = 1.0

# Continuation bounds hold for r0 <= rho <= s0 rho0.
SUCP_S0 = 0.5

# Relative residual above which a field is rejected as NotASolution.
SOLUTION_RESIDUAL_TOLERANCE = 1.0e-4

# --- Stability harness ---

C_F = 2.0
C_K = 1.0
VARTHETA_2 = 0.5
FIT_MIN_RECORDS = 5

# --- Runner ---

THREADS_ENV_VAR = "WAVESCOPE_THREADS"
SUBCOMMANDS = ("solve", "fbi-check", "three-sphere", "chain", "stability")
