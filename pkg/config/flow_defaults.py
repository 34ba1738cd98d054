# Numerical defaults for profile analysis, time stepping and singularity fitting
import os

# Profile sampling
SAMPLES_PER_WINDOW = 4096
ROOT_TOLERANCE = 1e-10          # bisection tolerance in z
DERIVATIVE_TOLERANCE = 1e-6     # |dω/dz| accepted at a refined critical point
FLATNESS_TOLERANCE = 1e-12      # profile variation below this is degenerate-flat
PINCH_TOLERANCE = 1e-8          # ω_Σ at or below this counts as a pinch
GRAPH_CONSTANT_FLOOR = 1e-12    # C_Σ at or below this violates the graph condition

# Time stepping
CFL_SAFETY = float(os.getenv("NECKFLOW_CFL_SAFETY", "0.4"))
DT_MIN = 1e-16
DT_MAX = 1e-2
MAX_STEPS = None                # no step budget unless one is configured
PROJECTION_MAX_ITERATIONS = 20
PROJECTION_TOLERANCE = 1e-12
PROJECTION_SLOPE_FLOOR = 1e-8   # below this |ω_Σ'| the radius follows the height instead

# Stop thresholds
PINCH_FRACTION = 1e-3           # pinch when r < PINCH_FRACTION * r(0)
EPS_H = 1e-5
EPS_R = 1e-6
TRAILING_WINDOW = 50            # records
RECORD_STRIDE = 100             # steps between records

# Singularity fitting
MIN_FIT_RECORDS = 8
FIT_WINDOW = 16                 # trailing records used by the blow-up fits
TYPE0_GROWTH_LIMIT = 0.10
TYPE0_BETA_FLOOR = -0.25
TYPEI_BETA_FLOOR = -1.25
DISSIPATION_FLOOR = 1e-8
AREA_MONOTONE_TOLERANCE = 1e-10
GRADIENT_BOUND_TOLERANCE = 1e-6

# Foliation sweep
ORDERING_TOLERANCE = 1e-9
SWEEP_SAMPLE_COUNT = 200        # common sample times per sweep
MAX_WORKERS = int(os.getenv("NECKFLOW_MAX_WORKERS", "2"))

# Output
OUTPUT_DIR = os.getenv("NECKFLOW_OUT_DIR", "neckflow_out")
CSV_FLOAT_FORMAT = "%.17g"
