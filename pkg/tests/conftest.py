"""Pin BLAS to one thread before numpy loads.

Small-matrix GEMMs here run faster single-threaded, and a fixed thread
count keeps floating-point reductions bit-stable across runs.
"""

import os

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
