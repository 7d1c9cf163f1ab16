# Cap BLAS pools before numpy loads: the models here are small enough
# that threaded kernels lose far more to synchronization than they gain,
# and single-threaded math keeps timing-sensitive tests stable.
import os

for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")
