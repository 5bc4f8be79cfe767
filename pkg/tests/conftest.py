import os

# pin BLAS to one thread before numpy loads anywhere: the latency and runtime
# budgets in the acceptance suite are single-threaded claims
for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")
