"""Runtime switches read from the environment."""
import os

# CSKL_NUMBA=0 forces the pure-numpy code paths.
USE_NUMBA = os.environ.get("CSKL_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

# default worker count for the experiment runner
DEFAULT_JOBS = int(os.environ.get("CSKL_JOBS", "1") or 1)
