#!/usr/bin/env python3
"""
Environment-driven configuration for the structural optimizer.

Values come from the process environment, optionally seeded from a `.env`
file. Command-line flags override them.
"""

import os
import logging
from typing import Optional

# Optional .env support
try:
    from dotenv import load_dotenv
    load_dotenv()
except Exception:
    pass

logger = logging.getLogger(__name__)

# ------- Configuration -------
LOG_LEVEL    = os.getenv("SSO_LOG_LEVEL", "INFO").upper()
THREADS      = os.getenv("SSO_THREADS", "")
SOLVER       = os.getenv("SSO_SOLVER", "sparse").lower()  # 'dense' or 'sparse'
OUTPUT_DIR   = os.getenv("SSO_OUTPUT_DIR", "./results")

# Sensitivity validation
FD_STEP      = float(os.getenv("SSO_FD_STEP", "1e-6"))
FD_THRESHOLD = float(os.getenv("SSO_FD_THRESHOLD", "1e-4"))

# Relative zero-pivot tolerance
PIVOT_TOL    = float(os.getenv("SSO_PIVOT_TOL", "1e-20"))

# Benchmark: dense backend is skipped above this many DOF (about 5 GB per matrix at the default)
DENSE_LIMIT  = int(os.getenv("SSO_DENSE_LIMIT", "25000"))

# Thread pools that numpy/scipy may be linked against
THREAD_VARIABLES = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_FRAMEWORK_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def default_threads() -> Optional[int]:
    """SSO_THREADS as an int, or None when unset."""
    if not THREADS:
        return None
    try:
        n = int(THREADS)
    except ValueError:
        raise ValueError(f"SSO_THREADS must be an integer, got {THREADS!r}")
    if n < 1:
        raise ValueError(f"SSO_THREADS must be >= 1, got {n}")
    return n


def configure_threads(n: Optional[int]) -> None:
    """Pin BLAS/OpenMP pools to n threads.

    Only effective before numpy is first imported, so call it before any
    numerical module is loaded.
    """
    if n is None:
        return
    if n < 1:
        raise ValueError(f"Thread count must be >= 1, got {n}")
    for var in THREAD_VARIABLES:
        os.environ[var] = str(n)
    logger.debug(f"Thread pools pinned to {n}")
