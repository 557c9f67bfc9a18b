"""
Worker-count policy shared by every parallel stage.
"""
import logging
import os
from typing import Optional

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "EMGKIT_THREADS"


def resolve_n_jobs(requested: Optional[int] = None) -> int:
    """
    Work out how many joblib workers a stage may use

    Args:
        requested: Explicit worker count, or None to use every core

    Returns:
        Worker count, capped by the EMGKIT_THREADS environment variable
    """
    cores = os.cpu_count() or 1
    n_jobs = cores if requested is None or requested < 1 else requested

    cap = os.environ.get(THREADS_ENV_VAR)
    if cap:
        try:
            n_jobs = min(n_jobs, max(1, int(cap)))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV_VAR}={cap!r}")

    return n_jobs
