import os

THREADS_ENV = "STRIPE_SIM_THREADS"


def thread_count() -> int:
    """Worker threads for data-parallel sweeps, from $STRIPE_SIM_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1
