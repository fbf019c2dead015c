"""Optional numba acceleration.

Hot kernels are written twice: an explicit-loop version decorated with
``njit`` and a vectorized numpy version.  Which one ``madapt.kernels``
dispatches to is chosen at import time:

* numba missing, or ``MADAPT_DISABLE_NUMBA=1`` -> numpy path
* otherwise -> numba path

``kernels.set_backend`` switches at runtime (tests and benchmarks).
"""

import os

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is normally installed
    numba = None
    HAVE_NUMBA = False

_FLAG = os.environ.get("MADAPT_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _FLAG not in {"1", "true", "yes", "on"}


def optional_njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise."""
    def decorator(func):
        if HAVE_NUMBA:
            return numba.njit(*args, **kwargs)(func)
        return func
    return decorator
