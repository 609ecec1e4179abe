"""Backend selection for the hot kernels.

Kernels come in two flavours: a numba ``@njit`` loop version and a pure-numpy
vectorised version. The numba path is used when numba imports cleanly and the
environment variable ``DATELINE_DISABLE_NUMBA`` is not set to a truthy value.
"""

import logging
import os

logger = logging.getLogger(__name__)

_FLAG = os.environ.get("DATELINE_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    # TBB in this image is too old and numba warns about it on every import.
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "omp"

    njit = numba.njit
    prange = numba.prange
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    HAVE_NUMBA = False

    def njit(pyfunc=None, **kwargs):
        def wrap(func):
            return func

        return wrap if pyfunc is None else wrap(pyfunc)

    def prange(*args):
        return range(*args)


USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")

if HAVE_NUMBA and not USE_NUMBA:
    logger.debug("numba disabled by DATELINE_DISABLE_NUMBA, using numpy kernels")


def backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n):
    """Size numba's thread pool. Results do not depend on ``n``."""
    if HAVE_NUMBA and n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
