"""Kernel backend selection.

Hot loops exist twice: a vectorized numpy version and an explicit-loop version
compiled with numba. Set ``ACCEL_DIFFEO_BACKEND=numpy`` to force the numpy path
for a whole process; the default uses numba whenever it imports. Both variants
stay importable so tests and the benchmark can compare them side by side.
"""
import os

try:
    from numba import njit as _njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    HAVE_NUMBA = False

_requested = os.environ.get("ACCEL_DIFFEO_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(
        f"ACCEL_DIFFEO_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def njit(func, inline=False):
    """Compile ``func`` with numba, or return None when numba is missing.

    ``inline=True`` suits small per-pixel helpers called from loop kernels.
    """
    if not HAVE_NUMBA:
        return None
    # fastmath stays off: results must not depend on the backend beyond
    # reassociation-free loop order.
    return _njit(cache=True, fastmath=False, inline="always" if inline else "never")(func)


def pick(numba_impl, numpy_impl):
    if BACKEND == "numba" and numba_impl is not None:
        return numba_impl
    return numpy_impl
