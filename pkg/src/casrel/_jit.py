"""Numba availability and the environment switch that disables it.

Set ``CASREL_DISABLE_JIT=1`` to force the pure-numpy kernels.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
JIT_DISABLED = os.environ.get("CASREL_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes", "on")
JIT_ENABLED = HAVE_NUMBA and not JIT_DISABLED


def njit(fn):
    """Compile ``fn`` with numba when it is importable, else return it unchanged."""
    if numba is None:
        return fn
    return numba.njit(cache=True)(fn)
