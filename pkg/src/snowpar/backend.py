"""Backend selection for the hot numerical paths.

Two implementations of the inference and simulation kernels exist: a serial
one compiled with numba, and a vectorized pure-numpy fallback.  Which one is
used is decided once at import time from the ``SNOWPAR_BACKEND`` environment
variable:

* ``auto`` (default): numba if it imports, numpy otherwise
* ``numba``: require numba, raise if unavailable
* ``numpy``: force the fallback even when numba is installed

Training always runs on the numpy path so there is a single source of truth
for gradients.  Results are deterministic per backend; the two backends agree
to floating-point tolerance, not bit for bit.
"""

import os

from .errors import ConfigError

_VALID = ("auto", "numba", "numpy")


def _resolve() -> tuple[str, bool]:
    requested = os.environ.get("SNOWPAR_BACKEND", "auto").strip().lower()
    if requested not in _VALID:
        raise ConfigError(
            f"SNOWPAR_BACKEND must be one of {_VALID}, got {requested!r}"
        )
    if requested == "numpy":
        return "numpy", False
    try:
        import numba  # noqa: F401

        available = True
    except ImportError:
        available = False
    if requested == "numba" and not available:
        raise ConfigError("SNOWPAR_BACKEND=numba but numba is not importable")
    if available:
        return "numba", True
    return "numpy", False


BACKEND, HAS_NUMBA = _resolve()


def active_backend() -> str:
    """Name of the backend selected for this process."""
    return BACKEND
