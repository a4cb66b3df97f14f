"""Kernel backend selection.

Hot elementwise kernels ship in two flavours: numba-jitted loops and pure
numpy. ``DRIFTLAB_BACKEND`` picks one ("numba" or "numpy"); unset means
numba when importable, numpy otherwise.
"""

import os

try:
    from numba import njit  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return wrap


_REQUESTED = os.environ.get("DRIFTLAB_BACKEND", "").strip().lower()

if _REQUESTED in ("", "auto"):
    USE_NUMBA = HAS_NUMBA
elif _REQUESTED == "numba":
    if not HAS_NUMBA:
        raise ImportError("DRIFTLAB_BACKEND=numba but numba is not importable")
    USE_NUMBA = True
elif _REQUESTED == "numpy":
    USE_NUMBA = False
else:
    raise ValueError(f"unknown DRIFTLAB_BACKEND {_REQUESTED!r}")


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
