"""Kernel backend selection.

The distance / soft-vote inner loops exist twice: a numba @njit version and a
pure-numpy version. `KNNADV_BACKEND` picks one ("numba" or "numpy"); default
is numba when importable, numpy otherwise.
"""

import os

_VALID = ("numba", "numpy")


def _resolve() -> str:
    choice = os.environ.get("KNNADV_BACKEND", "").strip().lower()
    if choice and choice not in _VALID:
        raise ValueError(f"KNNADV_BACKEND must be one of {_VALID}, got {choice!r}")
    if choice == "numba" or not choice:
        try:
            import numba  # noqa: F401
        except ImportError:
            if choice == "numba":
                raise
            return "numpy"
        return "numba"
    return "numpy"


_BACKEND = _resolve()


def backend_name() -> str:
    """Name of the active kernel backend."""
    return _BACKEND


def get_kernels(name: str | None = None):
    """Return the kernel module for `name` (default: the active backend)."""
    name = name or _BACKEND
    if name == "numba":
        from knnadv import _kernels_numba
        return _kernels_numba
    if name == "numpy":
        from knnadv import _kernels_numpy
        return _kernels_numpy
    raise ValueError(f"unknown backend {name!r}")
