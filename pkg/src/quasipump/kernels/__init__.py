"""Backend selection for the time-stepping kernels.

Two interchangeable implementations of the same stepping algorithms exist:
a numba-JIT one (fast) and a pure-numpy one (portable fallback).  The
default is numba when importable; set QUASIPUMP_BACKEND=numpy|numba to force
a choice.  `benchmarks/bench_backends.py` compares the two.
"""

from __future__ import annotations

import os
import warnings

from ..errors import ValidationError
from . import numpy_backend
from .coeffs import propagator_coefficients

BACKEND_ENV = "QUASIPUMP_BACKEND"

try:
    from . import numba_backend
    _HAVE_NUMBA = True
except ImportError:
    numba_backend = None
    _HAVE_NUMBA = False


def available_backends() -> tuple:
    return ("numba", "numpy") if _HAVE_NUMBA else ("numpy",)


def default_backend() -> str:
    env = os.environ.get(BACKEND_ENV, "").strip().lower()
    if env:
        if env not in ("numba", "numpy"):
            raise ValidationError(
                f"{BACKEND_ENV} must be 'numba' or 'numpy', got {env!r}")
        if env == "numba" and not _HAVE_NUMBA:
            warnings.warn(
                f"{BACKEND_ENV}=numba requested but numba is not importable; "
                "falling back to the numpy kernels")
            return "numpy"
        return env
    return "numba" if _HAVE_NUMBA else "numpy"


def get_backend(name: str | None = None):
    """Return the kernel module for `name` (None: the default backend)."""
    if name is None:
        name = default_backend()
    name = name.lower()
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        if not _HAVE_NUMBA:
            raise ValidationError("numba backend requested but numba is not importable")
        return numba_backend
    raise ValidationError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")


__all__ = [
    "BACKEND_ENV",
    "available_backends",
    "default_backend",
    "get_backend",
    "propagator_coefficients",
]
