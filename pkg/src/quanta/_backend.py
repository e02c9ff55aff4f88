"""Kernel backend selection.

The hot loops live in two interchangeable modules: ``_numba_kernels`` (numba
``@njit``, compiled on first use) and ``_numpy_kernels`` (vectorised numpy).
The backend is chosen once at import time from ``QUANTA_BACKEND``
(``numba`` or ``numpy``); ``QUANTA_DISABLE_NUMBA=1`` forces numpy. If numba is
missing, numpy is used silently.
"""

import importlib
import os

_ENV_BACKEND = os.environ.get("QUANTA_BACKEND", "").strip().lower()
_DISABLE = os.environ.get("QUANTA_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes")

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the dev environment
    HAS_NUMBA = False


def _default_backend():
    if _DISABLE or _ENV_BACKEND == "numpy" or not HAS_NUMBA:
        return "numpy"
    if _ENV_BACKEND not in ("", "numba"):
        raise ValueError(f"QUANTA_BACKEND must be 'numba' or 'numpy', got {_ENV_BACKEND!r}")
    return "numba"


_active = _default_backend()
_CACHE = {}


def get_backend_name():
    return _active


def set_backend(name):
    """Switch the kernel backend at runtime (used by tests and the benchmark)."""
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    _active = name


def kernels(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    name = name or _active
    mod = _CACHE.get(name)
    if mod is None:
        mod = _CACHE[name] = importlib.import_module(f"quanta._{name}_kernels")
    return mod
