"""Backend selection for the compiled kernels.

Hot loops (LSTM recurrences, embedding gather/scatter) exist twice: a numba
``@njit`` version and a vectorised numpy version. The numba path is used when
numba imports cleanly and ``PIELAB_DISABLE_NUMBA`` is unset or falsy.
"""

from __future__ import annotations

import os

DISABLE_ENV = "PIELAB_DISABLE_NUMBA"

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False


def _env_disabled() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() in {"1", "true", "yes", "on"}


_use_numba = NUMBA_AVAILABLE and not _env_disabled()


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise.

    Kernels are compiled whenever numba exists so that both paths stay
    callable side by side (tests and the benchmark compare them); which one
    the models dispatch to is decided by :func:`use_numba`.
    """
    if not NUMBA_AVAILABLE:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def use_numba() -> bool:
    return _use_numba


def set_backend(name: str) -> None:
    """Force ``"numba"`` or ``"numpy"`` for the current process."""
    global _use_numba
    if name == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError("numba backend requested but numba is not installed")
        _use_numba = True
    elif name == "numpy":
        _use_numba = False
    else:
        raise ValueError(f"unknown backend {name!r}")


def backend_name() -> str:
    return "numba" if _use_numba else "numpy"
