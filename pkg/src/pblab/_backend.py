"""Kernel backend selection.

Every hot inner loop in this package has two implementations: a numba
``@njit`` kernel and a vectorized numpy fallback.  The active backend is
read from the ``PBLAB_BACKEND`` environment variable (``"numba"`` or
``"numpy"``); when unset, numba is used if importable.  ``set_backend``
overrides the choice at runtime, which is what the backend benchmark and
the cross-backend tests use.
"""

from __future__ import annotations

import os

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - image always ships numba
    HAVE_NUMBA = False

_forced: str | None = None


def get_backend() -> str:
    if _forced is not None:
        return _forced
    env = os.environ.get("PBLAB_BACKEND", "").strip().lower()
    if env == "numpy":
        return "numpy"
    if env == "numba" and not HAVE_NUMBA:
        raise RuntimeError("PBLAB_BACKEND=numba but numba is not importable")
    if env not in ("", "numba"):
        raise RuntimeError(f"unknown PBLAB_BACKEND value {env!r}")
    return "numba" if HAVE_NUMBA else "numpy"


def set_backend(name: str | None) -> None:
    """Force a backend (``"numba"``/``"numpy"``), or ``None`` to re-read the env."""
    global _forced
    if name not in (None, "numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _forced = name


def using_numba() -> bool:
    return get_backend() == "numba"
