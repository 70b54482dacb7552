"""Picks the RK4 kernel at import: compiled if available, else pure Python.

Set ``VZFOLD_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from vzfold import _rk4_py

if os.environ.get("VZFOLD_PURE_PYTHON", "") not in ("", "0"):
    rk4_lindblad = _rk4_py.rk4_lindblad
    BACKEND = "python"
else:
    try:
        from vzfold._rk4 import rk4_lindblad  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        rk4_lindblad = _rk4_py.rk4_lindblad
        BACKEND = "python"

__all__ = ["rk4_lindblad", "BACKEND"]
