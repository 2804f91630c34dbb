"""Dispatch DP kernel backend selection.

The compiled Cython extension is used when available; the numpy fallback
is selected otherwise, or when EVOSCHED_KERNEL=python is set.
"""

from __future__ import annotations

import os

from . import dp_py

if os.environ.get("EVOSCHED_KERNEL", "").lower() == "python":
    _impl = dp_py
    BACKEND = "python"
else:
    try:
        from . import _dp as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = dp_py
        BACKEND = "python"

CAP_EPS = dp_py.CAP_EPS
dp_min_energy = _impl.dp_min_energy

__all__ = ["dp_min_energy", "BACKEND", "CAP_EPS", "dp_py"]
