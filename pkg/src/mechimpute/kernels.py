"""Backend selection for the graph kernels.

The compiled ``_core`` extension is used when it is importable; otherwise the
pure-Python ``_core_py`` module takes over. Setting ``MECHIMPUTE_PURE_PYTHON=1``
forces the fallback (used by the benchmark and the backend-parity tests).
"""

from __future__ import annotations

import os

from mechimpute import _core_py

if os.environ.get("MECHIMPUTE_PURE_PYTHON"):
    _impl = _core_py
    BACKEND = "python"
else:
    try:
        from mechimpute import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _core_py
        BACKEND = "python"

refine_ranks = _impl.refine_ranks
match_pattern = _impl.match_pattern

__all__ = ["BACKEND", "refine_ranks", "match_pattern"]
