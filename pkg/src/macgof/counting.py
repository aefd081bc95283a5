"""Selects the counting backend at import time.

The compiled extension is used when it is importable; otherwise the
pure-numpy reference takes over.  Setting ``MACGOF_PURE_PYTHON=1`` forces
the fallback (useful for benchmarking and for verifying backend
equivalence).  Both backends return bit-identical results.
"""

from __future__ import annotations

import os

from macgof import _counting_py
from macgof._counting_py import stats_from_counts

__all__ = [
    "cell_counts_all",
    "local_stats",
    "local_stats_1d",
    "stats_from_counts",
    "backend_name",
    "HAVE_EXTENSION",
    "python_backend",
    "compiled_backend",
]

python_backend = _counting_py

try:
    from macgof import _countingc as compiled_backend

    HAVE_EXTENSION = True
except ImportError:  # extension not built; fall back silently
    compiled_backend = None
    HAVE_EXTENSION = False

_force_py = os.environ.get("MACGOF_PURE_PYTHON", "") not in ("", "0")
_active = python_backend if (_force_py or not HAVE_EXTENSION) else compiled_backend


def backend_name() -> str:
    """Identifier of the active backend: 'compiled' or 'python'."""
    return "compiled" if _active is compiled_backend and compiled_backend is not None else "python"


def cell_counts_all(dxT, dyT, orderT, indptr, a, tx, ty, sty, pos):
    return _active.cell_counts_all(dxT, dyT, orderT, indptr, a, tx, ty, sty, pos)


def local_stats(dxT, dyT, orderT, indptr, a, tx, ty, sty, pos, ref_counts):
    return _active.local_stats(dxT, dyT, orderT, indptr, a, tx, ty, sty, pos, ref_counts)


def local_stats_1d(y, ys_sorted, vs, orderT, indptr, a, ty, sty, tyorder, ref_counts):
    return _active.local_stats_1d(y, ys_sorted, vs, orderT, indptr, a, ty, sty, tyorder, ref_counts)
