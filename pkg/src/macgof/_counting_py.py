"""Pure-numpy counting backend (naive reference implementation).

Both backends share one call signature so they can be swapped at import
time.  Arguments describe one sample against a fixed pair layout:

- ``dxT``, ``dyT``: (k, n) distances from each location's x-part (resp.
  y-part) to every row's x-part (resp. y-part).
- ``orderT``: (k, n) int32, row indices sorting each ``dxT`` row ascending.
- ``indptr``: (k + 1,) int64, pair ranges grouped by center location.
- ``a``: (npairs,) int64, number of rows inside the x-ball of each pair.
- ``tx``, ``ty``: (npairs,) float64, ball radii of each pair.
- ``sty``: (npairs,) float64, ``ty`` sorted within each center group.
- ``pos``: (npairs,) int32, band rank of each pair's ``ty`` inside ``sty``.

The naive backend recounts every row for every pair directly from the
distance matrices; it only reads ``dxT``, ``dyT``, ``indptr``, ``tx`` and
``ty``.  The compiled backend exploits the precomputed sort data instead.
Both return identical integer cell counts.
"""

from __future__ import annotations

import numpy as np


def cell_counts_all(dxT, dyT, orderT, indptr, a, tx, ty, sty, pos) -> np.ndarray:
    """Cell counts (c11, c12, c21, c22) of one sample for every pair."""
    k, n = dyT.shape
    npairs = ty.shape[0]
    out = np.empty((npairs, 4), dtype=np.int64)
    for i in range(k):
        s, e = int(indptr[i]), int(indptr[i + 1])
        if s == e:
            continue
        in_x = dxT[i][None, :] <= tx[s:e, None]
        in_y = dyT[i][None, :] <= ty[s:e, None]
        c11 = np.sum(in_x & in_y, axis=1)
        ax = np.sum(in_x, axis=1)
        by = np.sum(in_y, axis=1)
        out[s:e, 0] = c11
        out[s:e, 1] = by - c11
        out[s:e, 2] = ax - c11
        out[s:e, 3] = n - ax - by + c11
    return out


def stats_from_counts(p_counts: np.ndarray, q_counts: np.ndarray) -> np.ndarray:
    """Adjusted chi-squared value per pair from two count tables.

    Cells where both counts are zero contribute nothing.  The arithmetic
    (including accumulation order over the four cells) matches the
    compiled backend exactly, so downstream reductions are bit-identical
    whichever backend produced the counts.
    """
    d = p_counts - q_counts
    r = p_counts + q_counts
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(r > 0, (d * d) / r, 0.0)
    s = t[:, 0] + t[:, 1]
    s += t[:, 2]
    s += t[:, 3]
    return s


def local_stats(dxT, dyT, orderT, indptr, a, tx, ty, sty, pos, ref_counts) -> np.ndarray:
    """Per-pair statistics of this sample counted against fixed reference counts."""
    counts = cell_counts_all(dxT, dyT, orderT, indptr, a, tx, ty, sty, pos)
    return stats_from_counts(ref_counts, counts)


def local_stats_1d(y, ys_sorted, vs, orderT, indptr, a, ty, sty, tyorder, ref_counts) -> np.ndarray:
    """Scalar-response variant of :func:`local_stats`.

    The x-side is summarized by ``orderT`` (rows by ascending x-distance)
    and ``a`` (rows inside each pair's x-ball), so only the y-side is
    recounted here.
    """
    k, n = orderT.shape
    npairs = ty.shape[0]
    counts = np.empty((npairs, 4), dtype=np.int64)
    dyT = np.abs(vs[:, None] - y[None, :])
    for i in range(k):
        s, e = int(indptr[i]), int(indptr[i + 1])
        if s == e:
            continue
        m = e - s
        dyi = dyT[i]
        by = np.sum(dyi[None, :] <= ty[s:e, None], axis=1)
        dyp = dyi[orderT[i]]
        prefix = np.cumsum(dyp[None, :] <= ty[s:e, None], axis=1)
        aj = a[s:e]
        c11 = np.where(aj > 0, prefix[np.arange(m), np.maximum(aj, 1) - 1], 0)
        counts[s:e, 0] = c11
        counts[s:e, 1] = by - c11
        counts[s:e, 2] = aj - c11
        counts[s:e, 3] = n - aj - by + c11
    return stats_from_counts(ref_counts, counts)
