"""Maximum adjusted chi-squared statistics over distance-ball partitions.

For two samples and a set of k anchor locations, every ordered location
pair defines a four-cell partition (see :mod:`macgof.sample`).  The local
statistic compares the two samples' cell counts; the test statistic is
the maximum of the local values over all pairs, with the mean retained as
a global-discrepancy companion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial.distance import cdist

from macgof import counting
from macgof.errors import DataError
from macgof.sample import CellCounts, LocationSet, PairedSample

__all__ = [
    "MacConfig",
    "MacResult",
    "local_statistic",
    "population_local_statistic",
    "select_locations",
    "mac",
    "mixed_statistic",
    "RepeatedMac",
]

STRATEGIES = ("random", "cluster", "all")
PAIR_ORDERINGS = ("upper", "both")

#: k defaults to min(n, 100): enough pairs for sensitivity while keeping the
#: pair loop quadratic in a bounded constant.
DEFAULT_MAX_LOCATIONS = 100

_KMEANS_ITER = 25  # fixed Lloyd iteration cap keeps selection deterministic


@dataclass(frozen=True)
class MacConfig:
    """Location selection and pair-enumeration settings.

    ``k=None`` resolves to min(n, 100) at selection time.  ``seed`` only
    matters when no generator is passed to :func:`select_locations`.
    """

    k: int | None = None
    strategy: str = "random"
    pair_ordering: str = "upper"
    seed: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.pair_ordering not in PAIR_ORDERINGS:
            raise ValueError(
                f"pair_ordering must be one of {PAIR_ORDERINGS}, got {self.pair_ordering!r}"
            )
        if self.k is not None and self.k < 2:
            raise ValueError("k must be at least 2")

    def resolve_k(self, n: int) -> int:
        k = min(n, DEFAULT_MAX_LOCATIONS) if self.k is None else self.k
        if k < 2:
            raise ValueError("resolved k is below 2; sample too small")
        return k


@dataclass(frozen=True)
class MacResult:
    """Maximum statistic, the pair attaining it, and the mean over all pairs."""

    value: float
    argmax_pair: tuple[int, int]
    mean_value: float
    local_values: np.ndarray | None = None


def local_statistic(p: CellCounts, q: CellCounts) -> float:
    """Adjusted chi-squared distance between two cell-count tables.

    Sums (P - Q)^2 / (P + Q) over the four cells; cells empty in both
    tables contribute zero.  Symmetric in its arguments.
    """
    s = 0.0
    for pc, qc in zip(p, q):
        r = pc + qc
        if r > 0:
            d = pc - qc
            s += (d * d) / r
    return s


def population_local_statistic(p_cells, q_cells, n: int) -> float:
    """Population version: n times the cell-probability discrepancy."""
    p = np.asarray(p_cells, dtype=np.float64)
    q = np.asarray(q_cells, dtype=np.float64)
    if p.shape != (4,) or q.shape != (4,):
        raise ValueError("expected four cell probabilities per sample")
    for name, vec in (("p_cells", p), ("q_cells", q)):
        if abs(vec.sum() - 1.0) > 1e-9 or np.any(vec < 0):
            raise ValueError(f"{name} must be nonnegative and sum to 1")
    r = p + q
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(r > 0, (p - q) ** 2 / r, 0.0)
    return float(n * terms.sum())


def mixed_statistic(mean_value: float, max_value: float, tau: float) -> float:
    """Mean statistic plus the maximum when it clears the threshold."""
    if mean_value < 0 or max_value < 0 or tau < 0:
        raise ValueError("mean_value, max_value and tau must be nonnegative")
    return mean_value + (max_value if max_value > tau else 0.0)


def select_locations(
    sample_a: PairedSample,
    sample_b: PairedSample,
    cfg: MacConfig | None = None,
    rng: np.random.Generator | None = None,
) -> LocationSet:
    """Pick anchor locations from the pooled rows of both samples.

    ``random`` draws k pooled rows without replacement; ``all`` uses every
    pooled row; ``cluster`` runs a seeded Lloyd clustering (k-means++ init,
    fixed iteration cap) and uses the centroids.
    """
    cfg = cfg or MacConfig()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    pooled = sample_a.pooled_rows(sample_b)
    total = pooled.shape[0]

    if cfg.strategy == "all":
        if cfg.k is not None and cfg.k > total:
            raise ValueError(f"k={cfg.k} exceeds pooled size {total}")
        return LocationSet.from_rows(pooled, sample_a.p)

    k = cfg.resolve_k(min(sample_a.n, sample_b.n))
    if cfg.strategy == "random":
        if k > total:
            raise ValueError(f"k={k} exceeds pooled size {total}")
        idx = rng.choice(total, size=k, replace=False)
        return LocationSet.from_rows(pooled[idx], sample_a.p)

    # cluster
    if k > total:
        raise ValueError(f"k={k} exceeds pooled size {total}")
    centroids, _ = kmeans2(pooled, k, iter=_KMEANS_ITER, minit="++", seed=rng)
    return LocationSet.from_rows(centroids, sample_a.p)


# --------------------------------------------------------------------- #
# Pair layout and per-sample geometry shared by the counting backends
# --------------------------------------------------------------------- #


@dataclass(frozen=True)
class _PairLayout:
    """Flattened location pairs grouped by center, with ball radii."""

    centers: np.ndarray  # (npairs,) int32
    partners: np.ndarray  # (npairs,) int32
    indptr: np.ndarray  # (k + 1,) int64
    tx: np.ndarray  # (npairs,) float64
    ty: np.ndarray  # (npairs,) float64
    sty: np.ndarray  # (npairs,) float64, ty sorted within groups
    pos: np.ndarray  # (npairs,) int32, band rank of ty within its group
    tyorder: np.ndarray  # (npairs,) int32, group-local pair index per sorted slot

    @property
    def npairs(self) -> int:
        return self.tx.shape[0]


def _build_layout(locs: LocationSet, pair_ordering: str) -> _PairLayout:
    k = locs.k
    if k < 2:
        raise DataError("need at least two locations")
    tx_full = cdist(locs.ws, locs.ws)
    ty_full = cdist(locs.vs, locs.vs)

    if pair_ordering == "upper":
        ci, cj = np.triu_indices(k, k=1)
    else:
        ci, cj = np.nonzero(~np.eye(k, dtype=bool))
    tx = tx_full[ci, cj]
    ty = ty_full[ci, cj]
    keep = ~((tx == 0.0) & (ty == 0.0))  # zero radius in both parts: no partition
    ci, cj, tx, ty = ci[keep], cj[keep], tx[keep], ty[keep]
    if ci.shape[0] == 0:
        raise DataError("all location pairs are degenerate (coincident locations)")

    indptr = np.searchsorted(ci, np.arange(k + 1)).astype(np.int64)
    sty = np.empty_like(ty)
    pos = np.empty(ty.shape[0], dtype=np.int32)
    tyorder = np.empty(ty.shape[0], dtype=np.int32)
    for i in range(k):
        s, e = indptr[i], indptr[i + 1]
        if s == e:
            continue
        order = np.argsort(ty[s:e], kind="stable")
        g = ty[s:e][order]
        sty[s:e] = g
        pos[s:e] = np.searchsorted(g, ty[s:e], side="right") - 1
        tyorder[s:e] = order
    return _PairLayout(
        centers=ci.astype(np.int32),
        partners=cj.astype(np.int32),
        indptr=indptr,
        tx=np.ascontiguousarray(tx),
        ty=np.ascontiguousarray(ty),
        sty=sty,
        pos=pos,
        tyorder=tyorder,
    )


@dataclass(frozen=True)
class _SampleGeometry:
    """Distances and sort data of one sample against a layout."""

    dxT: np.ndarray  # (k, n) float64
    dyT: np.ndarray  # (k, n) float64
    orderT: np.ndarray  # (k, n) int32
    a: np.ndarray  # (npairs,) int64, rows inside each pair's x-ball


def _x_geometry(xs: np.ndarray, locs: LocationSet, layout: _PairLayout):
    """x-side of the geometry: distances, sort order, and x-ball counts."""
    dxT = np.ascontiguousarray(cdist(locs.ws, xs))
    orderT = np.argsort(dxT, axis=1).astype(np.int32)
    dx_sorted = np.take_along_axis(dxT, orderT.astype(np.int64), axis=1)
    a = np.empty(layout.npairs, dtype=np.int64)
    for i in range(locs.k):
        s, e = layout.indptr[i], layout.indptr[i + 1]
        if s == e:
            continue
        a[s:e] = np.searchsorted(dx_sorted[i], layout.tx[s:e], side="right")
    return dxT, orderT, a


def _y_distances(ys: np.ndarray, locs: LocationSet) -> np.ndarray:
    if ys.ndim == 1:
        ys = ys.reshape(-1, 1)
    if ys.shape[1] == 1:
        return np.ascontiguousarray(np.abs(locs.vs - ys[:, 0][None, :]))
    return np.ascontiguousarray(cdist(locs.vs, ys))


def _sample_geometry(sample: PairedSample, locs: LocationSet, layout: _PairLayout) -> _SampleGeometry:
    dxT, orderT, a = _x_geometry(sample.xs, locs, layout)
    dyT = _y_distances(sample.ys, locs)
    return _SampleGeometry(dxT=dxT, dyT=dyT, orderT=orderT, a=a)


def _counts(geom: _SampleGeometry, layout: _PairLayout) -> np.ndarray:
    return counting.cell_counts_all(
        geom.dxT, geom.dyT, geom.orderT, layout.indptr, geom.a,
        layout.tx, layout.ty, layout.sty, layout.pos,
    )


def _reduce(s_values: np.ndarray, layout: _PairLayout, keep_local: bool) -> MacResult:
    idx = int(np.argmax(s_values))
    return MacResult(
        value=float(s_values[idx]),
        argmax_pair=(int(layout.centers[idx]), int(layout.partners[idx])),
        mean_value=float(s_values.mean()),
        local_values=s_values if keep_local else None,
    )


def mac(
    sample_a: PairedSample,
    sample_b: PairedSample,
    locs: LocationSet,
    cfg: MacConfig | None = None,
    *,
    keep_local: bool = False,
) -> MacResult:
    """Maximum (and mean) local statistic between two samples.

    Pairs are enumerated per ``cfg.pair_ordering``: ``upper`` scores each
    unordered pair once with the lower-index location as center, ``both``
    scores both orientations.  Pairs whose locations coincide in both
    parts are skipped.
    """
    cfg = cfg or MacConfig()
    if sample_a.p != sample_b.p or sample_a.q != sample_b.q:
        raise DataError("samples have mismatched dimensions")
    if locs.ws.shape[1] != sample_a.p or locs.vs.shape[1] != sample_a.q:
        raise DataError("locations do not match the sample dimensions")
    layout = _build_layout(locs, cfg.pair_ordering)
    counts_a = _counts(_sample_geometry(sample_a, locs, layout), layout)
    counts_b = _counts(_sample_geometry(sample_b, locs, layout), layout)
    s_values = counting.stats_from_counts(counts_a, counts_b)
    return _reduce(s_values, layout, keep_local)


class RepeatedMac:
    """Repeated MAC evaluation against a fixed first sample.

    Scoring many candidate responses against the same observed sample
    (same covariates, same locations) dominates the bootstrap loops, so
    everything that depends only on the fixed side is computed once here:
    the pair layout, the x-side geometry (shared by both samples because
    the covariates are shared), and the observed sample's cell counts.
    """

    def __init__(self, sample_a: PairedSample, locs: LocationSet,
                 pair_ordering: str = "upper"):
        self._sample = sample_a
        self._locs = locs
        self._layout = _build_layout(locs, pair_ordering)
        dxT, orderT, a = _x_geometry(sample_a.xs, locs, self._layout)
        self._dxT, self._orderT, self._a = dxT, orderT, a
        dyT = _y_distances(sample_a.ys, locs)
        self._ref_counts = counting.cell_counts_all(
            dxT, dyT, orderT, self._layout.indptr, a,
            self._layout.tx, self._layout.ty, self._layout.sty, self._layout.pos,
        )
        self._vs = np.ascontiguousarray(locs.vs[:, 0]) if sample_a.q == 1 else None

    @property
    def npairs(self) -> int:
        return self._layout.npairs

    def _stats(self, y_star: np.ndarray) -> np.ndarray:
        y = np.ascontiguousarray(y_star, dtype=np.float64)
        if y.shape[0] != self._sample.n:
            raise ValueError("response length does not match the sample")
        lay = self._layout
        if self._vs is not None and y.ndim == 1:
            return counting.local_stats_1d(
                y, np.sort(y), self._vs, self._orderT, lay.indptr, self._a,
                lay.ty, lay.sty, lay.tyorder, self._ref_counts,
            )
        dyT = _y_distances(y, self._locs)
        return counting.local_stats(
            self._dxT, dyT, self._orderT, lay.indptr, self._a,
            lay.tx, lay.ty, lay.sty, lay.pos, self._ref_counts,
        )

    def evaluate(self, y_star: np.ndarray) -> float:
        """MAC value of (xs, y_star) against the fixed sample."""
        return float(self._stats(y_star).max())

    def evaluate_with_mean(self, y_star: np.ndarray) -> tuple[float, float]:
        s = self._stats(y_star)
        return float(s.max()), float(s.mean())
