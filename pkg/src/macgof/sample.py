"""Paired samples, anchor locations, and the distance-ball partition.

A paired sample holds n observations of (x, y) with x in R^p and y in R^q.
Each ordered pair of anchor locations (Li, Lj) splits the space into four
cells: the x-part of a point either falls inside the ball around Li's
x-part with radius d(w_i, w_j) or not, and likewise for the y-part.  Cell
counts over these partitions are the raw material of the local adjusted
chi-squared statistics in :mod:`macgof.mac`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from macgof.errors import DataError

__all__ = [
    "PairedSample",
    "Location",
    "LocationSet",
    "CellCounts",
    "distance",
    "classify",
    "cell_counts",
]


def _as_matrix(arr, name: str) -> np.ndarray:
    """Coerce to a read-only float64 matrix of shape (n, d); 1-d input gets d=1."""
    out = np.array(arr, dtype=np.float64, copy=True)
    if out.ndim == 1:
        out = out.reshape(-1, 1)
    if out.ndim != 2:
        raise DataError(f"{name} must be 1- or 2-dimensional, got ndim={out.ndim}")
    if out.shape[0] == 0:
        raise DataError(f"{name} has no rows")
    if not np.all(np.isfinite(out)):
        raise DataError(f"{name} contains non-finite entries")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PairedSample:
    """n observations of (x, y); both matrices share the row count."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xs", _as_matrix(self.xs, "xs"))
        object.__setattr__(self, "ys", _as_matrix(self.ys, "ys"))
        if self.xs.shape[0] != self.ys.shape[0]:
            raise DataError(
                f"xs has {self.xs.shape[0]} rows but ys has {self.ys.shape[0]}"
            )

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def p(self) -> int:
        return self.xs.shape[1]

    @property
    def q(self) -> int:
        return self.ys.shape[1]

    def with_response(self, ys) -> "PairedSample":
        """Same covariates, new response block."""
        return PairedSample(self.xs, ys)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.xs[i], self.ys[i]

    def pooled_rows(self, other: "PairedSample") -> np.ndarray:
        """Stack both samples as rows of [x | y], shape (n_a + n_b, p + q)."""
        if self.p != other.p or self.q != other.q:
            raise DataError("samples have mismatched dimensions")
        a = np.hstack([self.xs, self.ys])
        b = np.hstack([other.xs, other.ys])
        return np.vstack([a, b])


@dataclass(frozen=True)
class Location:
    """One anchor point L = (w, v) with w in R^p and v in R^q."""

    w: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _as_vector(self.w, "w"))
        object.__setattr__(self, "v", _as_vector(self.v, "v"))


def _as_vector(arr, name: str) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True).reshape(-1)
    if out.size == 0:
        raise DataError(f"{name} is empty")
    if not np.all(np.isfinite(out)):
        raise DataError(f"{name} contains non-finite entries")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class LocationSet:
    """k anchor locations stored as row matrices ws (k, p) and vs (k, q)."""

    ws: np.ndarray
    vs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ws", _as_matrix(self.ws, "ws"))
        object.__setattr__(self, "vs", _as_matrix(self.vs, "vs"))
        if self.ws.shape[0] != self.vs.shape[0]:
            raise DataError("ws and vs must have the same number of rows")

    @classmethod
    def from_rows(cls, rows: np.ndarray, p: int) -> "LocationSet":
        """Split pooled [x | y] rows into the x- and y-parts of locations."""
        rows = np.asarray(rows, dtype=np.float64)
        return cls(rows[:, :p], rows[:, p:])

    @property
    def k(self) -> int:
        return self.ws.shape[0]

    def __len__(self) -> int:
        return self.k

    def __getitem__(self, i: int) -> Location:
        return Location(self.ws[i], self.vs[i])

    def __iter__(self) -> Iterator[Location]:
        return (self[i] for i in range(self.k))


class CellCounts(NamedTuple):
    """Counts of one sample over the four partition cells of a location pair."""

    c11: int
    c12: int
    c21: int
    c22: int

    @property
    def total(self) -> int:
        return self.c11 + self.c12 + self.c21 + self.c22


def distance(a, b) -> float:
    """Euclidean distance between two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def classify(point: tuple, li: Location, lj: Location) -> int:
    """Cell index in {11, 12, 21, 22} of a point for the pair (Li, Lj).

    The partition is centered at Li: the x-condition is
    d(x, w_i) <= d(w_i, w_j) and the y-condition is d(y, v_i) <= d(v_i, v_j),
    both with boundary points inside the ball.  Cell 11 means both
    conditions hold, 12 only the y-condition, 21 only the x-condition,
    22 neither.
    """
    x, y = point
    in_x = distance(x, li.w) <= distance(li.w, lj.w)
    in_y = distance(y, li.v) <= distance(li.v, lj.v)
    if in_x:
        return 11 if in_y else 21
    return 12 if in_y else 22


def cell_counts(sample: PairedSample, li: Location, lj: Location) -> CellCounts:
    """Count every sample row into its partition cell (naive reference path)."""
    if li.w.shape[0] != sample.p or li.v.shape[0] != sample.q:
        raise ValueError("location dimensions do not match the sample")
    tx = distance(li.w, lj.w)
    ty = distance(li.v, lj.v)
    in_x = np.sqrt(np.sum((sample.xs - li.w) ** 2, axis=1)) <= tx
    in_y = np.sqrt(np.sum((sample.ys - li.v) ** 2, axis=1)) <= ty
    c11 = int(np.sum(in_x & in_y))
    c12 = int(np.sum(~in_x & in_y))
    c21 = int(np.sum(in_x & ~in_y))
    return CellCounts(c11, c12, c21, sample.n - c11 - c12 - c21)
