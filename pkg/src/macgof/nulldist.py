"""Simulated null distribution of the averaged MAC statistic, with caching.

Each null replicate mirrors the structure of the observed discrepancy:
draw a pseudo-observed response from the fitted working model, draw
``b_inner`` bootstrap responses the same way, and record the average MAC
between the pseudo-observed sample and the bootstrap samples.  Locations
are redrawn per replicate with the same (k, strategy).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from macgof.mac import MacConfig, RepeatedMac, select_locations
from macgof.models import FittedModel, ModelSpec, bootstrap_response, fit_model
from macgof.sample import PairedSample

__all__ = ["NullDistribution", "NullCache", "simulate_null", "p_value", "null_seed_for"]

CACHE_VERSION = 1
MIN_DRAWS = 99


@dataclass(frozen=True)
class NullDistribution:
    """Sorted Monte Carlo draws of the null statistic plus their provenance."""

    draws: np.ndarray
    meta: dict

    def __post_init__(self):
        draws = np.sort(np.asarray(self.draws, dtype=np.float64))
        if draws.shape[0] < MIN_DRAWS:
            raise ValueError(f"need at least {MIN_DRAWS} null draws, got {draws.shape[0]}")
        if not np.all(np.isfinite(draws)) or draws[0] < 0:
            raise ValueError("null draws must be finite and nonnegative")
        draws.flags.writeable = False
        object.__setattr__(self, "draws", draws)

    @property
    def m(self) -> int:
        return self.draws.shape[0]

    def quantile(self, q) -> float | np.ndarray:
        return np.quantile(self.draws, q)

    def summary(self) -> dict:
        qs = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)
        return {
            "m": self.m,
            "quantiles": {str(q): float(self.quantile(q)) for q in qs},
            "mean": float(self.draws.mean()),
        }


def p_value(observed: float, null: NullDistribution) -> float:
    """Right-tail Monte Carlo p-value with the add-one rule (never zero)."""
    if not np.isfinite(observed):
        raise ValueError("observed statistic must be finite")
    # draws are sorted: count of draws >= observed via searchsorted
    ge = null.m - int(np.searchsorted(null.draws, observed, side="left"))
    return (1 + ge) / (null.m + 1)


def null_seed_for(seed: int) -> int:
    """Derive the null-simulation seed from a run seed (stable across runs)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(0x6E756C6C,))  # 'null'
    return int(ss.generate_state(1, np.uint64)[0])


def _null_meta(fit: FittedModel, n: int, k: int, strategy: str, pair_ordering: str,
               bootstrap: str, b_inner: int, m: int, seed: int, protocol: str) -> dict:
    return {
        "version": CACHE_VERSION,
        "n": int(n),
        "k": int(k),
        "strategy": strategy,
        "pair_ordering": pair_ordering,
        "family": fit.family,
        "bootstrap": bootstrap,
        "b_inner": int(b_inner),
        "m": int(m),
        "seed": int(seed),
        "protocol": protocol,
    }


def _replicate_value(fit: FittedModel, xs: np.ndarray, kind: str, k: int, strategy: str,
                     pair_ordering: str, b_inner: int, refit: bool,
                     ss: np.random.SeedSequence) -> float:
    # one stream per replicate: the replicate is the parallelizable unit,
    # everything inside it is drawn sequentially from its own generator
    rng = np.random.default_rng(ss)
    y0 = bootstrap_response(fit, xs, kind, rng)
    gen_fit = fit
    if refit:
        if fit.fixed_means is not None:
            raise ValueError("refit protocol is unavailable for external-means models")
        if fit.family == "fixed-ar":
            gen_fit = fit  # fixed coefficients: refitting is the identity
        else:
            spec = ModelSpec(family=fit.family, feature_map=fit.feature_map)
            gen_fit = fit_model(spec, xs, y0)
    ystars = [bootstrap_response(gen_fit, xs, kind, rng) for _ in range(b_inner)]

    observed = PairedSample(xs, y0)
    locs = select_locations(
        observed,
        PairedSample(xs, ystars[0]),
        MacConfig(k=k, strategy=strategy, pair_ordering=pair_ordering),
        rng=rng,
    )
    scorer = RepeatedMac(observed, locs, pair_ordering)
    return float(np.mean([scorer.evaluate(y) for y in ystars]))


def simulate_null(fit: FittedModel, xs: np.ndarray, kind: str, *, k: int, strategy: str,
                  pair_ordering: str, b_inner: int, m: int, seed: int,
                  refit: bool = False) -> NullDistribution:
    """Monte Carlo null distribution of the averaged MAC statistic.

    The default "plugin" protocol keeps the originally fitted model as the
    generator in every replicate; ``refit=True`` refits the working model
    to each pseudo-observed response before drawing its bootstrap
    responses (accounts for estimation effects, at fitting cost).
    """
    if m < MIN_DRAWS:
        raise ValueError(f"m must be at least {MIN_DRAWS}")
    if b_inner < 1:
        raise ValueError("b_inner must be at least 1")
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    children = np.random.SeedSequence(seed).spawn(m)
    draws = np.array([
        _replicate_value(fit, xs, kind, k, strategy, pair_ordering, b_inner, refit, ss)
        for ss in children
    ])
    meta = _null_meta(fit, xs.shape[0], k, strategy, pair_ordering, kind, b_inner, m,
                      seed, "refit" if refit else "plugin")
    return NullDistribution(draws, meta)


class NullCache:
    """File cache of null distributions keyed by their exact meta block."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, meta: dict) -> Path:
        digest = hashlib.sha256(
            json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()[:20]
        return self.directory / f"nulldist_{digest}.json"

    def lookup(self, meta: dict) -> NullDistribution | None:
        path = self.path_for(meta)
        if not path.exists():
            return None
        try:
            payload = json.loads(path.read_text())
            if payload["version"] != CACHE_VERSION or payload["meta"] != meta:
                warnings.warn(f"cache entry {path.name} does not match its key; recomputing")
                return None
            return NullDistribution(np.asarray(payload["draws"], dtype=np.float64), meta)
        except (ValueError, KeyError, TypeError) as exc:
            warnings.warn(f"ignoring corrupt cache file {path.name}: {exc}")
            return None

    def store(self, null: NullDistribution) -> Path:
        path = self.path_for(null.meta)
        payload = {
            "version": CACHE_VERSION,
            "meta": null.meta,
            "draws": [float(d) for d in null.draws],
        }
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(payload, fh)
            os.replace(tmp, path)  # atomic within the cache directory
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        return path


def default_cache_dir() -> Path:
    env = os.environ.get("MACGOF_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "macgof"


def cached_or_simulated(cache: NullCache | None, fit: FittedModel, xs: np.ndarray,
                        kind: str, *, k: int, strategy: str, pair_ordering: str,
                        b_inner: int, m: int, seed: int, refit: bool) -> NullDistribution:
    """Look the distribution up in the cache, simulating and storing on miss."""
    meta = _null_meta(fit, np.asarray(xs).shape[0], k, strategy, pair_ordering,
                      kind, b_inner, m, seed, "refit" if refit else "plugin")
    if cache is not None:
        hit = cache.lookup(meta)
        if hit is not None:
            return hit
    null = simulate_null(fit, xs, kind, k=k, strategy=strategy,
                         pair_ordering=pair_ordering, b_inner=b_inner, m=m,
                         seed=seed, refit=refit)
    if cache is not None:
        cache.store(null)
    return null
