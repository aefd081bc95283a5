"""Simulation studies: power curves, calibration, and growth-rate checks.

Every study is driven by one integer seed; replicate streams are spawned
deterministically, so results are identical regardless of how many worker
processes run them.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats as spstats

from macgof.gof import GofConfig, gof_test
from macgof.mac import MacConfig, mac, select_locations
from macgof.models import FeatureMap, ModelSpec
from macgof.sample import PairedSample

__all__ = [
    "PowerCurve",
    "power_sim",
    "power_curve",
    "null_mac_draws",
    "critical_value",
    "chi2_convergence_check",
    "scaling_check",
    "example_replication",
    "calibration_study",
    "write_power_csv",
]

#: Covariate dimension and the c value at which each example's two
#: conditional distributions coincide.
EXAMPLE_DIM = {1: 1, 2: 2, 3: 2, 4: 5}
EXAMPLE_NULL_C = {1: 1.0, 2: 1.0, 3: 0.0, 4: 0.0}


def _resolve_workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("MACGOF_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def _pmap(fn, jobs, workers: int | None):
    nworkers = _resolve_workers(workers)
    if nworkers <= 1 or len(jobs) < 2:
        return [fn(job) for job in jobs]
    chunk = max(1, len(jobs) // (nworkers * 8))
    with ProcessPoolExecutor(max_workers=nworkers) as ex:
        return list(ex.map(fn, jobs, chunksize=chunk))


# --------------------------------------------------------------------- #
# Two-sample power studies
# --------------------------------------------------------------------- #


def _two_sample_pair(example: int, n: int, c: float,
                     rng: np.random.Generator) -> tuple[PairedSample, PairedSample]:
    """One replicate of (X, Y) vs (X, Y*) for the given example design.

    Both samples share the covariate draw; Y* always follows the example's
    base conditional law and Y follows the c-perturbed one.
    """
    if example not in EXAMPLE_DIM:
        raise ValueError(f"unknown example {example!r}")
    d = EXAMPLE_DIM[example]
    x = rng.standard_normal((n, d))
    if example == 1:
        base = x[:, 0]
        shifted = c * x[:, 0]
    elif example == 2:
        base = x[:, 0] + x[:, 1]
        shifted = x[:, 0] + c * x[:, 1]
    elif example == 3:
        base = x[:, 0] + x[:, 1]
        shifted = base + c * x[:, 0] * x[:, 1]
    elif example == 4:
        base = x.sum(axis=1)
        shifted = base + c * np.prod(x, axis=1)
    else:
        raise ValueError(f"unknown example {example!r}")
    y = shifted + rng.standard_normal(n)
    y_star = base + rng.standard_normal(n)
    return PairedSample(x, y), PairedSample(x, y_star)


def _mac_replicate(args) -> float:
    example, n, c, k, ss = args
    ss_data, ss_loc = ss.spawn(2)
    sample_a, sample_b = _two_sample_pair(example, n, c, np.random.default_rng(ss_data))
    cfg = MacConfig(k=k)
    locs = select_locations(sample_a, sample_b, cfg, rng=np.random.default_rng(ss_loc))
    return mac(sample_a, sample_b, locs, cfg).value


def _as_seedseq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def null_mac_draws(example: int, n: int, k: int | None = None, m: int = 1999,
                   seed: int = 0, workers: int | None = 1) -> np.ndarray:
    """Monte Carlo MAC draws with both samples from the example's base law."""
    children = _as_seedseq(seed).spawn(m)
    c0 = EXAMPLE_NULL_C[example]
    vals = _pmap(_mac_replicate, [(example, n, c0, k, ss) for ss in children], workers)
    return np.sort(np.asarray(vals))


def critical_value(null_draws: np.ndarray, alpha: float) -> float:
    """Rejection threshold: the ceil((1-alpha)(m+1))-th order statistic.

    Rejecting when the statistic exceeds it gives exact level alpha for
    continuous exchangeable draws.
    """
    draws = np.sort(np.asarray(null_draws))
    m = draws.shape[0]
    rank = int(np.ceil((1 - alpha) * (m + 1)))
    if rank > m:
        raise ValueError(f"alpha={alpha} needs more than {m} null draws")
    return float(draws[rank - 1])


def power_sim(example: int, n: int, c: float, reps: int = 500, alpha: float = 0.05,
              k: int | None = None, seed: int = 0,
              null_draws: np.ndarray | None = None,
              workers: int | None = 1) -> float:
    """Rejection rate of the two-sample MAC test at one (example, n, c)."""
    root = _as_seedseq(seed)
    ss_null, ss_reps = root.spawn(2)
    if null_draws is None:
        null_draws = null_mac_draws(example, n, k=k, seed=ss_null, workers=workers)
    c_crit = critical_value(null_draws, alpha)
    children = ss_reps.spawn(reps)
    vals = _pmap(_mac_replicate, [(example, n, c, k, ss) for ss in children], workers)
    return float(np.mean(np.asarray(vals) > c_crit))


@dataclass(frozen=True)
class PowerCurve:
    example: int
    n: int
    cs: tuple[float, ...]
    rates: tuple[float, ...]
    reps: int
    alpha: float
    k: int | None
    seed: int

    def monte_carlo_se(self) -> tuple[float, ...]:
        return tuple(float(np.sqrt(r * (1 - r) / self.reps)) for r in self.rates)


def power_curve(example: int, n: int, cs, reps: int = 500, alpha: float = 0.05,
                k: int | None = None, seed: int = 0, null_m: int = 1999,
                workers: int | None = 1) -> PowerCurve:
    """Rejection rates over a grid of c values, sharing one null simulation."""
    ss_null = np.random.SeedSequence(entropy=seed, spawn_key=(2,))
    draws = null_mac_draws(example, n, k=k, m=null_m, seed=ss_null, workers=workers)
    rates = []
    for idx, c in enumerate(cs):
        rate = power_sim(example, n, float(c), reps=reps, alpha=alpha, k=k,
                         seed=_grid_seed(seed, idx), null_draws=draws,
                         workers=workers)
        rates.append(rate)
    return PowerCurve(example=example, n=n, cs=tuple(float(c) for c in cs),
                      rates=tuple(rates), reps=reps, alpha=alpha, k=k, seed=seed)


def _grid_seed(seed: int, idx: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(1, idx))


def write_power_csv(path, curves) -> None:
    """Tidy CSV: one row per (example, n, c) with the estimated rate."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example", "n", "c", "rate", "reps", "alpha", "k", "seed"])
        for curve in curves:
            for c, rate in zip(curve.cs, curve.rates):
                writer.writerow([curve.example, curve.n, c, rate, curve.reps,
                                 curve.alpha, "" if curve.k is None else curve.k,
                                 curve.seed])


# --------------------------------------------------------------------- #
# Distributional checks
# --------------------------------------------------------------------- #


def chi2_convergence_check(n: int = 2000, m: int = 5000,
                           probs=(0.25, 0.25, 0.25, 0.25), seed: int = 0) -> dict:
    """Compare simulated local statistics to their chi-squared limit.

    Two independent multinomial count vectors with identical cell
    probabilities stand in for the two samples on a fixed partition; the
    statistic's limit has (cells - 1) degrees of freedom.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if abs(probs.sum() - 1.0) > 1e-9 or np.any(probs <= 0):
        raise ValueError("cell probabilities must be positive and sum to 1")
    rng = np.random.default_rng(seed)
    u = rng.multinomial(n, probs, size=m).astype(np.int64)
    v = rng.multinomial(n, probs, size=m).astype(np.int64)
    d = u - v
    r = u + v
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(r > 0, (d * d) / r, 0.0)
    t = terms.sum(axis=1)
    df = probs.shape[0] - 1
    ks = spstats.kstest(t, spstats.chi2(df).cdf).statistic
    return {"ks": float(ks), "mean": float(t.mean()), "df": df, "m": m, "n": n}


def scaling_check(hypothesis: str, ns=(100, 200, 400, 800), k: int = 100,
                  reps: int = 100, c: float = 3.0, seed: int = 0,
                  workers: int | None = 1) -> dict:
    """Log-log slope of the median MAC against n.

    ``h0`` draws both samples from the same law (so the median stays
    nearly flat); ``h1`` uses the one-dimensional slope-shift design with
    the given c (so the median grows about linearly).
    """
    if hypothesis not in ("h0", "h1"):
        raise ValueError("hypothesis must be 'h0' or 'h1'")
    c_used = EXAMPLE_NULL_C[1] if hypothesis == "h0" else c
    medians = []
    for idx, n in enumerate(ns):
        children = _grid_seed(seed, idx).spawn(reps)
        vals = _pmap(_mac_replicate, [(1, n, c_used, k, ss) for ss in children], workers)
        medians.append(float(np.median(vals)))
    slope = float(np.polyfit(np.log(np.asarray(ns, float)), np.log(medians), 1)[0])
    return {"ns": tuple(ns), "medians": tuple(medians), "slope": slope,
            "hypothesis": hypothesis, "k": k, "c": c_used}


# --------------------------------------------------------------------- #
# End-to-end model-assessment replications
# --------------------------------------------------------------------- #


def _replication_data(example: str, n: int,
                      rng: np.random.Generator) -> tuple[PairedSample, ModelSpec]:
    if example in ("5a", "5b"):
        x = rng.uniform(0.0, 1.0, n)
        eps = rng.standard_normal(n)
        y = 10.0 * (x - 0.2) ** 2 + eps if example == "5a" else 4.7 * x + eps
        return PairedSample(x, y), ModelSpec("gaussian", FeatureMap())
    if example == "6":
        x = rng.standard_normal(n)
        prob = 1.0 / (1.0 + np.exp(-(2.0 * x + x**2)))
        y = rng.binomial(1, prob).astype(np.float64)
        return PairedSample(x, y), ModelSpec("logistic", FeatureMap())
    raise ValueError(f"unknown replication example {example!r}")


def _gof_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def _replication_job(args) -> float:
    example, n, b, m, k, ss = args
    ss_data, ss_gof = ss.spawn(2)
    data, spec = _replication_data(example, n, np.random.default_rng(ss_data))
    cfg = GofConfig(b=b, m=m, mac=MacConfig(k=k), seed=_gof_seed(ss_gof))
    return gof_test(data, spec, cfg).p_value


def example_replication(example: str, reps: int = 100, n: int = 200, b: int = 200,
                        m: int = 199, k: int | None = None, alpha: float = 0.05,
                        seed: int = 0, workers: int | None = None) -> dict:
    """Repeated end-to-end assessment runs on freshly simulated data."""
    children = np.random.SeedSequence(seed).spawn(reps)
    pvals = np.asarray(_pmap(_replication_job,
                             [(example, n, b, m, k, ss) for ss in children], workers))
    return {
        "example": example,
        "p_values": pvals,
        "rejection_rate": float(np.mean(pvals <= alpha)),
        "reps": reps,
        "alpha": alpha,
    }


def _calibration_job(args) -> float:
    n, b, m, k, ss = args
    ss_data, ss_gof = ss.spawn(2)
    rng = np.random.default_rng(ss_data)
    x = rng.standard_normal(n)
    y = 1.0 + 2.0 * x + rng.standard_normal(n)
    cfg = GofConfig(b=b, m=m, mac=MacConfig(k=k), seed=_gof_seed(ss_gof))
    return gof_test(PairedSample(x, y), ModelSpec("gaussian"), cfg).p_value


def calibration_study(reps: int = 200, n: int = 100, k: int = 50, b: int = 50,
                      m: int = 199, seed: int = 0, workers: int | None = None) -> dict:
    """P-value uniformity when the data really follow the working model."""
    children = np.random.SeedSequence(seed).spawn(reps)
    pvals = np.asarray(_pmap(_calibration_job,
                             [(n, b, m, k, ss) for ss in children], workers))
    ks = spstats.kstest(pvals, spstats.uniform.cdf).statistic
    return {"p_values": pvals, "ks": float(ks), "reps": reps}
