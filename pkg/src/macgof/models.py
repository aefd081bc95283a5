"""Working-model fitting and bootstrap response generation.

Supports Gaussian linear models with configurable feature maps, logistic
and Poisson regression with canonical links (IRLS with step halving),
fixed-coefficient autoregressive simulators (including two-regime
threshold models), and externally fitted mean vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg

from macgof.errors import DataError, NumericalError
from macgof.sample import PairedSample

__all__ = [
    "FeatureMap",
    "ModelSpec",
    "FittedModel",
    "NoiseSpec",
    "ThresholdRegime",
    "FixedARSpec",
    "design_matrix",
    "feature_names",
    "fit_ols",
    "fit_glm",
    "fit_model",
    "fit_external",
    "predict",
    "bootstrap_response",
    "simulate_ar",
    "lag_embed",
    "sunspot_ar9_model",
    "sunspot_tar_model",
    "sunspot_ar2_lognormal_model",
]

FAMILIES = ("gaussian", "logistic", "poisson", "fixed-ar", "external")

MAX_IRLS_ITER = 100
IRLS_TOL = 1e-8  # max-abs score at convergence
#: |coefficient| beyond this in a logistic fit is treated as complete
#: separation (a logit of 30 is a probability within 1e-13 of 0 or 1).
SEPARATION_BOUND = 30.0
_MU_EPS = 1e-10


@dataclass(frozen=True)
class FeatureMap:
    """Deterministic map from a covariate vector to a design row.

    ``linear`` uses the covariates as-is; ``polynomial`` adds elementwise
    powers up to ``degree``; ``interactions`` adds products of distinct
    covariates up to order ``degree``; ``intercept`` ignores the
    covariates entirely.  The intercept column comes first when
    ``include_intercept`` is set.
    """

    kind: str = "linear"  # linear | polynomial | interactions | intercept
    degree: int = 1
    include_intercept: bool = True

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "interactions", "intercept"):
            raise ValueError(f"unknown feature map kind {self.kind!r}")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.kind == "intercept" and not self.include_intercept:
            raise ValueError("an intercept-only map must include the intercept")


def design_matrix(fm: FeatureMap, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    if fm.kind == "intercept":
        return np.ones((xs.shape[0], 1))
    cols = [xs]
    if fm.kind == "polynomial":
        for d in range(2, fm.degree + 1):
            cols.append(xs**d)
    elif fm.kind == "interactions":
        p = xs.shape[1]
        for order in range(2, fm.degree + 1):
            for combo in combinations(range(p), order):
                cols.append(np.prod(xs[:, combo], axis=1, keepdims=True))
    design = np.hstack(cols)
    if fm.include_intercept:
        design = np.hstack([np.ones((design.shape[0], 1)), design])
    return design


def feature_names(fm: FeatureMap, p: int) -> list[str]:
    if fm.kind == "intercept":
        return ["intercept"]
    names = [f"x{j + 1}" for j in range(p)]
    if fm.kind == "polynomial":
        for d in range(2, fm.degree + 1):
            names += [f"x{j + 1}^{d}" for j in range(p)]
    elif fm.kind == "interactions":
        for order in range(2, fm.degree + 1):
            for combo in combinations(range(p), order):
                names.append("*".join(f"x{j + 1}" for j in combo))
    if fm.include_intercept:
        names = ["intercept"] + names
    return names


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise for fixed-coefficient AR models.

    ``gaussian`` draws scale * N(0, variance); ``lognormal`` draws from the
    log-normal distribution with the given mean and variance of the noise
    variable itself.
    """

    kind: str = "gaussian"  # gaussian | lognormal
    variance: float = 1.0
    mean: float = 0.0  # lognormal only
    scale: float = 1.0  # multiplier on the draws (e.g. a doubled regime)

    def __post_init__(self):
        if self.kind not in ("gaussian", "lognormal"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")
        if self.kind == "lognormal" and self.mean <= 0:
            raise ValueError("lognormal noise needs a positive mean")

    def draw(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "gaussian":
            return self.scale * rng.normal(0.0, math.sqrt(self.variance), size)
        # convert (mean, variance) of the variable to underlying normal params
        sigma2 = math.log(1.0 + self.variance / self.mean**2)
        mu = math.log(self.mean) - sigma2 / 2.0
        return self.scale * rng.lognormal(mu, math.sqrt(sigma2), size)


@dataclass(frozen=True)
class ThresholdRegime:
    """Second AR regime, active when the threshold lag exceeds the boundary."""

    lag: int  # regime decided by z_{t-lag}
    threshold: float  # base regime applies when z_{t-lag} <= threshold
    intercept: float
    coefficients: tuple[float, ...]
    noise: NoiseSpec


@dataclass(frozen=True)
class FixedARSpec:
    """Autoregression with known coefficients (optionally two regimes)."""

    intercept: float
    coefficients: tuple[float, ...]
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    regime: ThresholdRegime | None = None

    def __post_init__(self):
        if len(self.coefficients) < 1:
            raise ValueError("need at least one lag coefficient")

    @property
    def order(self) -> int:
        order = len(self.coefficients)
        if self.regime is not None:
            order = max(order, len(self.regime.coefficients), self.regime.lag)
        return order


@dataclass(frozen=True)
class ModelSpec:
    """What to fit: family plus feature map, or a fixed AR specification."""

    family: str = "gaussian"
    feature_map: FeatureMap = field(default_factory=FeatureMap)
    ar: FixedARSpec | None = None

    def __post_init__(self):
        if self.family not in ("gaussian", "logistic", "poisson", "fixed-ar"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "fixed-ar" and self.ar is None:
            raise ValueError("fixed-ar requires an AR specification")


@dataclass(frozen=True)
class FittedModel:
    """Frozen result of fitting (or adopting) a working model."""

    family: str
    feature_map: FeatureMap | None
    theta_hat: np.ndarray
    dispersion: float  # error variance for gaussian; unused otherwise
    residuals: np.ndarray | None  # gaussian only
    diagnostics: dict
    ar_spec: FixedARSpec | None = None
    fixed_means: np.ndarray | None = None  # externally supplied mean vector

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        theta = np.asarray(self.theta_hat, dtype=np.float64)
        if theta.size and not np.all(np.isfinite(theta)):
            raise NumericalError("non-finite coefficients in fitted model")
        object.__setattr__(self, "theta_hat", theta)

    def summary(self) -> dict:
        out = {
            "family": self.family,
            "theta_hat": [float(t) for t in self.theta_hat],
            "dispersion": float(self.dispersion),
            "diagnostics": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                            for k, v in self.diagnostics.items()},
        }
        if self.feature_map is not None:
            out["feature_map"] = {
                "kind": self.feature_map.kind,
                "degree": self.feature_map.degree,
                "include_intercept": self.feature_map.include_intercept,
            }
        return out


def _check_design(design: np.ndarray, y: np.ndarray, fm: FeatureMap, p: int):
    n, m = design.shape
    if y.shape[0] != n:
        raise DataError("response length does not match the covariates")
    if n <= m:
        raise DataError(f"need more observations ({n}) than design columns ({m})")
    # rank check via pivoted QR; report the trailing pivot columns if deficient
    _, r, piv = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, m) * np.finfo(np.float64).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < m:
        names = feature_names(fm, p)
        bad = sorted(names[j] for j in piv[rank:])
        raise NumericalError(f"design matrix is rank deficient; collinear columns: {', '.join(bad)}")


def fit_ols(xs: np.ndarray, y: np.ndarray, fm: FeatureMap | None = None) -> FittedModel:
    """Least-squares fit of a Gaussian working model."""
    fm = fm or FeatureMap()
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    design = design_matrix(fm, xs)
    _check_design(design, y, fm, xs.shape[1])
    n, m = design.shape
    theta, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ theta
    rss = float(resid @ resid)
    return FittedModel(
        family="gaussian",
        feature_map=fm,
        theta_hat=theta,
        dispersion=rss / (n - m),
        residuals=resid,
        diagnostics={"rss": rss, "iterations": 1},
    )


def _glm_mu(family: str, eta: np.ndarray) -> np.ndarray:
    if family == "logistic":
        return 1.0 / (1.0 + np.exp(-eta))
    return np.exp(eta)


def glm_loglik(family: str, eta: np.ndarray, y: np.ndarray) -> float:
    """Log-likelihood (up to additive constants) at the linear predictor."""
    if family == "logistic":
        # y*eta - log(1 + exp(eta)), stable for large |eta|
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    return float(np.sum(y * eta - np.exp(eta)))


def _glm_deviance(family: str, mu: np.ndarray, y: np.ndarray) -> float:
    mu = np.clip(mu, _MU_EPS, None)
    if family == "logistic":
        mu = np.clip(mu, _MU_EPS, 1.0 - _MU_EPS)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(y > 0, y * np.log(y / mu), 0.0)
            t2 = np.where(y < 1, (1 - y) * np.log((1 - y) / (1 - mu)), 0.0)
        return float(2.0 * np.sum(t1 + t2))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(t - (y - mu)))


def fit_glm(xs: np.ndarray, y: np.ndarray, family: str, fm: FeatureMap | None = None) -> FittedModel:
    """Maximum-likelihood fit of a logistic or Poisson working model.

    Iteratively reweighted least squares with step halving; converges when
    the max-abs score drops below ``IRLS_TOL``.  Logistic fits whose
    coefficients run past ``SEPARATION_BOUND`` are reported as complete
    separation.
    """
    if family not in ("logistic", "poisson"):
        raise ValueError(f"fit_glm supports logistic and poisson, got {family!r}")
    fm = fm or FeatureMap()
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if family == "logistic" and not np.all(np.isin(y, (0.0, 1.0))):
        raise DataError("logistic responses must be 0 or 1")
    if family == "poisson":
        if np.any(y < 0) or np.any(y != np.floor(y)):
            raise DataError("poisson responses must be nonnegative integers")
    design = design_matrix(fm, xs)
    _check_design(design, y, fm, xs.shape[1])
    n, m = design.shape

    # standard mean-space start, then iterate on theta with step halving
    if family == "logistic":
        mu = (y + 0.5) / 2.0
    else:
        mu = y + np.maximum(np.mean(y), 0.5) / 2.0
    eta = np.log(mu / (1.0 - mu)) if family == "logistic" else np.log(mu)

    theta = None
    deviance = np.inf
    dev_path: list[float] = []
    for iteration in range(1, MAX_IRLS_ITER + 1):
        w = mu * (1.0 - mu) if family == "logistic" else mu
        w = np.maximum(w, _MU_EPS)
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        proposal, _, _, _ = np.linalg.lstsq(design * sw[:, None], z * sw, rcond=None)

        if theta is not None:
            # step halving: back off toward the previous accepted iterate
            step = proposal - theta
            for _ in range(30):
                cand = theta + step
                dev = _glm_deviance(family, _glm_mu(family, design @ cand), y)
                if dev <= deviance + 1e-12:
                    break
                step /= 2.0
            proposal = theta + step

        theta = proposal
        eta = design @ theta
        if np.any(np.abs(eta) > 500):
            raise NumericalError(f"{family} fit diverged (linear predictor overflow)")
        mu = _glm_mu(family, eta)
        deviance = _glm_deviance(family, mu, y)
        dev_path.append(deviance)
        score = design.T @ (y - mu)
        score_norm = float(np.max(np.abs(score)))
        if family == "logistic" and np.max(np.abs(theta)) > SEPARATION_BOUND:
            raise NumericalError(
                "complete separation suspected: coefficient magnitude exceeded "
                f"{SEPARATION_BOUND} during logistic fitting"
            )
        if score_norm <= IRLS_TOL:
            return FittedModel(
                family=family,
                feature_map=fm,
                theta_hat=theta,
                dispersion=0.0,
                residuals=None,
                diagnostics={
                    "deviance": deviance,
                    "loglik": glm_loglik(family, eta, y),
                    "iterations": iteration,
                    "score_norm": score_norm,
                    "deviance_path": dev_path,
                },
            )
    raise NumericalError(
        f"{family} IRLS did not converge in {MAX_IRLS_ITER} iterations "
        f"(last max-abs score {score_norm:.3e}, deviance {deviance:.6g})"
    )


def fit_model(spec: ModelSpec, xs: np.ndarray, y: np.ndarray) -> FittedModel:
    """Fit the working model described by ``spec`` to (xs, y)."""
    if spec.family == "gaussian":
        return fit_ols(xs, y, spec.feature_map)
    if spec.family in ("logistic", "poisson"):
        return fit_glm(xs, y, spec.family, spec.feature_map)
    # fixed-ar: coefficients are given, nothing to estimate
    return FittedModel(
        family="fixed-ar",
        feature_map=None,
        theta_hat=np.array([spec.ar.intercept, *spec.ar.coefficients]),
        dispersion=0.0,
        residuals=None,
        diagnostics={"iterations": 0},
        ar_spec=spec.ar,
    )


def fit_external(means: np.ndarray, family: str, sigma2: float | None = None,
                 y: np.ndarray | None = None) -> FittedModel:
    """Adopt an externally fitted mean vector as the working model.

    ``family`` names the response distribution around the means
    (gaussian / logistic / poisson).  For gaussian, ``sigma2`` may be
    omitted when ``y`` is given; it is then estimated from y - means.
    """
    means = np.asarray(means, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(means)):
        raise DataError("external means contain non-finite values")
    if family == "logistic" and (np.any(means < 0) or np.any(means > 1)):
        raise DataError("logistic means must lie in [0, 1]")
    if family == "poisson" and np.any(means < 0):
        raise DataError("poisson means must be nonnegative")
    dispersion = 0.0
    if family == "gaussian":
        if sigma2 is None:
            if y is None:
                raise ValueError("gaussian external model needs sigma2 or the observed y")
            resid = np.asarray(y, dtype=np.float64).reshape(-1) - means
            dispersion = float(np.mean(resid**2))
        else:
            if sigma2 < 0:
                raise ValueError("sigma2 must be nonnegative")
            dispersion = float(sigma2)
    elif family not in ("logistic", "poisson"):
        raise ValueError(f"unsupported external family {family!r}")
    return FittedModel(
        family=family,
        feature_map=None,
        theta_hat=np.empty(0),
        dispersion=dispersion,
        residuals=None,
        diagnostics={"external": True},
        fixed_means=means,
    )


def _ar_means(spec: FixedARSpec, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conditional means for lag rows, plus the mask of rows in the base regime."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    if xs.shape[1] < spec.order:
        raise DataError(f"lag matrix has {xs.shape[1]} columns; model needs {spec.order}")
    base_coefs = np.asarray(spec.coefficients)
    mu = spec.intercept + xs[:, : base_coefs.size] @ base_coefs
    base_mask = np.ones(xs.shape[0], dtype=bool)
    if spec.regime is not None:
        reg = spec.regime
        base_mask = xs[:, reg.lag - 1] <= reg.threshold
        reg_coefs = np.asarray(reg.coefficients)
        mu_reg = reg.intercept + xs[:, : reg_coefs.size] @ reg_coefs
        mu = np.where(base_mask, mu, mu_reg)
    return mu, base_mask


def predict(fit: FittedModel, xs: np.ndarray) -> np.ndarray:
    """Conditional mean of the response under the fitted model."""
    if fit.fixed_means is not None:
        xs = np.asarray(xs)
        if xs.shape[0] != fit.fixed_means.shape[0]:
            raise DataError("covariate rows do not match the external mean vector")
        return fit.fixed_means.copy()
    if fit.family == "fixed-ar":
        mu, _ = _ar_means(fit.ar_spec, xs)
        return mu
    eta = design_matrix(fit.feature_map, xs) @ fit.theta_hat
    if fit.family == "gaussian":
        return eta
    return _glm_mu(fit.family, eta)


def bootstrap_response(fit: FittedModel, xs: np.ndarray, kind: str,
                       rng: np.random.Generator) -> np.ndarray:
    """Simulate one response vector from the fitted working model.

    ``residual`` resamples centered residuals with replacement (gaussian
    fits only); ``parametric`` draws from the fitted response distribution.
    """
    if kind not in ("residual", "parametric"):
        raise ValueError(f"bootstrap kind must be 'residual' or 'parametric', got {kind!r}")
    mu = predict(fit, xs)
    if kind == "residual":
        if fit.family != "gaussian" or fit.residuals is None:
            raise ValueError("no residual bootstrap for this family")
        # re-centering keeps the bootstrap errors mean-zero even when the
        # feature map carries no intercept
        centered = fit.residuals - fit.residuals.mean()
        return mu + rng.choice(centered, size=mu.shape[0], replace=True)
    if fit.family == "gaussian":
        return mu + rng.normal(0.0, math.sqrt(fit.dispersion), mu.shape[0])
    if fit.family == "logistic":
        return rng.binomial(1, mu).astype(np.float64)
    if fit.family == "poisson":
        return rng.poisson(mu).astype(np.float64)
    # fixed-ar: one-step-ahead draws conditional on the observed lag rows
    spec = fit.ar_spec
    mu, base_mask = _ar_means(spec, xs)
    out = mu.copy()
    n_base = int(base_mask.sum())
    out[base_mask] += spec.noise.draw(n_base, rng)
    if spec.regime is not None and n_base < out.shape[0]:
        out[~base_mask] += spec.regime.noise.draw(out.shape[0] - n_base, rng)
    return out


def simulate_ar(spec: FixedARSpec, length: int, burn_in: int,
                init: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Simulate a fixed-coefficient AR series.

    ``init`` seeds the recursion (at least ``spec.order`` values); the
    returned series holds ``length`` values generated after discarding
    ``burn_in`` steps.
    """
    order = spec.order
    init = np.asarray(init, dtype=np.float64).reshape(-1)
    if init.shape[0] < order:
        raise ValueError(f"init must provide at least {order} values")
    if length <= order:
        raise ValueError("length must exceed the lag order")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")

    total = burn_in + length
    hist = np.empty(init.shape[0] + total)
    hist[: init.shape[0]] = init
    pos = init.shape[0]
    base_coefs = np.asarray(spec.coefficients)
    reg = spec.regime
    reg_coefs = np.asarray(reg.coefficients) if reg is not None else None

    for step in range(total):
        lags = hist[pos - order : pos][::-1]  # (z_{t-1}, ..., z_{t-order})
        if reg is not None and lags[reg.lag - 1] > reg.threshold:
            val = reg.intercept + lags[: reg_coefs.size] @ reg_coefs + reg.noise.draw(1, rng)[0]
        else:
            val = spec.intercept + lags[: base_coefs.size] @ base_coefs + spec.noise.draw(1, rng)[0]
        if not np.isfinite(val) or abs(val) > 1e12:
            raise NumericalError(f"AR recursion exploded at step {step}")
        hist[pos] = val
        pos += 1
    return hist[init.shape[0] + burn_in :].copy()


def lag_embed(series: np.ndarray, order: int) -> PairedSample:
    """Embed a series as (lag vector, current value) pairs.

    Row t has x = (z_{t-1}, ..., z_{t-order}) and y = z_t; the first
    ``order`` observations seed the lags and are dropped as responses.
    """
    series = np.asarray(series, dtype=np.float64).reshape(-1)
    if order < 1:
        raise ValueError("order must be >= 1")
    if series.shape[0] <= order:
        raise DataError("series shorter than the lag order")
    t = series.shape[0]
    xs = np.column_stack([series[order - 1 - j : t - 1 - j] for j in range(order)])
    return PairedSample(xs, series[order:])


# --------------------------------------------------------------------- #
# Published sunspot models (fixed coefficients) used by the CLI recipes
# --------------------------------------------------------------------- #


def sunspot_ar9_model() -> FixedARSpec:
    return FixedARSpec(
        intercept=6.96,
        coefficients=(1.21, -0.45, -0.17, 0.20, -0.13, 0.03, 0.01, -0.03, 0.21),
        noise=NoiseSpec("gaussian", variance=221.24),
    )


def sunspot_tar_model() -> FixedARSpec:
    return FixedARSpec(
        intercept=10.88,
        coefficients=(1.869, -1.556, 0.086, 0.326),
        noise=NoiseSpec("gaussian", variance=275.7),
        regime=ThresholdRegime(
            lag=3,
            threshold=32.3,
            intercept=8.726,
            coefficients=(0.679, 0.064, -0.217, 0.044, -0.118, -0.005,
                          0.192, -0.285, 0.242, -0.123, 0.246),
            noise=NoiseSpec("gaussian", variance=82.9, scale=2.0),
        ),
    )


def sunspot_ar2_lognormal_model() -> FixedARSpec:
    return FixedARSpec(
        intercept=0.0,
        coefficients=(1.6759, -0.7840),
        noise=NoiseSpec("lognormal", variance=153.39, mean=13.88),
    )
