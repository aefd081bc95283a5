"""Model fitting, bootstrap response generation, and AR simulators."""

import numpy as np
import pytest

from macgof.errors import DataError, NumericalError
from macgof.models import (
    FeatureMap,
    FixedARSpec,
    ModelSpec,
    NoiseSpec,
    ThresholdRegime,
    bootstrap_response,
    design_matrix,
    feature_names,
    fit_external,
    fit_glm,
    fit_model,
    fit_ols,
    glm_loglik,
    lag_embed,
    predict,
    simulate_ar,
    sunspot_ar2_lognormal_model,
    sunspot_ar9_model,
    sunspot_tar_model,
)


class TestFeatureMap:
    def test_linear_design(self):
        xs = np.array([[1.0, 2.0], [3.0, 4.0]])
        d = design_matrix(FeatureMap(), xs)
        assert np.array_equal(d, [[1, 1, 2], [1, 3, 4]])

    def test_polynomial_design(self):
        xs = np.array([[2.0]])
        d = design_matrix(FeatureMap("polynomial", degree=3), xs)
        assert np.array_equal(d, [[1, 2, 4, 8]])

    def test_interactions_design(self):
        xs = np.array([[2.0, 3.0]])
        d = design_matrix(FeatureMap("interactions", degree=2), xs)
        assert np.array_equal(d, [[1, 2, 3, 6]])

    def test_intercept_only(self):
        d = design_matrix(FeatureMap("intercept"), np.ones((4, 3)))
        assert np.array_equal(d, np.ones((4, 1)))

    def test_names_align_with_columns(self):
        fm = FeatureMap("interactions", degree=2)
        names = feature_names(fm, 3)
        assert names == ["intercept", "x1", "x2", "x3", "x1*x2", "x1*x3", "x2*x3"]
        assert design_matrix(fm, np.ones((2, 3))).shape[1] == len(names)


class TestFitOls:
    def test_exact_fit(self):
        fit = fit_ols(np.array([0.0, 1.0, 2.0]), np.array([1.0, 3.0, 5.0]))
        assert fit.theta_hat == pytest.approx([1.0, 2.0])
        assert fit.residuals == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)
        assert predict(fit, np.array([3.0])) == pytest.approx([7.0])

    def test_zero_response(self, rng):
        fit = fit_ols(rng.normal(size=(20, 2)), np.zeros(20))
        assert fit.theta_hat == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)

    def test_matches_normal_equations_oracle(self, rng):
        """Independent route: solve (D'D) theta = D'y directly."""
        xs = rng.normal(size=(50, 3))
        y = rng.normal(size=50)
        fit = fit_ols(xs, y)
        design = design_matrix(fit.feature_map, xs)
        oracle = np.linalg.solve(design.T @ design, design.T @ y)
        assert fit.theta_hat == pytest.approx(oracle, abs=1e-8)

    def test_residuals_sum_to_zero_with_intercept(self, rng):
        xs = rng.normal(size=(80, 2))
        y = xs @ np.array([1.0, -2.0]) + rng.normal(size=80)
        fit = fit_ols(xs, y)
        assert abs(fit.residuals.sum()) < 1e-8 * 80

    def test_residual_orthogonality(self, rng):
        xs = rng.normal(size=(60, 3))
        y = rng.normal(size=60)
        fit = fit_ols(xs, y)
        design = design_matrix(fit.feature_map, xs)
        assert np.max(np.abs(design.T @ fit.residuals)) < 1e-8 * 60

    def test_dispersion_uses_residual_degrees(self, rng):
        xs = rng.normal(size=(30, 1))
        y = rng.normal(size=30)
        fit = fit_ols(xs, y)
        rss = float(fit.residuals @ fit.residuals)
        assert fit.dispersion == pytest.approx(rss / (30 - 2))

    def test_rank_deficiency_names_columns(self, rng):
        xs = rng.normal(size=(40, 1))
        dup = np.column_stack([xs, xs])
        with pytest.raises(NumericalError, match="collinear"):
            fit_ols(dup, rng.normal(size=40))

    def test_too_few_rows(self):
        with pytest.raises(DataError):
            fit_ols(np.ones((2, 3)), np.ones(2))


class TestFitGlm:
    def test_logistic_closed_form_binary_covariate(self):
        """Saturated MLE: logit(1/4) at x=0 and logit(3/4) at x=1."""
        x = np.repeat([0.0, 1.0], 4)
        y = np.array([1, 0, 0, 0, 1, 1, 1, 0], dtype=float)
        fit = fit_glm(x, y, "logistic")
        assert fit.theta_hat[0] == pytest.approx(np.log(1 / 3), abs=1e-6)
        assert fit.theta_hat[1] == pytest.approx(2 * np.log(3), abs=1e-6)

    def test_poisson_intercept_only(self):
        fit = fit_glm(np.zeros((3, 0)), np.array([1.0, 2.0, 3.0]), "poisson",
                      FeatureMap("intercept"))
        assert fit.theta_hat == pytest.approx([np.log(2.0)], abs=1e-8)

    def test_quadratic_logistic_fit_near_pseudo_true(self):
        """Linear-logistic fit of data whose true logit is 2x + x^2.

        The population best linear fit of this design is near
        (0.447, 1.147) (numerical quadrature); at n=200 the estimates
        concentrate there within sampling error.
        """
        rng = np.random.default_rng(2)
        x = rng.standard_normal(200)
        prob = 1 / (1 + np.exp(-(2 * x + x**2)))
        y = rng.binomial(1, prob).astype(float)
        fit = fit_glm(x, y, "logistic")
        assert abs(fit.theta_hat[0] - 0.4467) < 0.5
        assert abs(fit.theta_hat[1] - 1.1473) < 0.6

    def test_score_equations_satisfied(self, rng):
        x = rng.normal(size=(100, 2))
        y = rng.binomial(1, 0.5, size=100).astype(float)
        fit = fit_glm(x, y, "logistic")
        design = design_matrix(fit.feature_map, x)
        mu = predict(fit, x)
        assert np.max(np.abs(design.T @ (y - mu))) <= 1e-8

    def test_gradient_matches_finite_differences(self, rng):
        """Analytic score vs numerical gradient of the log-likelihood."""
        for family in ("logistic", "poisson"):
            x = rng.normal(size=(40, 2))
            if family == "logistic":
                y = rng.binomial(1, 0.4, size=40).astype(float)
            else:
                y = rng.poisson(2.0, size=40).astype(float)
            fm = FeatureMap()
            design = design_matrix(fm, x)
            theta = rng.normal(scale=0.3, size=design.shape[1])
            mu = (1 / (1 + np.exp(-design @ theta)) if family == "logistic"
                  else np.exp(design @ theta))
            score = design.T @ (y - mu)
            eps = 1e-6
            for j in range(theta.size):
                up, dn = theta.copy(), theta.copy()
                up[j] += eps
                dn[j] -= eps
                fd = (glm_loglik(family, design @ up, y)
                      - glm_loglik(family, design @ dn, y)) / (2 * eps)
                assert fd == pytest.approx(score[j], rel=1e-4, abs=1e-6)

    def test_deviance_monotone_over_iterations(self, rng):
        x = rng.normal(size=(120, 3))
        eta = 0.3 + x @ np.array([0.8, -0.5, 0.2])
        y = rng.binomial(1, 1 / (1 + np.exp(-eta))).astype(float)
        fit = fit_glm(x, y, "logistic")
        path = fit.diagnostics["deviance_path"]
        assert all(b <= a + 1e-9 for a, b in zip(path, path[1:]))

    def test_complete_separation_detected(self):
        x = np.linspace(-2, 2, 30)
        y = (x > 0).astype(float)
        with pytest.raises(NumericalError, match="separation"):
            fit_glm(x, y, "logistic")

    def test_logistic_rejects_nonbinary(self):
        with pytest.raises(DataError):
            fit_glm(np.ones((4, 1)), np.array([0.0, 1.0, 2.0, 0.0]), "logistic")

    def test_poisson_rejects_negative(self):
        with pytest.raises(DataError):
            fit_glm(np.ones((3, 1)), np.array([1.0, -1.0, 2.0]), "poisson")


class TestPredict:
    def test_logistic_zero_coefficients(self):
        fit = fit_external(np.full(5, 0.5), "logistic")
        assert predict(fit, np.zeros((5, 1))) == pytest.approx([0.5] * 5)

    def test_poisson_intercept_log2(self):
        fit = fit_glm(np.zeros((3, 0)), np.array([1.0, 2.0, 3.0]), "poisson",
                      FeatureMap("intercept"))
        assert predict(fit, np.zeros((3, 0))) == pytest.approx([2.0, 2.0, 2.0], abs=1e-6)


class TestBootstrapResponse:
    def test_zero_residuals_give_fitted_means(self, rng):
        fit = fit_ols(np.array([0.0, 1.0, 2.0]), np.array([1.0, 3.0, 5.0]))
        y_star = bootstrap_response(fit, np.array([0.0, 1.0, 2.0]), "residual",
                                    np.random.default_rng(0))
        assert y_star == pytest.approx([1.0, 3.0, 5.0], abs=1e-12)

    def test_residual_draws_come_from_centered_residuals(self, rng):
        xs = rng.normal(size=(40, 1))
        y = 2 * xs[:, 0] + rng.normal(size=40)
        fit = fit_ols(xs, y)
        mu = predict(fit, xs)
        y_star = bootstrap_response(fit, xs, "residual", rng)
        centered = np.sort(fit.residuals - fit.residuals.mean())
        for diff in y_star - mu:
            assert np.min(np.abs(centered - diff)) < 1e-10

    def test_residual_bootstrap_rejected_for_glm(self, rng):
        x = rng.normal(size=(30, 1))
        y = rng.binomial(1, 0.5, 30).astype(float)
        fit = fit_glm(x, y, "logistic")
        with pytest.raises(ValueError, match="no residual bootstrap"):
            bootstrap_response(fit, x, "residual", rng)

    def test_determinism(self, rng):
        xs = rng.normal(size=(25, 1))
        y = xs[:, 0] + rng.normal(size=25)
        fit = fit_ols(xs, y)
        for kind in ("residual", "parametric"):
            a = bootstrap_response(fit, xs, kind, np.random.default_rng(42))
            b = bootstrap_response(fit, xs, kind, np.random.default_rng(42))
            assert np.array_equal(a, b)

    def test_poisson_parametric_mean(self, rng):
        fit = fit_external(np.array([4.0] * 50), "poisson")
        draws = np.array([bootstrap_response(fit, np.zeros((50, 1)), "parametric", rng)
                          for _ in range(200)])
        se = np.sqrt(4.0 / draws.size)
        assert abs(draws.mean() - 4.0) < 3 * se

    def test_gaussian_parametric_variance(self, rng):
        xs = rng.normal(size=(60, 1))
        y = xs[:, 0] + rng.normal(size=60)
        fit = fit_ols(xs, y)
        mu = predict(fit, xs)
        draws = np.concatenate([bootstrap_response(fit, xs, "parametric", rng) - mu
                                for _ in range(300)])
        assert draws.var() == pytest.approx(fit.dispersion, rel=0.1)


class TestFitExternal:
    def test_sigma2_estimated_from_data(self):
        means = np.zeros(4)
        y = np.array([1.0, -1.0, 2.0, -2.0])
        fit = fit_external(means, "gaussian", y=y)
        assert fit.dispersion == pytest.approx(np.mean(y**2))

    def test_logistic_mean_bounds(self):
        with pytest.raises(DataError):
            fit_external(np.array([0.5, 1.2]), "logistic")


class TestSimulateAr:
    def test_deterministic_recursion(self):
        spec = FixedARSpec(0.0, (0.5, 0.25), NoiseSpec("gaussian", variance=0.0))
        z = simulate_ar(spec, 4, 0, np.array([1.0, 1.0]), np.random.default_rng(0))
        assert z == pytest.approx([0.75, 0.625, 0.5 * 0.625 + 0.25 * 0.75, 0.40625])

    def test_identity_weight_keeps_constant(self):
        spec = FixedARSpec(0.0, (1.0,), NoiseSpec("gaussian", variance=0.0))
        z = simulate_ar(spec, 5, 3, np.array([2.5]), np.random.default_rng(0))
        assert z == pytest.approx([2.5] * 5)

    def test_ar9_variance_order(self):
        """Long simulation should look stationary with variance of the right order."""
        z = simulate_ar(sunspot_ar9_model(), 2000, 500, np.full(9, 50.0),
                        np.random.default_rng(3))
        assert np.all(np.isfinite(z))
        assert 400 < z.var() < 8000  # noise variance 221 amplified by the AR filter

    def test_tar_switches_regimes(self):
        spec = sunspot_tar_model()
        z = simulate_ar(spec, 3000, 500, np.full(spec.order, 50.0),
                        np.random.default_rng(4))
        thresh_var = z[spec.regime.lag - 1:-1][::1]  # crude: both regimes visited
        assert np.any(z <= spec.regime.threshold) and np.any(z > spec.regime.threshold)

    def test_ar2_lognormal_mean_level(self):
        spec = sunspot_ar2_lognormal_model()
        z = simulate_ar(spec, 4000, 1000, np.full(2, 120.0), np.random.default_rng(5))
        # stationary mean is mean_noise / (1 - a1 - a2) ~ 128
        assert 100 < z.mean() < 160

    def test_explosive_recursion_reports_step(self):
        spec = FixedARSpec(0.0, (2.0,), NoiseSpec("gaussian", variance=0.0))
        with pytest.raises(NumericalError, match="step"):
            simulate_ar(spec, 300, 0, np.array([1.0]), np.random.default_rng(0))

    def test_init_shorter_than_order_rejected(self):
        spec = FixedARSpec(0.0, (0.5, 0.2), NoiseSpec("gaussian", variance=1.0))
        with pytest.raises(ValueError):
            simulate_ar(spec, 10, 0, np.array([1.0]), np.random.default_rng(0))


class TestLagEmbed:
    def test_rows_are_lag_vectors(self):
        series = np.arange(10.0)
        sample = lag_embed(series, 3)
        assert sample.n == 7
        assert np.array_equal(sample.ys[:, 0], series[3:])
        assert np.array_equal(sample.xs[0], [2.0, 1.0, 0.0])  # (z_2, z_1, z_0) for t=3
        assert np.array_equal(sample.xs[-1], [8.0, 7.0, 6.0])

    def test_too_short_series(self):
        with pytest.raises(DataError):
            lag_embed(np.arange(3.0), 3)


class TestFixedArModel:
    def test_one_step_means_follow_regimes(self):
        spec = FixedARSpec(
            1.0, (0.5,), NoiseSpec("gaussian", variance=0.0),
            regime=ThresholdRegime(lag=1, threshold=10.0, intercept=-1.0,
                                   coefficients=(2.0,),
                                   noise=NoiseSpec("gaussian", variance=0.0)),
        )
        fit = fit_model(ModelSpec("fixed-ar", ar=spec), None, None)
        xs = np.array([[5.0], [20.0]])
        mu = predict(fit, xs)
        assert mu == pytest.approx([1.0 + 2.5, -1.0 + 40.0])
        y_star = bootstrap_response(fit, xs, "parametric", np.random.default_rng(0))
        assert y_star == pytest.approx(mu)
