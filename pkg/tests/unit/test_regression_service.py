"""
Unit tests for the regression suite: fits, sandwich covariance and prediction.
"""

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose
from scipy.special import expit, gammaln, logit
from structlog.testing import capture_logs

from app.config import Settings
from app.exceptions import DataValidationError, ModelSpecificationError
from app.services.design_service import build_design
from app.services.gap_analytics_service import build_gap_records
from app.services.graph_service import rank_market
from app.services.regression_service import (
    STANDARD_MODELS,
    _negbin_log_alpha_derivatives,
    cluster_sums,
    fit_fractional_logit,
    fit_logistic,
    fit_negative_binomial,
    fit_standard_model,
    logistic_hessian,
    logistic_loglike,
    logistic_score,
    model_formula,
    negbin_hessian,
    negbin_loglike,
    negbin_score,
    predict_curve,
    sandwich,
)


def numeric_gradient(function, point, step=1e-6):
    gradient = np.zeros_like(point)
    for j in range(point.size):
        shift = np.zeros_like(point)
        shift[j] = step
        gradient[j] = (function(point + shift) - function(point - shift)) / (2 * step)
    return gradient


def numeric_jacobian(function, point, step=1e-6):
    columns = [
        numeric_gradient(lambda p, i=i: function(p)[i], point, step)
        for i in range(point.size)
    ]
    return np.array(columns)


def logistic_frame(n=20000, beta=(-0.5, 1.2, -0.8), seed=0, clusters=None):
    rng = np.random.default_rng(seed)
    gap = rng.uniform(-1, 1, n)
    eta = beta[0] + beta[1] * gap + beta[2] * gap**2
    frame = pd.DataFrame(
        {"gap": gap, "replied": (rng.uniform(size=n) < expit(eta)).astype(int)}
    )
    frame["sender_id"] = (
        np.arange(n) % clusters if clusters else np.arange(n)
    ).astype(str)
    return frame


def negbin_frame(n=6000, beta=(1.5, 0.6), alpha=0.7, seed=1):
    rng = np.random.default_rng(seed)
    gap = rng.uniform(-1, 1, n)
    mu = np.exp(beta[0] + beta[1] * gap)
    r = 1.0 / alpha
    counts = rng.negative_binomial(r, r / (r + mu))
    return pd.DataFrame({"gap": gap, "word_count": counts})


class TestDerivatives:
    """Analytic derivatives against finite differences"""

    def setup_method(self):
        rng = np.random.default_rng(42)
        self.X = np.column_stack([np.ones(50), rng.uniform(-1, 1, (50, 2))])
        self.y_binary = (rng.uniform(size=50) < 0.4).astype(float)
        self.y_count = rng.poisson(3.0, 50).astype(float)

    def test_logistic_score_and_hessian(self):
        """Score and Hessian of the Bernoulli log-likelihood."""
        beta = np.array([0.2, -0.4, 0.9])

        assert_allclose(
            logistic_score(beta, self.X, self.y_binary),
            numeric_gradient(lambda b: logistic_loglike(b, self.X, self.y_binary), beta),
            rtol=1e-6,
            atol=1e-6,
        )
        assert_allclose(
            logistic_hessian(beta, self.X),
            numeric_jacobian(lambda b: logistic_score(b, self.X, self.y_binary), beta),
            rtol=1e-6,
            atol=1e-6,
        )

    def test_negbin_score_and_hessian(self):
        """Score and Hessian in (beta, alpha)."""
        params = np.array([1.0, 0.3, -0.2, 0.6])

        assert_allclose(
            negbin_score(params, self.X, self.y_count),
            numeric_gradient(lambda p: negbin_loglike(p, self.X, self.y_count), params),
            rtol=1e-5,
            atol=1e-5,
        )
        assert_allclose(
            negbin_hessian(params, self.X, self.y_count),
            numeric_jacobian(lambda p: negbin_score(p, self.X, self.y_count), params),
            rtol=1e-5,
            atol=1e-5,
        )

    def test_derivatives_at_random_points(self):
        """Analytic derivatives hold away from a hand-picked point."""
        rng = np.random.default_rng(5)

        for _ in range(20):
            beta = rng.normal(scale=0.8, size=3)
            assert_allclose(
                logistic_score(beta, self.X, self.y_binary),
                numeric_gradient(
                    lambda b: logistic_loglike(b, self.X, self.y_binary), beta
                ),
                rtol=1e-5,
                atol=1e-5,
            )
            assert_allclose(
                logistic_hessian(beta, self.X),
                numeric_jacobian(
                    lambda b: logistic_score(b, self.X, self.y_binary), beta
                ),
                rtol=1e-5,
                atol=1e-5,
            )

            params = np.append(rng.normal(scale=0.5, size=3), rng.uniform(0.1, 2.0))
            params[0] += 1.0
            assert_allclose(
                negbin_score(params, self.X, self.y_count),
                numeric_gradient(
                    lambda p: negbin_loglike(p, self.X, self.y_count), params
                ),
                rtol=1e-5,
                atol=1e-4,
            )
            assert_allclose(
                negbin_hessian(params, self.X, self.y_count),
                numeric_jacobian(
                    lambda p: negbin_score(p, self.X, self.y_count), params
                ),
                rtol=1e-5,
                atol=1e-4,
            )

    def test_negbin_log_alpha_parameterization(self):
        """Gradient and Hessian in (beta, log alpha)."""
        point = np.array([1.0, 0.3, -0.2, np.log(0.6)])

        def loglike(p):
            return negbin_loglike(np.append(p[:3], np.exp(p[3])), self.X, self.y_count)

        def gradient(p):
            return _negbin_log_alpha_derivatives(p[:3], p[3], self.X, self.y_count)[1]

        _, analytic_gradient, analytic_hessian = _negbin_log_alpha_derivatives(
            point[:3], point[3], self.X, self.y_count
        )
        assert_allclose(
            analytic_gradient, numeric_gradient(loglike, point), rtol=1e-5, atol=1e-5
        )
        assert_allclose(
            analytic_hessian, numeric_jacobian(gradient, point), rtol=1e-5, atol=1e-5
        )

    def test_negbin_loglike_matches_gamma_form(self):
        """The betaln form equals the lgamma form of the NB2 likelihood."""
        params = np.array([1.0, 0.3, -0.2, 0.6])
        mu = np.exp(self.X @ params[:3])
        r = 1.0 / params[3]
        y = self.y_count
        expected = np.sum(
            gammaln(y + r)
            - gammaln(r)
            - gammaln(y + 1)
            + r * np.log(r / (r + mu))
            + y * np.log(mu / (r + mu))
        )

        assert negbin_loglike(params, self.X, y) == pytest.approx(expected, rel=1e-10)


class TestLogistic:
    """Logistic regression"""

    def test_intercept_only_closed_form(self, test_settings):
        """The intercept is logit of the mean outcome."""
        frame = pd.DataFrame({"replied": [1, 0, 0, 1, 0, 0, 0, 1, 0, 0]})
        design = build_design(frame, "1", response="replied", settings=test_settings)

        fit = fit_logistic(design, settings=test_settings)

        assert fit.converged
        assert fit.coefficient("Intercept") == pytest.approx(logit(0.3), abs=1e-6)

    def test_recovers_coefficients(self, test_settings):
        """Estimates lie within four standard errors of the truth."""
        frame = logistic_frame(clusters=500)
        design = build_design(
            frame,
            "gap + gap^2",
            cluster_column="sender_id",
            response="replied",
            settings=test_settings,
        )

        fit = fit_logistic(design, settings=test_settings)

        assert fit.converged
        assert fit.n_clusters == 500
        truth = np.array([-0.5, 1.2, -0.8])
        assert np.all(np.abs(fit.coefficients - truth) < 4 * fit.standard_errors)

    def test_singleton_clusters_give_hc0(self, test_settings):
        """With one row per cluster the sandwich is the HC0 estimator."""
        frame = logistic_frame(n=2000, seed=3)
        design = build_design(frame, "gap", response="replied", settings=test_settings)
        fit = fit_logistic(design, settings=test_settings)

        X, y = design.matrix, design.response
        residual = y - expit(X @ fit.coefficients)
        bread = np.linalg.inv(-logistic_hessian(fit.coefficients, X))
        meat = (X * residual[:, None] ** 2).T @ X
        assert_allclose(fit.covariance, bread @ meat @ bread, rtol=1e-10)

    def test_non_binary_outcome(self, test_settings):
        """Outcomes other than 0/1 are rejected."""
        frame = pd.DataFrame({"gap": [0.1, 0.2, 0.3], "replied": [0, 0.5, 1]})
        design = build_design(frame, "gap", response="replied", settings=test_settings)

        with pytest.raises(DataValidationError):
            fit_logistic(design, settings=test_settings)

    def test_perfect_separation(self, test_settings):
        """Separation is flagged, not reported as convergence."""
        gap = np.linspace(-1, 1, 40)
        frame = pd.DataFrame({"gap": gap, "replied": (gap > 0).astype(int)})
        design = build_design(frame, "gap", response="replied", settings=test_settings)

        with capture_logs() as logs:
            fit = fit_logistic(design, settings=test_settings)

        assert fit.separation
        assert not fit.converged
        assert np.all(np.isnan(fit.covariance))
        assert any(entry["event"] == "perfect_separation" for entry in logs)
        assert fit.to_dict()["separation"] is True

    def test_rank_deficient_design(self, test_settings):
        """Duplicated columns are rejected by the solver."""
        frame = logistic_frame(n=200, seed=4)
        design = build_design(frame, "gap", response="replied", settings=test_settings)
        doubled = replace(
            design,
            matrix=np.column_stack([design.matrix, design.matrix[:, 1]]),
            column_names=design.column_names + ["gap_copy"],
        )

        with pytest.raises(ModelSpecificationError):
            fit_logistic(doubled, settings=test_settings)

    @pytest.mark.parametrize("c", [0.5, 10.0, 250.0])
    def test_rescaled_covariate(self, c, test_settings):
        """Dividing a covariate by c multiplies its coefficient by c; fits agree."""
        frame = logistic_frame(n=5000, seed=12)
        frame["word_count"] = np.random.default_rng(13).poisson(40, len(frame))
        formula = "gap + word_count"
        settings = Settings(_env_file=None, glm_tolerance=1e-10)

        design = build_design(
            frame, formula, response="replied", settings=test_settings
        )
        scaled_design = build_design(
            frame,
            formula,
            response="replied",
            scales={"word_count": c},
            settings=test_settings,
        )
        original = fit_logistic(design, settings=settings)
        scaled = fit_logistic(scaled_design, settings=settings)

        assert scaled.coefficient("word_count") == pytest.approx(
            original.coefficient("word_count") * c, rel=1e-6
        )
        assert scaled.coefficient("gap") == pytest.approx(
            original.coefficient("gap"), rel=1e-6
        )
        assert_allclose(
            expit(scaled_design.matrix @ scaled.coefficients),
            expit(design.matrix @ original.coefficients),
            rtol=0,
            atol=1e-8,
        )


class TestFractionalLogit:
    """Fractional-logit quasi-likelihood"""

    def test_intercept_only_closed_form(self, test_settings):
        """The intercept is logit of the mean fraction."""
        values = [0.0, 0.1, 0.25, 0.5, 0.15, 0.2]
        frame = pd.DataFrame({"positive_fraction": values})
        design = build_design(
            frame, "1", response="positive_fraction", settings=test_settings
        )

        fit = fit_fractional_logit(design, settings=test_settings)

        assert fit.coefficient("Intercept") == pytest.approx(
            logit(np.mean(values)), abs=1e-6
        )

    def test_recovers_mean_function(self, test_settings):
        """Beta-distributed fractions recover the logistic mean."""
        rng = np.random.default_rng(7)
        gap = rng.uniform(-1, 1, 20000)
        mean = expit(-1.0 + 0.8 * gap)
        fraction = rng.beta(mean * 20, (1 - mean) * 20)
        frame = pd.DataFrame({"gap": gap, "positive_fraction": fraction})
        design = build_design(
            frame, "gap", response="positive_fraction", settings=test_settings
        )

        fit = fit_fractional_logit(design, settings=test_settings)

        assert fit.coefficient("Intercept") == pytest.approx(-1.0, abs=0.05)
        assert fit.coefficient("gap") == pytest.approx(0.8, abs=0.05)

    def test_outcome_outside_unit_interval(self, test_settings):
        """Fractions above 1 are rejected."""
        frame = pd.DataFrame({"gap": [0.1, 0.2], "positive_fraction": [0.5, 1.2]})
        design = build_design(
            frame, "gap", response="positive_fraction", settings=test_settings
        )

        with pytest.raises(DataValidationError):
            fit_fractional_logit(design, settings=test_settings)


class TestNegativeBinomial:
    """NB2 regression"""

    def test_intercept_only_closed_form(self, test_settings):
        """The intercept is the log of the mean count."""
        frame = negbin_frame(n=3000, beta=(1.2, 0.0))
        design = build_design(frame, "1", response="word_count", settings=test_settings)

        fit = fit_negative_binomial(design, settings=test_settings)

        assert fit.converged
        assert fit.coefficient("Intercept") == pytest.approx(
            np.log(frame["word_count"].mean()), abs=1e-6
        )

    def test_recovers_coefficients_and_dispersion(self, test_settings):
        """Coefficients and alpha are recovered on NB2 data."""
        frame = negbin_frame()
        design = build_design(frame, "gap", response="word_count", settings=test_settings)

        fit = fit_negative_binomial(design, settings=test_settings)

        assert fit.converged
        assert not fit.dispersion_at_boundary
        assert fit.coefficient("Intercept") == pytest.approx(1.5, abs=0.06)
        assert fit.coefficient("gap") == pytest.approx(0.6, abs=0.06)
        assert fit.dispersion == pytest.approx(0.7, abs=0.1)
        assert fit.dispersion_se > 0
        assert fit.covariance.shape == (2, 2)

    def test_underdispersed_counts_hit_the_boundary(self, test_settings):
        """Counts with variance below the mean pin alpha at its lower bound."""
        frame = pd.DataFrame({"word_count": np.tile([3, 4], 2000)})
        design = build_design(frame, "1", response="word_count", settings=test_settings)

        with capture_logs() as logs:
            fit = fit_negative_binomial(design, settings=test_settings)

        assert fit.dispersion_at_boundary
        assert fit.dispersion == pytest.approx(1e-8)
        assert fit.dispersion_se is None
        assert fit.coefficient("Intercept") == pytest.approx(np.log(3.5), abs=1e-5)
        assert np.all(np.isfinite(fit.covariance))
        assert any(entry["event"] == "negbin_dispersion_at_boundary" for entry in logs)

    @pytest.mark.parametrize(
        "counts", [[1, -1, 2, 3], [0.5, 1, 2, 3], [0, 0, 0, 0]]
    )
    def test_invalid_counts(self, counts, test_settings):
        """Negative, fractional and all-zero outcomes are rejected."""
        frame = pd.DataFrame({"gap": [0.1, 0.2, 0.3, 0.4], "word_count": counts})
        design = build_design(frame, "gap", response="word_count", settings=test_settings)

        with pytest.raises(DataValidationError):
            fit_negative_binomial(design, settings=test_settings)

    def test_fit_to_dict_carries_dispersion(self, test_settings):
        """Serialized fits carry alpha and its standard error."""
        design = build_design(
            negbin_frame(n=1500), "gap", response="word_count", settings=test_settings
        )

        payload = fit_negative_binomial(design, settings=test_settings).to_dict()

        assert payload["family"] == "negative_binomial"
        assert payload["dispersion"] > 0
        assert payload["dispersion_at_boundary"] is False
        assert [row["name"] for row in payload["coefficients"]] == ["Intercept", "gap"]


class TestSandwich:
    """Cluster-robust covariance"""

    SCORES = np.array(
        [[1.0, 0.0], [2.0, 1.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -2.0], [1.0, 1.0]]
    )
    CLUSTERS = np.array([0, 0, 0, 1, 1, 1])

    def test_cluster_sums(self):
        """Scores add up within clusters."""
        assert_allclose(
            cluster_sums(self.SCORES, self.CLUSTERS), [[3.0, 2.0], [0.0, -1.0]]
        )

    def test_two_cluster_hand_example(self):
        """Identity bread leaves the sum of cluster outer products."""
        with capture_logs() as logs:
            covariance = sandwich(-np.eye(2), self.SCORES, self.CLUSTERS)

        assert_allclose(covariance, [[9.0, 6.0], [6.0, 5.0]])
        assert any(entry["event"] == "few_clusters" for entry in logs)

    def test_small_sample_correction(self):
        """G / (G - 1) scales the covariance."""
        covariance = sandwich(-np.eye(2), self.SCORES, self.CLUSTERS, correction=True)

        assert_allclose(covariance, [[18.0, 12.0], [12.0, 10.0]])

    def test_bread_scales_meat(self):
        """A diagonal bread rescales rows and columns."""
        covariance = sandwich(-np.diag([1.0, 2.0]), self.SCORES, self.CLUSTERS)

        assert_allclose(covariance, [[9.0, 3.0], [3.0, 1.25]])

    def test_single_cluster_warns(self):
        """One cluster is allowed but logged."""
        with capture_logs() as logs:
            sandwich(-np.eye(2), self.SCORES, np.zeros(6, dtype=int))

        assert any(entry["event"] == "single_cluster" for entry in logs)

    def test_singular_hessian(self):
        """A singular Hessian has no sandwich."""
        with pytest.raises(ModelSpecificationError):
            sandwich(np.zeros((2, 2)), self.SCORES, self.CLUSTERS)

    def test_result_is_symmetric(self):
        """Covariances are symmetric."""
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 3))
        hessian = -(a @ a.T + 3 * np.eye(3))
        covariance = sandwich(hessian, rng.normal(size=(40, 3)), np.arange(40) % 7)

        assert_allclose(covariance, covariance.T)


class TestPrediction:
    """Predicted curves"""

    def test_logistic_curve_closed_form(self, test_settings):
        """Means apply the inverse link; SEs follow the delta method."""
        frame = logistic_frame(n=5000, seed=8)
        design = build_design(
            frame, "gap + gap^2", response="replied", settings=test_settings
        )
        fit = fit_logistic(design, settings=test_settings)
        grid = np.linspace(-1, 1, 21)

        curve = predict_curve(fit, ("gap", grid))

        b0, b1, b2 = fit.coefficients
        mean = expit(b0 + b1 * grid + b2 * grid**2)
        assert_allclose(curve.values, mean, atol=1e-10)
        X = np.column_stack([np.ones_like(grid), grid, grid**2])
        eta_se = np.sqrt(np.einsum("ij,jk,ik->i", X, fit.covariance, X))
        assert_allclose(curve.standard_errors, mean * (1 - mean) * eta_se, atol=1e-10)
        assert curve.label == "replied~gap"
        assert curve.counts is None

    def test_negbin_curve_uses_exp_link(self, test_settings):
        """NB predictions are exp of the linear predictor."""
        design = build_design(
            negbin_frame(n=2000), "gap", response="word_count", settings=test_settings
        )
        fit = fit_negative_binomial(design, settings=test_settings)

        curve = predict_curve(fit, ("gap", [0.0, 0.5]))

        b0, b1 = fit.coefficients
        assert_allclose(curve.values, np.exp([b0, b0 + 0.5 * b1]), rtol=1e-12)

    def test_held_covariates_and_support_warning(self, test_settings):
        """Held values fill other columns; grids past the data are logged."""
        frame = logistic_frame(n=3000, seed=9)
        frame["city"] = np.where(np.arange(3000) % 2 == 0, "boston", "nyc")
        design = build_design(
            frame, "gap + city", response="replied", settings=test_settings
        )
        fit = fit_logistic(design, settings=test_settings)

        with capture_logs() as logs:
            curve = predict_curve(fit, ("gap", [0.0, 1.5]), held={"city": "nyc"})

        b0, b1, b2 = fit.coefficients
        assert curve.values[0] == pytest.approx(expit(b0 + b2), abs=1e-12)
        assert any(entry["event"] == "prediction_outside_support" for entry in logs)


class TestStandardModels:
    """Named models over gap records"""

    def test_catalogue(self):
        """Every standard model names a response and terms."""
        assert set(STANDARD_MODELS) == {
            "attributes",
            "message_length",
            "positivity",
            "reply_by_length",
            "reply_by_positivity",
        }

    def test_formula_adds_city_interactions(self):
        """Several cities add a city effect and term-by-city interactions."""
        layout = STANDARD_MODELS["positivity"]

        assert model_formula(layout, ["boston"]) == ["gap", "gap^2"]
        assert model_formula(layout, ["boston", "nyc"]) == [
            "gap",
            "gap^2",
            "city",
            "gap:city",
            "gap^2:city",
        ]

    def test_fits_on_synthetic_market(self, hybrid_market, test_settings):
        """Reply and message-length models fit on synthetic gap records."""
        dataset, _ = hybrid_market
        records = build_gap_records(dataset, rank_market(dataset))
        men = records[records["sender_sex"] == "male"]

        reply = fit_standard_model("reply_by_length", men, settings=test_settings)
        length = fit_standard_model("message_length", men, settings=test_settings)

        assert reply.converged
        assert reply.column_names == [
            "Intercept",
            "gap",
            "gap^2",
            "word_count",
            "word_count^2",
        ]
        assert reply.n_clusters == men["sender_id"].nunique()
        assert length.dispersion > 0

    def test_unknown_model_and_cluster(self, test_settings):
        """Unknown names are rejected."""
        frame = pd.DataFrame({"gap": [0.0], "city": ["boston"]})

        with pytest.raises(ModelSpecificationError):
            fit_standard_model("height", frame, settings=test_settings)
        with pytest.raises(ModelSpecificationError):
            fit_standard_model(
                "positivity", frame, cluster_on="planet", settings=test_settings
            )


@pytest.mark.slow
class TestCoverage:
    """Repeated fits on data with known coefficients"""

    TRUTH = {
        "Intercept": -0.3,
        "gap": -1.5,
        "gap^2": 0.5,
        "word_count": 0.4,
        "city[chicago]": 0.2,
        "city[nyc]": -0.3,
        "gap:city[chicago]": 0.5,
        "gap:city[nyc]": -0.4,
    }

    def simulate(self, seed, n=10000, clusters=500):
        rng = np.random.default_rng(seed)
        sender = np.arange(n) % clusters
        city = np.array(["boston", "chicago", "nyc"])[sender % 3]
        gap = rng.uniform(-1, 1, n)
        word_count = rng.normal(size=n)
        t = self.TRUTH
        eta = (
            t["Intercept"]
            + t["gap"] * gap
            + t["gap^2"] * gap**2
            + t["word_count"] * word_count
            + np.select(
                [city == "chicago", city == "nyc"],
                [
                    t["city[chicago]"] + t["gap:city[chicago]"] * gap,
                    t["city[nyc]"] + t["gap:city[nyc]"] * gap,
                ],
                0.0,
            )
        )
        return pd.DataFrame(
            {
                "gap": gap,
                "word_count": word_count,
                "city": city,
                "sender_id": sender.astype(str),
                "replied": (rng.uniform(size=n) < expit(eta)).astype(int),
            }
        )

    def test_cluster_robust_intervals_cover_truth(self, test_settings):
        """Each coefficient lies within 3 robust SEs in at least 95 of 100 fits."""
        covered = dict.fromkeys(self.TRUTH, 0)

        for seed in range(100):
            design = build_design(
                self.simulate(seed),
                "gap + gap^2 + word_count + city + gap:city",
                cluster_column="sender_id",
                response="replied",
                reference_levels={"city": "boston"},
                settings=test_settings,
            )
            fit = fit_logistic(design, settings=test_settings)
            assert fit.converged
            assert fit.n_clusters == 500
            for name, true_value in self.TRUTH.items():
                j = fit.column_names.index(name)
                if abs(fit.coefficients[j] - true_value) < 3 * fit.standard_errors[j]:
                    covered[name] += 1

        assert min(covered.values()) >= 95, covered
