import numpy as np
import pytest

from ozone_surface.core.exceptions import (
    FittingError,
    GlmConvergenceError,
    InsufficientDataError,
    RankDeficiencyError,
)
from ozone_surface.services.glm import find_aliased_columns, fit_poisson_quasi, partition_covariance


def _poisson_data(rng, n=2000, beta=(0.5, 0.3, -0.2)):
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.uniform(-1, 1, size=n)])
    offset = np.log(rng.uniform(5.0, 15.0, size=n))
    y = rng.poisson(np.exp(offset + X @ np.asarray(beta)))
    return y, X, offset


class TestFitPoissonQuasi:
    def test_recovers_coefficients(self, rng):
        beta = np.array([0.5, 0.3, -0.2])
        y, X, offset = _poisson_data(rng, n=5000, beta=beta)
        fit = fit_poisson_quasi(y, X, offset)
        assert fit.converged
        assert np.all(np.abs(fit.coefficients - beta) < 4 * fit.standard_errors)

    def test_dispersion_near_one_for_poisson_data(self, rng):
        y, X, offset = _poisson_data(rng)
        fit = fit_poisson_quasi(y, X, offset)
        assert 0.85 < fit.dispersion < 1.15
        np.testing.assert_allclose(fit.covariance, fit.dispersion * fit.unscaled_covariance)

    def test_poisson_family_fixes_dispersion(self, rng):
        y, X, offset = _poisson_data(rng)
        fit = fit_poisson_quasi(y, X, offset, family="poisson")
        assert fit.dispersion == 1.0

    def test_overdispersion_inflates_covariance(self, rng):
        n = 3000
        X = np.column_stack([np.ones(n), rng.normal(size=n)])
        mean = np.exp(2.0 + 0.2 * X[:, 1])
        y = rng.negative_binomial(2.0, 2.0 / (2.0 + mean))
        fit = fit_poisson_quasi(y, X)
        assert fit.dispersion > 2.0

    def test_matches_saturated_mean_for_group_indicators(self):
        y = np.array([2.0, 4.0, 6.0, 1.0, 1.0, 4.0])
        X = np.array([[1, 0], [1, 0], [1, 0], [0, 1], [0, 1], [0, 1]], dtype=float)
        fit = fit_poisson_quasi(y, X)
        np.testing.assert_allclose(np.exp(fit.coefficients), [4.0, 2.0], rtol=1e-6)

    def test_labels_are_kept(self, rng):
        y, X, offset = _poisson_data(rng, n=300)
        fit = fit_poisson_quasi(y, X, offset, column_labels=["a", "b", "c"])
        assert fit.column_labels == ["a", "b", "c"]

    def test_rank_deficiency_names_columns(self, rng):
        y, X, offset = _poisson_data(rng, n=200)
        X = np.column_stack([X, 2.0 * X[:, 1]])
        with pytest.raises(RankDeficiencyError) as info:
            fit_poisson_quasi(y, X, offset, column_labels=["one", "x", "u", "x2"])
        assert set(info.value.columns) & {"x", "x2"}

    def test_offset_shift_moves_only_the_intercept(self, rng):
        y, X, offset = _poisson_data(rng)
        base = fit_poisson_quasi(y, X, offset)
        shifted = fit_poisson_quasi(y, X, offset + 0.75)
        assert shifted.coefficients[0] == pytest.approx(base.coefficients[0] - 0.75, abs=1e-8)
        np.testing.assert_allclose(shifted.coefficients[1:], base.coefficients[1:], atol=1e-8)
        np.testing.assert_allclose(shifted.fitted, base.fitted, rtol=1e-8)

    def test_nonconvergence_carries_last_fit(self, rng):
        y, X, offset = _poisson_data(rng)
        with pytest.raises(GlmConvergenceError) as info:
            fit_poisson_quasi(y, X, offset, max_iter=1, city_id="c9")
        last = info.value.last_fit
        assert not last.converged
        assert last.iterations == 1
        assert last.coefficients.shape == (3,)
        assert np.all(np.isfinite(last.covariance))
        assert info.value.city_id == "c9"
        assert isinstance(info.value, FittingError)

    def test_all_zero_response(self):
        X = np.column_stack([np.ones(20), np.arange(20.0)])
        with pytest.raises(FittingError, match="all-zero"):
            fit_poisson_quasi(np.zeros(20), X)

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            fit_poisson_quasi(np.array([1.0, 2.0]), np.ones((2, 2)))

    def test_negative_counts_rejected(self):
        X = np.ones((5, 1))
        with pytest.raises(FittingError):
            fit_poisson_quasi(np.array([1.0, -1.0, 2.0, 0.0, 3.0]), X)


class TestHelpers:
    def test_find_aliased_columns_full_rank(self, rng):
        assert find_aliased_columns(rng.normal(size=(50, 4))) == []

    def test_find_aliased_columns_duplicate(self, rng):
        X = rng.normal(size=(50, 3))
        X = np.column_stack([X, X[:, 0] + X[:, 1]])
        assert len(find_aliased_columns(X, ["a", "b", "c", "d"])) == 1

    def test_partition_covariance(self, rng):
        y, X, offset = _poisson_data(rng, n=400)
        fit = fit_poisson_quasi(y, X, offset)
        v11, v12, v21, v22 = partition_covariance(fit, 2)
        assert v11.shape == (2, 2) and v12.shape == (2, 1) and v22.shape == (1, 1)
        np.testing.assert_allclose(v21, v12.T)
        np.testing.assert_allclose(np.block([[v11, v12], [v21, v22]]), fit.covariance)

    def test_partition_covariance_bounds(self, rng):
        y, X, offset = _poisson_data(rng, n=200)
        fit = fit_poisson_quasi(y, X, offset)
        with pytest.raises(ValueError):
            partition_covariance(fit, 4)


@pytest.mark.slow
def test_wald_interval_coverage():
    rng = np.random.default_rng(2024)
    beta = np.array([0.5, 0.3, -0.2])
    inside_3se = 0
    covered = 0
    total = 0
    for _ in range(200):
        y, X, offset = _poisson_data(rng, n=5000, beta=beta)
        fit = fit_poisson_quasi(y, X, offset)
        z = np.abs(fit.coefficients - beta) / fit.standard_errors
        inside_3se += int(np.sum(z < 3.0))
        covered += int(np.sum(z < 1.959964))
        total += beta.size
    assert inside_3se / total >= 0.99
    assert 0.92 <= covered / total <= 0.98
