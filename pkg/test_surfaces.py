import math

import numpy as np
import pytest

from ozone_surface.core.exceptions import ConfigurationError, InsufficientDataError
from ozone_surface.models.posterior import ChainMeta, PosteriorMeta, PosteriorSample
from ozone_surface.schemas.pydantic.surface import BernsteinBasis1D
from ozone_surface.services.basis import eval_cross_deriv, eval_dfdx1, psi_to_theta, surface_from_theta
from ozone_surface.services.surfaces import (
    LOG_RR_SCALE,
    EffectSummary,
    NationalAccumulator,
    city_average_effect,
    excess_mortality,
    excess_mortality_table,
    interaction_surface,
    log_rr_cross_section,
    log_rr_surface,
    national_grid,
    national_surface,
    precision_pool,
    precision_weights,
    stratified_ratio,
    stratified_table,
    temperature_percentile_sections,
)

from conftest import make_fit

BASES = (
    BernsteinBasis1D(order=3, lo=0.0, range=120.0, name="ozone"),
    BernsteinBasis1D(order=2, lo=40.0, range=60.0, name="temp"),
)


def _theta_from_grid(grid):
    """theta for a psi coefficient grid indexed [j, k]."""
    return psi_to_theta(grid.T.ravel(), 3, 2)


def _linear_theta(slope_per_ppb):
    # psi_jk = slope * range * j / M1 gives f = slope * (ozone - lo)
    j = np.arange(4, dtype=float)[:, None]
    return _theta_from_grid(slope_per_ppb * 120.0 * j / 3.0 + np.zeros((4, 3)))


def _interaction_theta():
    j = np.arange(4, dtype=float)[:, None]
    k = np.arange(3, dtype=float)[None, :]
    return _theta_from_grid(0.01 * j * (1.0 + k))


def _sample(thetas, city_ids, regions=None, n_draws=8, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    theta = np.stack([np.stack(thetas)] * n_draws)
    if noise:
        theta = theta + noise * np.abs(rng.normal(size=theta.shape))
    p = theta.shape[-1]
    d = n_draws
    meta = PosteriorMeta(
        city_ids=list(city_ids),
        regions=list(regions or ["east"] * len(city_ids)),
        ozone_basis=BASES[0],
        temp_basis=BASES[1],
        chain=ChainMeta(iterations=2 * d, burn_in=d, thin=1, seed=0),
    )
    return PosteriorSample(
        meta=meta,
        theta_star=theta,
        theta=theta,
        mu=np.zeros((d, p)),
        mu0=np.zeros(d),
        tau=np.ones(d),
        s1=np.stack([np.eye(4)] * d),
        s2=np.stack([np.eye(3)] * d),
        rho=np.ones(d),
        log_posterior=np.zeros(d),
    )


def _fit(city_id, seed=1, region="east", ozone=(10.0, 110.0), temp=(45.0, 95.0)):
    rng = np.random.default_rng(seed)
    local = (
        BernsteinBasis1D(order=2, lo=ozone[0], range=ozone[1] - ozone[0], name="ozone"),
        BernsteinBasis1D(order=2, lo=temp[0], range=temp[1] - temp[0], name="temp"),
    )
    return make_fit(rng, local, city_id=city_id, region=region, n_days=400)


class TestEffectSummary:
    def test_from_draws(self):
        summary = EffectSummary.from_draws(np.array([-1.0, 1.0, 2.0, 3.0, np.nan]))
        assert summary.n_draws == 4
        assert summary.mean == pytest.approx(1.25)
        assert summary.pr_above == pytest.approx(0.75)

    def test_threshold(self):
        assert EffectSummary.from_draws(np.array([0.5, 1.5]), threshold=1.0).pr_above == 0.5

    def test_empty(self):
        assert math.isnan(EffectSummary.from_draws(np.array([np.nan])).mean)


class TestSurfaceGrids:
    def test_log_rr_matches_surface_derivative(self):
        theta = _interaction_theta()
        fit = _fit("a")
        sample = _sample([theta], ["a"])
        grid = log_rr_surface(sample, fit, grid_size=7)
        spec = surface_from_theta(theta, *BASES)
        temp, ozone = np.meshgrid(grid.temp_grid, grid.ozone_grid, indexing="ij")
        expected = LOG_RR_SCALE * eval_dfdx1(spec, ozone.ravel(), temp.ravel()).reshape(ozone.shape)
        np.testing.assert_allclose(grid.mean(), expected, rtol=1e-10)
        assert grid.support_mask.all()

    def test_points_outside_city_support_are_masked(self):
        fit = _fit("a", ozone=(20.0, 60.0))
        sample = _sample([_interaction_theta()], ["a"])
        ozone_grid, temp_grid = national_grid(sample, 9)
        grid = log_rr_surface(sample, fit, ozone_grid, temp_grid)
        outside = (grid.ozone_grid < fit.ozone_obs.min()) | (grid.ozone_grid > fit.ozone_obs.max())
        assert outside.any()
        assert np.all(np.isnan(grid.draws[:, :, outside]))
        assert not grid.support_mask[:, outside].any()

    def test_interaction_zero_for_additive_surface(self):
        j = np.arange(4, dtype=float)[:, None]
        k = np.arange(3, dtype=float)[None, :]
        theta = _theta_from_grid(0.02 * j**2 + 0.3 * k)
        grid = interaction_surface(_sample([theta], ["a"]), _fit("a"), grid_size=6)
        np.testing.assert_allclose(grid.mean(), 0.0, atol=1e-10)

    def test_interaction_matches_cross_derivative(self):
        theta = _interaction_theta()
        grid = interaction_surface(_sample([theta], ["a"]), _fit("a"), grid_size=5)
        spec = surface_from_theta(theta, *BASES)
        temp, ozone = np.meshgrid(grid.temp_grid, grid.ozone_grid, indexing="ij")
        expected = LOG_RR_SCALE * eval_cross_deriv(spec, ozone.ravel(), temp.ravel()).reshape(ozone.shape)
        np.testing.assert_allclose(grid.mean(), expected, rtol=1e-10, atol=1e-14)

    def test_summary_frame_columns(self):
        grid = log_rr_surface(_sample([_interaction_theta()], ["a"]), _fit("a"), grid_size=4)
        frame = grid.summary_frame()
        assert frame.shape[0] == 16
        assert {"ozone", "temp", "mean", "q2.5", "q97.5", "pr_gt0", "supported"} <= set(frame.columns)


class TestPooling:
    def test_precision_weights(self):
        weights = precision_weights(np.array([1.0, 4.0]))
        np.testing.assert_allclose(weights, [0.8, 0.2])

    def test_zero_variance_members_share_weight(self):
        np.testing.assert_allclose(precision_weights(np.array([0.0, 0.0, 2.0])), [0.5, 0.5, 0.0])

    def test_nan_members_ignored(self):
        np.testing.assert_allclose(precision_weights(np.array([np.nan, 3.0])), [0.0, 1.0])

    def test_precision_pool(self):
        draws = np.array([[1.0, 3.0], [10.0, 10.0]])
        # the constant member has zero variance and takes all the weight
        np.testing.assert_allclose(precision_pool(draws), [10.0, 10.0])

    def test_national_surface_of_identical_cities(self):
        theta = _interaction_theta()
        sample = _sample([theta, theta], ["a", "b"], noise=0.001)
        fits = [_fit("a"), _fit("b", seed=2)]
        ozone_grid, temp_grid = national_grid(sample, 6)
        grids = [log_rr_surface(sample, f, ozone_grid, temp_grid) for f in fits]
        national = national_surface(grids)
        both = grids[0].support_mask & grids[1].support_mask
        assert both.any()
        lo = np.minimum(grids[0].mean(), grids[1].mean())[both]
        hi = np.maximum(grids[0].mean(), grids[1].mean())[both]
        pooled = national.mean()[both]
        assert np.all((pooled >= lo - 1e-9) & (pooled <= hi + 1e-9))
        np.testing.assert_array_equal(national.n_supporting, grids[0].support_mask.astype(int) + grids[1].support_mask)

    def test_min_support(self):
        sample = _sample([_interaction_theta()] * 2, ["a", "b"], noise=0.001)
        fits = [_fit("a", ozone=(5.0, 50.0)), _fit("b", seed=2, ozone=(60.0, 115.0))]
        ozone_grid, temp_grid = national_grid(sample, 8)
        accumulator = NationalAccumulator(min_support=2)
        for f in fits:
            accumulator.add(log_rr_surface(sample, f, ozone_grid, temp_grid))
        national = accumulator.result()
        # the two cities never overlap in ozone
        assert not national.support_mask.any()
        assert np.all(np.isnan(national.draws))

    def test_accumulator_needs_grids(self):
        with pytest.raises(InsufficientDataError):
            NationalAccumulator().result()

    def test_accumulator_rejects_mismatched_grids(self):
        sample = _sample([_interaction_theta()] * 2, ["a", "b"])
        accumulator = NationalAccumulator()
        accumulator.add(log_rr_surface(sample, _fit("a"), grid_size=5))
        with pytest.raises(ConfigurationError):
            accumulator.add(log_rr_surface(sample, _fit("b", seed=2), grid_size=6))


class TestCityEffects:
    def test_average_effect_of_linear_surface(self):
        fit = _fit("a")
        summary, draws = city_average_effect(_sample([_linear_theta(0.0005)], ["a"]), fit)
        assert summary.mean == pytest.approx(0.5)
        np.testing.assert_allclose(draws, 0.5)

    def test_excess_mortality_linear_in_ozone(self):
        fit = _fit("a")
        sample = _sample([_linear_theta(0.001)], ["a"])
        result = excess_mortality(sample, fit)
        o50, o95 = np.quantile(fit.ozone_obs, [0.5, 0.95])
        expected = 100.0 * math.expm1(0.001 * (o95 - o50))
        assert result.summary.mean == pytest.approx(expected)
        assert excess_mortality(sample, fit, vary_temp=False).summary.mean == pytest.approx(expected)

    def test_stratified_ratio_is_one_without_interaction(self):
        comparison = stratified_ratio(_sample([_linear_theta(0.001)], ["a"]), _fit("a"))
        assert comparison.ratio_observed.mean == pytest.approx(1.0)
        assert comparison.high_temp_window[0] >= comparison.moderate_temp_window[1]
        row = comparison.as_row()
        assert row["city_id"] == "a"

    def test_stratified_ratio_above_one_with_synergy(self):
        comparison = stratified_ratio(_sample([_interaction_theta()], ["a"]), _fit("a"))
        assert comparison.ratio_observed.mean > 1.0
        assert comparison.common_ozone_range is not None
        assert comparison.ratio_common.mean > 1.0

    def test_stratified_ratio_empty_temperature_window(self):
        fit = _fit("a").model_copy(update={"ozone_obs": np.array([30.0, 60.0]), "temp_obs": np.array([50.0, 90.0])})
        with pytest.raises(InsufficientDataError) as info:
            stratified_ratio(_sample([_linear_theta(0.001)], ["a"]), fit)
        assert info.value.city_id == "a"


class TestTables:
    def _inputs(self):
        thetas = [_interaction_theta(), _linear_theta(0.001), _interaction_theta()]
        ids, regions = ["a", "b", "c"], ["east", "west", "east"]
        sample = _sample(thetas, ids, regions, noise=0.0005)
        fits = [_fit(i, seed=s, region=r) for s, (i, r) in enumerate(zip(ids, regions), start=1)]
        return sample, fits

    def test_stratified_table_groups(self):
        sample, fits = self._inputs()
        table = stratified_table([stratified_ratio(sample, f) for f in fits])
        assert list(table["group"]) == ["east", "west", "national"]
        assert table.loc[table["group"] == "national", "n_cities"].iloc[0] == 3

    def test_excess_mortality_table(self):
        sample, fits = self._inputs()
        table = excess_mortality_table([excess_mortality(sample, f) for f in fits])
        assert list(table["level"]) == ["city"] * 3 + ["region", "region", "national"]
        assert list(table["group"])[-1] == "national"

    def test_cross_sections(self):
        sample, fits = self._inputs()
        fixed = log_rr_cross_section(sample, fits, ozone_levels=(50.0, 100.0), grid_size=5, min_support=1)
        assert set(fixed["ozone"]) == {50.0, 100.0}
        assert fixed.shape[0] == 10
        sections = temperature_percentile_sections(sample, fits, grid_size=5, min_support=1)
        assert sorted(set(sections["temp_percentile"])) == pytest.approx([50.0, 75.0, 95.0, 99.0])
        assert sections.loc[sections["temp_percentile"] == 50.0, "pr_gt_median"].isna().all()
