from typing import get_args

import numpy as np
import pytest
from scipy.stats import poisson

from ozone_surface.core.exceptions import ConfigurationError, InsufficientDataError
from ozone_surface.models.cv import CvModelResult, CvReport
from ozone_surface.schemas.pydantic.config import MODEL_VARIANTS, ModelVariant, RunConfig
from ozone_surface.schemas.pydantic.synthetic import SynthSpec
from ozone_surface.services.confounders import build_confounder_design
from ozone_surface.services.cv import CvService, holdout_deviance, holdout_mask, split_holdout, variant_settings
from ozone_surface.services.synthetic import generate_synthetic

from conftest import SMALL


class TestVariantSettings:
    def test_surface_variants(self):
        config = RunConfig(m1=5, m2=4)
        spatial = variant_settings("spatial-monotone", config)
        assert (spatial.m1, spatial.m2, spatial.truncate, spatial.spatial, spatial.additive) == (5, 4, True, True, False)
        free = variant_settings("nonspatial-unconstrained", config)
        assert (free.truncate, free.spatial) == (False, False)

    def test_additive_variants(self):
        config = RunConfig(additive_order=3)
        nonlinear = variant_settings("additive-nonlinear", config)
        assert (nonlinear.m1, nonlinear.m2, nonlinear.additive) == (3, 0, True)
        linear = variant_settings("additive-linear", config)
        assert (linear.m1, linear.m2) == (1, 0)
        assert not linear.truncate and not linear.spatial

    def test_unknown_variant(self):
        with pytest.raises(ConfigurationError):
            variant_settings("kriging", RunConfig())

    def test_variant_list_matches_config_literal(self):
        assert MODEL_VARIANTS == get_args(ModelVariant)
        assert MODEL_VARIANTS[0] == "spatial-monotone" and MODEL_VARIANTS[-1] == "additive-linear"
        for variant in MODEL_VARIANTS:
            assert RunConfig(model_variant=variant).model_variant == variant
            variant_settings(variant, RunConfig())


class TestHoldoutMask:
    def test_fraction(self):
        mask = holdout_mask(1000, 0.8, np.random.default_rng(0))
        assert mask.sum() == 800

    def test_same_seed_same_split(self):
        a = holdout_mask(365, 0.7, np.random.default_rng(3))
        b = holdout_mask(365, 0.7, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_contiguous_block(self):
        mask = holdout_mask(100, 0.8, np.random.default_rng(1), contiguous=True)
        held = np.flatnonzero(~mask)
        assert held.size == 20
        np.testing.assert_array_equal(np.diff(held), 1)

    def test_bad_fraction(self):
        with pytest.raises(ConfigurationError):
            holdout_mask(100, 1.0, np.random.default_rng(0))

    def test_empty_partition(self):
        with pytest.raises(InsufficientDataError):
            holdout_mask(3, 0.9, np.random.default_rng(0))

    def test_split_holdout_partitions_days(self, synthetic_cities):
        city = synthetic_cities[0][0]
        train, test = split_holdout(city, 0.8, seed=5)
        assert train.n_days + test.n_days == city.n_days
        assert set(train.frame["date"]).isdisjoint(test.frame["date"])
        again, _ = split_holdout(city, 0.8, seed=5)
        assert list(again.frame["date"]) == list(train.frame["date"])


class TestHoldoutDeviance:
    def test_matches_poisson_log_likelihood(self):
        rng = np.random.default_rng(4)
        mean = rng.uniform(0.5, 20.0, size=50)
        y = rng.poisson(mean)
        assert holdout_deviance(mean, y) == pytest.approx(-2.0 * poisson.logpmf(y, mean).sum())

    def test_rejects_nonpositive_means(self):
        with pytest.raises(ValueError):
            holdout_deviance(np.array([1.0, 0.0]), np.array([1, 0]))


class TestCvReport:
    def _result(self, variant, overall):
        return CvModelResult(
            variant=variant, overall=overall, ozone_tail=overall / 2, temp_tail=overall / 4,
            both_tails=overall / 8, n_holdout=10, n_cities=2,
        )

    def test_differences_from_linear_additive(self):
        report = CvReport(fraction=0.8, seed=1, results=[self._result("spatial-monotone", 90.0),
                                                          self._result("additive-linear", 100.0)])
        frame = report.to_frame().set_index("variant")
        assert frame.loc["spatial-monotone", "diff_overall"] == pytest.approx(-10.0)
        assert frame.loc["spatial-monotone", "diff_ozone_tail"] == pytest.approx(-5.0)
        assert frame.loc["additive-linear", "diff_overall"] == 0.0

    def test_merge(self):
        first = CvReport(fraction=0.8, seed=1, results=[self._result("spatial-monotone", 90.0)])
        second = CvReport(fraction=0.8, seed=1, results=[self._result("additive-linear", 100.0)])
        merged = first.merge(second)
        assert [r.variant for r in merged.results] == ["spatial-monotone", "additive-linear"]
        with pytest.raises(ValueError):
            first.merge(CvReport(fraction=0.7, seed=1))

    def test_empty_report(self):
        assert CvReport(fraction=0.8, seed=1).to_frame().empty


class TestCvService:
    def test_train_mask_follows_split_holdout(self, synthetic_cities):
        config = RunConfig(**SMALL)
        city = synthetic_cities[0][0]
        design = build_confounder_design(city, config.confounder_config())
        mask = CvService(config).train_mask(city, design)
        assert mask.shape == (design.n_days,)
        analysed = city.with_frame(city.frame.loc[city.frame["date"].isin(design.frame["date"])])
        train, test = split_holdout(analysed, config.cv_fraction, config.seed, config.cv_contiguous)
        assert list(design.frame.loc[mask, "date"]) == list(train.frame["date"])
        assert list(design.frame.loc[~mask, "date"]) == list(test.frame["date"])

    def test_two_variants_share_the_split(self, synthetic_cities):
        service = CvService(RunConfig(**SMALL))
        report = service.run(synthetic_cities[0], ["spatial-monotone", "additive-linear"])
        monotone, linear = report.results
        assert monotone.variant == "spatial-monotone"
        assert monotone.n_holdout == linear.n_holdout > 0
        assert monotone.n_cities == linear.n_cities == 3
        for result in report.results:
            assert np.isfinite(result.overall) and result.overall > 0
            assert result.both_tails <= min(result.ozone_tail, result.temp_tail)
        frame = report.to_frame()
        assert frame.loc[frame["variant"] == "additive-linear", "diff_overall"].iloc[0] == 0.0

    def test_deterministic(self, synthetic_cities):
        config = RunConfig(**SMALL)
        first = CvService(config).run(synthetic_cities[0], ["nonspatial-monotone"])
        second = CvService(config).run(synthetic_cities[0], ["nonspatial-monotone"])
        assert first.results[0].overall == second.results[0].overall


@pytest.mark.slow
def test_surface_model_beats_linear_on_interacting_truth():
    cities, _ = generate_synthetic(
        SynthSpec(n_cities=4, n_days=2500, orders=(3, 3), effect_scale=3.0, seed=21)
    )
    config = RunConfig(**{**SMALL, "iterations": 400, "burn_in": 200, "thin": 2})
    report = CvService(config).run(cities, list(MODEL_VARIANTS))
    frame = report.to_frame().set_index("variant")
    assert frame.loc["spatial-monotone", "diff_overall"] < 0
