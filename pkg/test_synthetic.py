import numpy as np
import pandas as pd
import pytest

from ozone_surface.core.exceptions import ConfigurationError
from ozone_surface.models.truth import GroundTruth
from ozone_surface.schemas.pydantic.config import RunConfig
from ozone_surface.schemas.pydantic.surface import BernsteinBasis1D, SurfaceSpec
from ozone_surface.schemas.pydantic.synthetic import SynthSpec
from ozone_surface.services.basis import constrained_mask, psi_to_theta
from ozone_surface.services.synthetic import generate_synthetic, synth_spec_from_config


def _spec(**overrides):
    return SynthSpec(**{"n_cities": 2, "n_days": 400, "orders": (4, 3), "seed": 3, **overrides})


class TestGenerateSynthetic:
    def test_identical_specs_give_identical_cities(self):
        first, truth_a = generate_synthetic(_spec())
        second, truth_b = generate_synthetic(_spec())
        for a, b in zip(first, second):
            pd.testing.assert_frame_equal(a.frame, b.frame)
        assert truth_a.model_dump_json() == truth_b.model_dump_json()

    def test_seed_changes_data(self):
        first, _ = generate_synthetic(_spec())
        other, _ = generate_synthetic(_spec(seed=4))
        assert not first[0].frame["ozone"].equals(other[0].frame["ozone"])

    @pytest.mark.parametrize("family", ["interaction", "monotone", "additive-linear", "additive-nonlinear"])
    def test_truths_lie_in_the_monotone_cone(self, family):
        _, truth = generate_synthetic(_spec(family=family))
        for city in truth.cities:
            m1, m2 = city.surface.orders
            theta = psi_to_theta(city.surface.coeffs, m1, m2)
            assert np.all(theta[constrained_mask(m1, m2)] >= -1e-12)

    def test_frames_hold_counts_and_covariates(self):
        cities, _ = generate_synthetic(_spec())
        frame = cities[0].frame
        assert len(frame) == 400
        assert (frame[["deaths_u65", "deaths_65_74", "deaths_75p"]] >= 0).all().all()
        assert frame["ozone"].between(0.0, 160.0).all()
        assert cities[0].region in {"east", "central", "west"}

    def test_missing_cells(self):
        cities, _ = generate_synthetic(_spec(missing_rate=0.2))
        assert cities[0].frame["ozone"].isna().any()

    def test_explicit_truth_must_be_monotone(self):
        basis = (
            BernsteinBasis1D(order=1, lo=0.0, range=160.0, name="ozone"),
            BernsteinBasis1D(order=0, lo=30.0, range=80.0, name="temp"),
        )
        falling = SurfaceSpec(ozone_basis=basis[0], temp_basis=basis[1], coeffs=np.array([0.1, -0.1]))
        with pytest.raises(ConfigurationError):
            generate_synthetic(_spec(n_cities=1, family="monotone", surfaces=[falling]))

    def test_truth_round_trip(self, tmp_path):
        _, truth = generate_synthetic(_spec())
        truth.save(tmp_path)
        loaded = GroundTruth.load(tmp_path)
        np.testing.assert_allclose(loaded.surface("city01").coeffs, truth.surface("city01").coeffs)
        with pytest.raises(KeyError):
            loaded.surface("city99")


def test_spec_from_run_config():
    spec = synth_spec_from_config(RunConfig(n_cities=4, n_days=100, seed=5), family="additive-linear")
    assert (spec.n_cities, spec.n_days, spec.seed, spec.family) == (4, 100, 5, "additive-linear")


@pytest.mark.slow
def test_pipeline_recovers_a_positive_ozone_effect():
    from ozone_surface.services.basis import eval_dfdx1
    from ozone_surface.services.hier import run_chain
    from ozone_surface.services.stage1 import Stage1Service
    from ozone_surface.services.surfaces import LOG_RR_SCALE, city_average_effect

    cities, truth = generate_synthetic(
        SynthSpec(n_cities=6, n_days=3000, orders=(3, 3), effect_scale=3.0, seed=11)
    )
    config = RunConfig(m1=3, m2=3, min_order_ozone=2, min_order_temp=2, iterations=3000, burn_in=1500, thin=5, seed=11)
    fits, record = Stage1Service(config).run(cities)
    sample = run_chain(fits, (record.ozone_basis, record.temp_basis), config.chain_config(), config.hyperpriors())

    estimated = np.mean([city_average_effect(sample, fit)[0].mean for fit in fits])
    true = np.mean(
        [LOG_RR_SCALE * np.mean(eval_dfdx1(truth.surface(f.city_id), f.ozone_obs, f.temp_obs)) for f in fits]
    )
    assert estimated > 0
    assert true / 3 < estimated < 3 * true


@pytest.mark.slow
def test_pooled_surfaces_beat_first_stage_on_most_grid_points():
    from ozone_surface.services.basis import eval_dfdx1
    from ozone_surface.services.hier import run_chain
    from ozone_surface.services.stage1 import Stage1Service
    from ozone_surface.services.surfaces import LOG_RR_SCALE, point_draws

    cities, truth = generate_synthetic(
        SynthSpec(n_cities=10, n_days=1200, orders=(3, 3), effect_scale=2.0, seed=17)
    )
    config = RunConfig(m1=3, m2=3, min_order_ozone=2, min_order_temp=2, iterations=3000, burn_in=1500, thin=5, seed=17)
    fits, record = Stage1Service(config).run(cities)
    assert len(fits) == 10
    sample = run_chain(fits, (record.ozone_basis, record.temp_basis), config.chain_config(), config.hyperpriors())

    levels = np.linspace(0.1, 0.9, 7)
    pooled_errors, first_errors = [], []
    for fit in fits:
        # the same quantile grid in every city, so grid points line up across cities
        temp, ozone = np.meshgrid(np.quantile(fit.temp_obs, levels), np.quantile(fit.ozone_obs, levels), indexing="ij")
        ozone, temp = ozone.ravel(), temp.ravel()
        true = LOG_RR_SCALE * eval_dfdx1(truth.surface(fit.city_id), ozone, temp)
        local = SurfaceSpec(ozone_basis=fit.local_ozone_basis, temp_basis=fit.local_temp_basis, coeffs=fit.beta_hat)
        first_errors.append(LOG_RR_SCALE * eval_dfdx1(local, ozone, temp) - true)
        pooled_errors.append(point_draws(sample, fit.city_id, ozone, temp).mean(axis=0) - true)

    pooled_rmse = np.sqrt(np.mean(np.square(pooled_errors), axis=0))
    first_rmse = np.sqrt(np.mean(np.square(first_errors), axis=0))
    assert np.mean(pooled_rmse < first_rmse) >= 0.8
