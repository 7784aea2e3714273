import os

# no progress bars or colour codes in captured output
os.environ.setdefault("ENV", "test")
os.environ.setdefault("PROGRESS", "false")

import numpy as np
import pytest

from ozone_surface.schemas.pydantic.config import RunConfig
from ozone_surface.schemas.pydantic.surface import BernsteinBasis1D
from ozone_surface.schemas.pydantic.synthetic import SynthSpec
from ozone_surface.services.stage1 import Stage1Service
from ozone_surface.services.synthetic import generate_synthetic


SMALL = dict(
    m1=3,
    m2=3,
    min_order_ozone=2,
    min_order_temp=2,
    iterations=60,
    burn_in=30,
    thin=3,
    n_cities=3,
    n_days=730,
    grid_size=11,
    min_supporting_cities=1,
    seed=7,
)


@pytest.fixture(autouse=True)
def _clean_run_env(monkeypatch):
    for key in list(os.environ):
        if key.upper().startswith("OZS_"):
            monkeypatch.delenv(key, raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    return RunConfig(**SMALL)


@pytest.fixture
def unit_bases():
    return (
        BernsteinBasis1D(order=3, lo=0.0, range=100.0, name="ozone"),
        BernsteinBasis1D(order=2, lo=40.0, range=60.0, name="temp"),
    )


@pytest.fixture(scope="session")
def synthetic_cities():
    cities, truth = generate_synthetic(SynthSpec(n_cities=3, n_days=730, orders=(3, 3), seed=7))
    return cities, truth


@pytest.fixture(scope="session")
def stage1_result(synthetic_cities):
    cities, _ = synthetic_cities
    return Stage1Service(RunConfig(**SMALL)).run(cities)


def make_fit(rng, bases, city_id="c1", lat=40.0, lon=-80.0, n_days=200, region="east", beta=None, n_gamma=2):
    """Stage1Fit whose local basis equals ``bases``, with a random PD covariance."""
    from ozone_surface.models.stage1 import Stage1Fit

    ozone_basis, temp_basis = bases
    p = ozone_basis.size * temp_basis.size
    total = p + n_gamma
    root = rng.normal(size=(total, total)) * 0.05
    cov = root @ root.T + 0.01 * np.eye(total)
    ozone = rng.uniform(ozone_basis.lo, ozone_basis.hi, size=n_days)
    temp = rng.uniform(temp_basis.lo, temp_basis.hi, size=n_days)
    ozone[:2] = ozone_basis.lo, ozone_basis.hi
    temp[:2] = temp_basis.lo, temp_basis.hi
    return Stage1Fit(
        city_id=city_id,
        lat=lat,
        lon=lon,
        region=region,
        population=1_000_000,
        n_days=n_days,
        beta_hat=rng.normal(size=p) if beta is None else np.asarray(beta, dtype=float),
        gamma_hat=rng.normal(size=n_gamma),
        gamma_labels=[f"g{i}" for i in range(n_gamma)],
        v11=cov[:p, :p],
        v12=cov[:p, p:],
        v22=cov[p:, p:],
        local_ozone_basis=ozone_basis,
        local_temp_basis=temp_basis,
        ozone_obs=ozone,
        temp_obs=temp,
    )
