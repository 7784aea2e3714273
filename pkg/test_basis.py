import numpy as np
import pytest

from ozone_surface.core.exceptions import DomainError
from ozone_surface.schemas.pydantic.surface import BernsteinBasis1D, MonotoneCoeffs, SurfaceSpec
from ozone_surface.services.basis import (
    basis_derivative_1d,
    bernstein_matrix,
    constrained_mask,
    eval_basis_1d,
    eval_cross_deriv,
    eval_dfdx1,
    eval_surface,
    inverse_transform_matrix,
    psi_to_theta,
    surface_from_theta,
    tensor_design,
    theta_to_psi,
    truncate_array,
    transform_matrix,
    truncate_theta,
)


def _random_surface(rng, m1=4, m2=3):
    ozone = BernsteinBasis1D(order=m1, lo=5.0, range=120.0, name="ozone")
    temp = BernsteinBasis1D(order=m2, lo=35.0, range=65.0, name="temp")
    return SurfaceSpec(ozone_basis=ozone, temp_basis=temp, coeffs=rng.normal(size=(m1 + 1) * (m2 + 1)))


class TestBernsteinBasis:
    def test_partition_of_unity(self, rng):
        u = rng.uniform(0, 1, size=1000)
        for order in (0, 1, 5, 12):
            np.testing.assert_allclose(bernstein_matrix(u, order).sum(axis=1), 1.0, atol=1e-12)

    def test_nonnegative(self, rng):
        assert np.all(bernstein_matrix(rng.uniform(0, 1, 500), 9) >= 0)

    def test_known_values(self):
        # b_k(u, 2) at u = 0.5 is (0.25, 0.5, 0.25)
        np.testing.assert_allclose(bernstein_matrix(np.array([0.5]), 2)[0], [0.25, 0.5, 0.25])

    def test_endpoints(self):
        basis = BernsteinBasis1D(order=4, lo=10.0, range=20.0)
        np.testing.assert_allclose(eval_basis_1d(basis, 10.0), [1, 0, 0, 0, 0])
        np.testing.assert_allclose(eval_basis_1d(basis, 30.0), [0, 0, 0, 0, 1])

    def test_order_zero_is_constant(self):
        basis = BernsteinBasis1D(order=0, lo=0.0, range=1.0)
        np.testing.assert_allclose(eval_basis_1d(basis, np.array([0.0, 0.3, 1.0])), 1.0)
        np.testing.assert_allclose(basis_derivative_1d(basis, np.array([0.2, 0.7])), 0.0)

    def test_outside_domain_raises(self):
        basis = BernsteinBasis1D(order=3, lo=0.0, range=10.0, name="ozone")
        with pytest.raises(DomainError):
            eval_basis_1d(basis, 10.5)
        with pytest.raises(DomainError):
            eval_basis_1d(basis, np.array([1.0, np.nan]))

    def test_rejects_nonpositive_range(self):
        with pytest.raises(ValueError):
            BernsteinBasis1D(order=3, lo=0.0, range=0.0)

    def test_derivative_matches_finite_differences(self, rng):
        basis = BernsteinBasis1D(order=7, lo=-3.0, range=11.0)
        x = rng.uniform(basis.lo + 0.01, basis.hi - 0.01, size=1000)
        h = 1e-6
        numeric = (eval_basis_1d(basis, x + h) - eval_basis_1d(basis, x - h)) / (2 * h)
        analytic = basis_derivative_1d(basis, x)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-7)


class TestTensorSurface:
    def test_psi_ordering_ozone_fastest(self, unit_bases):
        ozone_basis, temp_basis = unit_bases
        row = tensor_design(ozone_basis, temp_basis, 30.0, 55.0)[0]
        expected = np.kron(eval_basis_1d(temp_basis, 55.0), eval_basis_1d(ozone_basis, 30.0))
        np.testing.assert_allclose(row, expected)

    def test_constant_coefficients_give_constant_surface(self, unit_bases):
        spec = SurfaceSpec(ozone_basis=unit_bases[0], temp_basis=unit_bases[1], coeffs=np.full(12, 2.5))
        np.testing.assert_allclose(eval_surface(spec, np.array([0.0, 50.0, 100.0]), np.array([40.0, 70.0, 100.0])), 2.5)
        np.testing.assert_allclose(eval_dfdx1(spec, np.array([10.0, 90.0]), np.array([45.0, 95.0])), 0.0, atol=1e-12)

    @pytest.mark.parametrize("a,b", [(0.3, 1.7), (-2.0, 0.05)])
    def test_linear_coefficients_reproduce_a_plane(self, rng, a, b):
        m1, m2 = 5, 3
        ozone_basis = BernsteinBasis1D(order=m1, lo=10.0, range=90.0, name="ozone")
        temp_basis = BernsteinBasis1D(order=m2, lo=40.0, range=60.0, name="temp")
        j = np.arange(m1 + 1) / m1
        grid = np.repeat((a + b * j)[:, None], m2 + 1, axis=1)
        spec = SurfaceSpec(ozone_basis=ozone_basis, temp_basis=temp_basis, coeffs=grid.T.ravel())
        ozone = rng.uniform(10.0, 100.0, size=500)
        temp = rng.uniform(40.0, 100.0, size=500)
        np.testing.assert_allclose(eval_surface(spec, ozone, temp), a + b * (ozone - 10.0) / 90.0, atol=1e-10)

    def test_corners_interpolate_coefficients(self, rng):
        m1, m2 = 4, 3
        spec = _random_surface(rng, m1, m2)
        psi = spec.coeffs
        assert eval_surface(spec, 5.0, 35.0) == pytest.approx(psi[0], abs=1e-12)
        assert eval_surface(spec, 125.0, 100.0) == pytest.approx(psi[-1], abs=1e-12)
        assert eval_surface(spec, 125.0, 35.0) == pytest.approx(psi[m1], abs=1e-12)
        assert eval_surface(spec, 5.0, 100.0) == pytest.approx(psi[m2 * (m1 + 1)], abs=1e-12)

    def test_scalar_inputs_return_float(self, unit_bases):
        spec = SurfaceSpec(ozone_basis=unit_bases[0], temp_basis=unit_bases[1], coeffs=np.arange(12.0))
        assert isinstance(eval_surface(spec, 20.0, 60.0), float)

    def test_coefficient_length_checked(self, unit_bases):
        with pytest.raises(ValueError):
            SurfaceSpec(ozone_basis=unit_bases[0], temp_basis=unit_bases[1], coeffs=np.zeros(5))

    def test_ozone_derivative_matches_finite_differences(self, rng):
        spec = _random_surface(rng)
        ozone = rng.uniform(6.0, 124.0, size=1000)
        temp = rng.uniform(36.0, 99.0, size=1000)
        h = 1e-5
        numeric = (eval_surface(spec, ozone + h, temp) - eval_surface(spec, ozone - h, temp)) / (2 * h)
        np.testing.assert_allclose(eval_dfdx1(spec, ozone, temp), numeric, rtol=1e-6, atol=1e-9)

    def test_cross_derivative_matches_finite_differences(self, rng):
        spec = _random_surface(rng)
        ozone = rng.uniform(6.0, 124.0, size=200)
        temp = rng.uniform(36.0, 99.0, size=200)
        h = 1e-3
        numeric = (
            eval_surface(spec, ozone + h, temp + h)
            - eval_surface(spec, ozone + h, temp - h)
            - eval_surface(spec, ozone - h, temp + h)
            + eval_surface(spec, ozone - h, temp - h)
        ) / (4 * h * h)
        np.testing.assert_allclose(eval_cross_deriv(spec, ozone, temp), numeric, rtol=1e-5, atol=1e-8)


class TestMonotoneTransform:
    def test_transform_inverse(self):
        for m1, m2 in ((0, 0), (3, 2), (7, 9)):
            T = transform_matrix(m1, m2)
            np.testing.assert_allclose(T @ inverse_transform_matrix(m1, m2), np.eye(T.shape[0]), atol=1e-12)

    def test_vector_helpers_agree_with_matrices(self, rng):
        m1, m2 = 4, 2
        theta = rng.normal(size=(5, (m1 + 1) * (m2 + 1)))
        np.testing.assert_allclose(theta_to_psi(theta, m1, m2), theta @ inverse_transform_matrix(m1, m2).T)
        psi = theta_to_psi(theta, m1, m2)
        np.testing.assert_allclose(psi_to_theta(psi, m1, m2), theta, atol=1e-12)

    def test_first_differences_along_ozone(self):
        m1, m2 = 2, 1
        psi = np.array([1.0, 3.0, 4.0, 0.0, -1.0, 5.0])
        np.testing.assert_allclose(psi_to_theta(psi, m1, m2), [1.0, 2.0, 1.0, 0.0, -1.0, 6.0])

    def test_constrained_mask_excludes_j0(self):
        mask = constrained_mask(2, 1)
        np.testing.assert_array_equal(mask, [False, True, True, False, True, True])

    def test_truncate_theta(self):
        theta_star = np.array([-1.0, -2.0, 0.5, -3.0, 0.2, -0.1])
        coeffs = truncate_theta(theta_star, 2, 1)
        np.testing.assert_allclose(coeffs.theta, [-1.0, 0.0, 0.5, -3.0, 0.2, 0.0])

    def test_truncate_theta_checks_length(self):
        with pytest.raises(ValueError):
            truncate_theta(np.zeros(5), 2, 1)

    def test_cone_membership_validated(self):
        with pytest.raises(ValueError):
            MonotoneCoeffs(theta=np.array([0.0, -1.0, 0.0, 0.0]), m1=1, m2=1)

    def test_truncated_coefficients_are_monotone(self, rng):
        ozone_basis = BernsteinBasis1D(order=5, lo=0.0, range=150.0, name="ozone")
        temp_basis = BernsteinBasis1D(order=4, lo=30.0, range=80.0, name="temp")
        ozone, temp = np.meshgrid(np.linspace(0.0, 150.0, 50), np.linspace(30.0, 110.0, 50))
        design = tensor_design(ozone_basis, temp_basis, ozone.ravel(), temp.ravel(), d_ozone=True)
        for _ in range(200):
            theta = truncate_theta(rng.normal(size=30), 5, 4).theta
            assert np.all(design @ theta_to_psi(theta, 5, 4) >= -1e-12)

    def test_surface_from_theta(self, unit_bases):
        theta = np.zeros(12)
        theta[0] = 1.0
        spec = surface_from_theta(theta, *unit_bases)
        # theta_00 = 1 spreads to psi_j0 = 1 for every j
        np.testing.assert_allclose(spec.coeff_grid()[:, 0], 1.0)
        np.testing.assert_allclose(spec.coeff_grid()[:, 1:], 0.0)


@pytest.mark.slow
def test_monotone_cone_at_scale(rng):
    ozone_basis = BernsteinBasis1D(order=7, lo=0.0, range=150.0, name="ozone")
    temp_basis = BernsteinBasis1D(order=9, lo=30.0, range=80.0, name="temp")
    ozone, temp = np.meshgrid(np.linspace(0.0, 150.0, 50), np.linspace(30.0, 110.0, 50))
    design = tensor_design(ozone_basis, temp_basis, ozone.ravel(), temp.ravel(), d_ozone=True)
    for _ in range(10):
        draws = truncate_array(rng.normal(size=(1000, 80)), 7, 9)
        assert np.all(theta_to_psi(draws, 7, 9) @ design.T >= -1e-12)
