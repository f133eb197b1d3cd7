"""Финальные данные, фазы S_A / S_B, поправка v_ap и проверки условий."""
import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from coeffs import ln_exact_at_one
from config import DataSpec
from errors import DegenerateDataError, DomainError, ShapeError
from hyperbolic import ZGrid
from profiles import (FinalData, PhasePair, amplitudes_from_final_data, canonical_data, correction_spec,
                      data_from_spec, final_data_from_initial, im_l2_lower_bound, phase_derivative_diagnostics,
                      phase_pair, spatial_points, u_tilde_eval, uap_eval, validate_assumption, vap_eval,
                      weighted_sobolev_norm, zeta_and_alpha)


def constant_data(dimension, a, b, coupling=1.0):
    grid = ZGrid.symmetric(2.0, 5, dimension)
    return FinalData(dimension, grid, np.full(grid.shape, a, dtype=complex),
                     np.full(grid.shape, b, dtype=complex), coupling)


def bump(y):
    inside = np.abs(y) < 1.0
    return np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - y * y, 1.0)), 0.0)


class TestFinalData:

    def test_shape_mismatch(self, grid_1d):
        with pytest.raises(ShapeError):
            FinalData(1, grid_1d, np.zeros(257), np.zeros(256))

    def test_grid_dimension(self, grid_1d):
        with pytest.raises(ShapeError):
            FinalData(2, grid_1d, np.zeros(257), np.zeros(257))

    def test_rho0(self, grid_1d):
        with pytest.raises(DomainError):
            FinalData(1, grid_1d, np.zeros(257), np.zeros(257), rho0=0.5)

    def test_non_finite(self, grid_1d):
        A1 = np.zeros(257)
        A1[3] = np.nan
        with pytest.raises(DomainError):
            FinalData(1, grid_1d, A1, np.zeros(257))

    def test_spec_defaults(self):
        data = data_from_spec(DataSpec())
        assert data.dimension == 1
        assert data.grid.shape == (257,)
        assert abs(np.max(np.abs(data.A1)) - 0.1) < 1e-15
        assert abs(np.max(np.abs(data.B1)) - 0.05) < 1e-15

    def test_samples_file(self, tmp_path, data_1d):
        path = tmp_path / "samples.npz"
        np.savez(path, z=data_1d.grid.axis, A1=data_1d.A1, B1=data_1d.B1)
        loaded = data_from_spec(DataSpec(samples_path=str(path)))
        assert np.array_equal(loaded.A1, data_1d.A1)
        assert np.array_equal(loaded.B1, data_1d.B1)

    def test_missing_samples(self, tmp_path):
        with pytest.raises(DomainError):
            data_from_spec(DataSpec(samples_path=str(tmp_path / "none.npz")))

    def test_phase_pair_must_be_real(self):
        with pytest.raises(DomainError):
            PhasePair(np.array([1.0 + 1e-3j]), np.array([0.0]))


class TestAmplitudes:

    @pytest.mark.parametrize("dimension", [1, 2])
    def test_hermitian_spectra_give_real_solution(self, dimension):
        """phi^(-mu) = conj(phi^(mu)) => B1 = conj(A1)."""
        grid = ZGrid.symmetric(6.0, 49, dimension)
        z = grid.coords[0]
        g = np.exp(-0.5 * grid.radius2)
        phi0 = g * (1.0 + 0.3j * z)
        phi1 = 0.5j * z * g
        A1, B1 = amplitudes_from_final_data(phi0, phi1, grid)
        assert np.max(np.abs(B1 - np.conj(A1))) < 1e-14

    def test_zero_data(self, grid_1d):
        A1, B1 = amplitudes_from_final_data(np.zeros(257), np.zeros(257), grid_1d)
        assert not np.any(A1)
        assert not np.any(B1)

    def test_shape_mismatch(self, grid_1d):
        with pytest.raises(ShapeError):
            amplitudes_from_final_data(np.zeros(257), np.zeros(255), grid_1d)

    def test_asymmetric_grid(self):
        grid = ZGrid(1, np.linspace(0.0, 4.0, 9))
        with pytest.raises(ShapeError):
            amplitudes_from_final_data(np.zeros(9), np.zeros(9), grid)

    def test_gaussian_initial_data(self, grid_1d):
        """phi0 = e^{-x^2/2}, phi1 = -i x e^{-x^2/2}: |B1| / |A1| = 1."""
        x = np.linspace(-20.0, 20.0, 801)
        g = np.exp(-0.5 * x * x)
        data = final_data_from_initial(g, -1j * x * g, x, grid_1d)
        a = np.abs(data.A1)
        keep = a > 1e-6 * np.max(a)
        assert np.max(np.abs(np.abs(data.B1[keep]) / a[keep] - 1.0)) < 1e-9

    def test_initial_shape(self, grid_1d):
        x = np.linspace(-5.0, 5.0, 11)
        with pytest.raises(ShapeError):
            final_data_from_initial(np.zeros(11), np.zeros(12), x, grid_1d)


class TestZetaAlpha:

    def test_real_solution(self, real_data_1d):
        zeta, alpha = zeta_and_alpha(real_data_1d.A1, real_data_1d.B1)
        assert np.all(zeta == 1.0)
        assert np.max(np.abs(alpha - 0.6)) < 1e-12

    def test_isolated_zero_extended(self, grid_1d, gaussian):
        """Нуль A1 в z = 0 заполняется соседним значением."""
        A1 = grid_1d.axis * gaussian(grid_1d.axis)
        zeta, alpha = zeta_and_alpha(A1, 0.5 * A1)
        assert np.all(zeta == 0.5)
        assert np.all(alpha == 0.0)

    def test_no_forward_wave(self, grid_1d, gaussian):
        with pytest.raises(DegenerateDataError):
            zeta_and_alpha(np.zeros(257), gaussian(grid_1d.axis))

    def test_floor_positive(self, grid_1d, gaussian):
        with pytest.raises(DomainError):
            zeta_and_alpha(gaussian(grid_1d.axis), gaussian(grid_1d.axis), theta_floor=0.0)

    def test_shape(self):
        with pytest.raises(ShapeError):
            zeta_and_alpha(np.ones(3), np.ones(4))


class TestPhasePair:

    def test_one_dimensional_values(self):
        """lambda = 1, A1 = 1, B1 = 0 при z = 0: S_A = 1/2, S_B = -1."""
        phases = phase_pair(constant_data(1, 1.0, 0.0))
        assert abs(phases.S_A[2] - 0.5) < 1e-15
        assert abs(phases.S_B[2] + 1.0) < 1e-15

    def test_one_dimensional_real_data(self, real_data_1d):
        phases = phase_pair(real_data_1d)
        assert np.all(phases.total == 0.0)

    def test_two_dimensional_equal_moduli(self, l0_at_one):
        """|A1| = |B1|: S_A = (lambda/2)<z>^{-1} L_0(1)|A1|, S_A + S_B = 0 ровно."""
        data = constant_data(2, 1.0, 1.0, coupling=2.0)
        phases = phase_pair(data)
        expected = l0_at_one / data.grid.bracket
        assert np.max(np.abs(phases.S_A - expected)) < 1e-10
        assert np.all(phases.total == 0.0)

    def test_two_dimensional_real_data(self, grid_2d, l0_at_one):
        """B1 = conj(A1) в 2D: zeta = 1 всюду, S_A + S_B = 0 ровно."""
        A1 = 0.1 * np.exp(-0.5 * grid_2d.radius2) * np.exp(0.3j)
        data = FinalData(2, grid_2d, A1, np.conj(A1))
        zeta, _ = zeta_and_alpha(data.A1, data.B1)
        phases = phase_pair(data)
        assert np.all(zeta == 1.0)
        assert np.all(phases.total == 0.0)
        expected = 0.5 * l0_at_one * np.abs(A1) / grid_2d.bracket
        assert np.max(np.abs(phases.S_A - expected)) < 1e-10

    def test_two_dimensional_missing_backward_wave(self):
        """B1 = 0: S_A = (lambda/2)<z>^{-1}|A1|, S_B = -(3 lambda/4)<z>^{-1}|A1|."""
        data = constant_data(2, 2.0, 0.0)
        phases = phase_pair(data)
        c = data.grid.bracket
        assert np.max(np.abs(phases.S_A * c - 1.0)) < 1e-10
        assert np.max(np.abs(phases.S_B * c + 1.5)) < 1e-8

    def test_two_dimensional_missing_forward_wave(self):
        """A1 = 0: S_A = (3 lambda/4)<z>^{-1}|B1|, S_B = -(lambda/2)<z>^{-1}|B1|."""
        data = constant_data(2, 0.0, 2.0)
        phases = phase_pair(data)
        c = data.grid.bracket
        assert np.max(np.abs(phases.S_A * c - 1.5)) < 1e-8
        assert np.max(np.abs(phases.S_B * c + 1.0)) < 1e-10

    def test_swapping_waves(self, data_2d, phases_2d):
        """Перестановка A1 <-> B1 переставляет фазы со сменой знака."""
        swapped = FinalData(2, data_2d.grid, data_2d.B1, data_2d.A1)
        other = phase_pair(swapped)
        scale = np.max(np.abs(phases_2d.S_A))
        assert np.max(np.abs(other.S_A + phases_2d.S_B)) <= 1e-15 * scale
        assert np.max(np.abs(other.S_B + phases_2d.S_A)) <= 1e-15 * scale

    def test_discriminant_sign(self, phases_2d):
        """|B1| < |A1| всюду: S_A + S_B < 0."""
        assert np.all(phases_2d.total < 0.0)


class TestCorrection:

    def test_one_dimensional_coefficients(self):
        """lambda = 1, A1 = 2, B1 = 1: A_2 = -1/2, B_2 = -1/4."""
        data = constant_data(1, 2.0, 1.0)
        spec = correction_spec(data, phase_pair(data))
        assert spec.n_max == 2
        assert np.max(np.abs(spec.A[2] + 0.5)) < 1e-15
        assert np.max(np.abs(spec.B[2] + 0.25)) < 1e-15

    def test_one_dimensional_no_forward_wave(self):
        data = constant_data(1, 0.0, 1.0)
        spec = correction_spec(data, phase_pair(data))
        assert not np.any(spec.A[2])
        assert not np.any(spec.B[2])

    def test_two_dimensional_at_one(self):
        """zeta = 1: A_m = c_m L_{m-1}(1), B_m = c_m L_{-m}(1) при A1 = B1 = 1."""
        data = constant_data(2, 1.0, 1.0)
        spec = correction_spec(data, phase_pair(data), 16)
        for m in range(2, 17):
            c_m = 1.0 / (1.0 - (2 * m - 1) ** 2)
            assert np.max(np.abs(spec.A[m] - c_m * ln_exact_at_one(m - 1))) < 1e-10
            assert np.max(np.abs(spec.B[m] - c_m * ln_exact_at_one(-m))) < 1e-10

    def test_two_dimensional_polynomial_decay(self):
        data = constant_data(2, 1.0, 1.0)
        sup = correction_spec(data, phase_pair(data), 16).sup_norms()
        ratio = (16 ** 5 * sup[16]) / (8 ** 5 * sup[8])
        assert 1.0 / 3.0 < ratio < 3.0

    def test_tail_is_small(self, data_2d, phases_2d):
        spec = data_2d.correction(phases_2d, 16)
        assert spec.sup_norms()[16] <= 1e-4 * np.max(np.abs(data_2d.A1)) ** 2

    def test_two_dimensional_needs_two_modes(self, data_2d, phases_2d):
        with pytest.raises(DomainError):
            correction_spec(data_2d, phases_2d, 1)

    def test_cached_per_phase_pair(self, data_1d, phases_1d):
        assert data_1d.correction_terms(phases_1d) is data_1d.correction_terms(phases_1d)


class TestProfileEvaluation:

    def test_time_domain(self, data_1d, phases_1d):
        with pytest.raises(DomainError):
            uap_eval(data_1d, phases_1d, 0.5)

    def test_zero_outside_cone(self, data_1d, phases_1d):
        t = 10.0
        x = np.linspace(-2.0 * t, 2.0 * t, 401)
        field = uap_eval(data_1d, phases_1d, t, x)
        outside = np.abs(x) >= t * (1.0 - field.cone_cut)
        assert np.all(field.values[outside] == 0.0)
        assert np.any(field.values[~outside] != 0.0)

    def test_value_at_origin(self, data_1d, phases_1d):
        t = 10.0
        field = uap_eval(data_1d, phases_1d, t, np.array([0.0]))
        i = 128
        expected = t ** -0.5 * (
            data_1d.A1[i] * np.exp(-1j * t + 1j * phases_1d.S_A[i] * math.log(t))
            + data_1d.B1[i] * np.exp(1j * t + 1j * phases_1d.S_B[i] * math.log(t)))
        assert abs(field.values[0] - expected) < 1e-12

    def test_single_wave_modulus(self, grid_1d, gaussian):
        """B1 = 0: |u_ap(t, x)| = t^{-1/2}|A1(x / tau)|."""
        data = FinalData(1, grid_1d, 0.1 * gaussian(grid_1d.axis), np.zeros(257))
        t = 10.0
        x = np.linspace(-9.9, 9.9, 199)
        field = uap_eval(data, phase_pair(data), t, x)
        mu = x / np.sqrt(t * t - x * x)
        assert np.max(np.abs(np.abs(field.values) - 0.1 * gaussian(mu) / math.sqrt(t))) < 1e-7

    def test_norm_conserved(self, grid_1d, gaussian):
        """||u_ap(t)||_{L^2} = ||<z>^{-3/2} A1|| для одной волны."""
        data = FinalData(1, grid_1d, 0.1 * gaussian(grid_1d.axis), np.zeros(257))
        phases = phase_pair(data)
        expected = grid_1d.l2(grid_1d.bracket ** -1.5 * data.A1)
        for t in (10.0, 40.0):
            field = uap_eval(data, phases, t, points=200001)
            norm = math.sqrt(trapezoid(np.abs(field.values) ** 2, field.x))
            assert abs(norm / expected - 1.0) < 1e-5

    def test_correction_vanishes_without_forward_wave(self, grid_1d, gaussian):
        data = FinalData(1, grid_1d, np.zeros(257), 0.1 * gaussian(grid_1d.axis))
        phases = phase_pair(data)
        field = vap_eval(data, phases, data.correction(phases), 10.0, points=101)
        assert not np.any(field.values)

    def test_u_tilde_is_sum(self, data_1d, phases_1d):
        t = 10.0
        spec = data_1d.correction(phases_1d)
        total = u_tilde_eval(data_1d, phases_1d, t, points=101)
        parts = uap_eval(data_1d, phases_1d, t, points=101).values + vap_eval(
            data_1d, phases_1d, spec, t, points=101).values
        assert np.max(np.abs(total.values - parts)) < 1e-15

    def test_two_dimensional_field(self, data_2d, phases_2d):
        t = 5.0
        field = uap_eval(data_2d, phases_2d, t, points=21)
        x1, x2 = spatial_points(t, 21, 2)
        assert field.values.shape == (21, 21)
        assert np.all(field.values[np.hypot(x1, x2) >= t] == 0.0)


class TestSobolev:

    def test_zero(self, grid_1d):
        assert weighted_sobolev_norm(np.zeros(257), 2, 2.0, grid_1d) == 0.0

    def test_gaussian_l2(self, grid_1d, gaussian):
        """||e^{-z^2/2}|| = pi^{1/4}."""
        value = weighted_sobolev_norm(gaussian(grid_1d.axis), 0, 0.0, grid_1d)
        assert abs(value - math.pi ** 0.25) < 1e-10

    def test_gaussian_h1(self, grid_1d, gaussian):
        value = weighted_sobolev_norm(gaussian(grid_1d.axis), 1, 0.0, grid_1d)
        assert abs(value - math.pi ** 0.25 * (1.0 + 1.0 / math.sqrt(2.0))) < 1e-10

    def test_gaussian_2d(self, grid_2d):
        value = weighted_sobolev_norm(np.exp(-0.5 * grid_2d.radius2), 0, 0.0, grid_2d)
        assert abs(value - math.sqrt(math.pi)) < 1e-10

    def test_order_domain(self, grid_1d):
        with pytest.raises(DomainError):
            weighted_sobolev_norm(np.zeros(257), 3, 0.0, grid_1d)

    def test_shape(self, grid_1d):
        with pytest.raises(ShapeError):
            weighted_sobolev_norm(np.zeros(100), 0, 0.0, grid_1d)


class TestAssumption:

    def test_canonical_passes(self, data_1d):
        report = validate_assumption(data_1d)
        assert report.ratio_ok
        assert report.derivative_status == "bounded"
        assert report.sobolev_ok
        assert report.passed
        assert abs(report.zeta_min - 0.5) < 1e-12

    def test_disjoint_supports(self, grid_1d):
        z = grid_1d.axis
        data = FinalData(1, grid_1d, bump(z + 3.0), bump(z - 3.0))
        report = validate_assumption(data)
        assert not report.ratio_ok
        assert report.split
        assert not report.passed

    def test_log_singular_ratio(self):
        """zeta = 1 + r log(1 + 1/r)^{1/4}: производные не ограничены, но нормы конечны."""
        grid = ZGrid.symmetric(8.0, 257, 2)
        r = np.sqrt(grid.radius2)
        with np.errstate(divide="ignore", invalid="ignore"):
            zeta = np.where(r > 0.0, 1.0 + r * np.log1p(1.0 / np.where(r > 0.0, r, 1.0)) ** 0.25, 1.0)
        g = np.exp(-0.5 * grid.radius2)
        data = FinalData(2, grid, g, zeta * g, rho0=10.0)
        report = validate_assumption(data)
        assert report.ratio_ok
        assert report.derivative_status == "unbounded_allowed"
        assert report.passed

    def test_never_raises_on_degenerate(self, grid_1d, gaussian):
        data = FinalData(1, grid_1d, np.zeros(257), gaussian(grid_1d.axis))
        report = validate_assumption(data)
        assert report.derivative_status == "degenerate"
        assert not report.passed


class TestImaginaryPart:

    def test_complex_data_bounded_below(self, data_1d, phases_1d):
        bound = im_l2_lower_bound(data_1d, phases_1d, [50.0, 100.0, 200.0])
        assert bound.applicable
        assert bound.minimum >= 0.3 * bound.reference

    def test_real_data_not_applicable(self, real_data_1d):
        bound = im_l2_lower_bound(real_data_1d, phase_pair(real_data_1d), [50.0])
        assert not bound.applicable

    def test_time_domain(self, data_1d, phases_1d):
        with pytest.raises(DomainError):
            im_l2_lower_bound(data_1d, phases_1d, [0.5, 10.0])

    def test_phase_diagnostics(self, data_1d, phases_1d):
        diag = phase_derivative_diagnostics(data_1d, phases_1d)
        for value in (diag.grad_a, diag.hess_a, diag.grad_b, diag.hess_b):
            assert math.isfinite(value) and value > 0.0
