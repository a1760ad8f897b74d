"""
Tests for the closed-loop small-signal model.

This test file verifies:
1. Synchronization and voltage loop transfer functions
2. Equilibrium search on the nominal and on mismatched plants
3. Analytic against numeric Jacobians
4. Decoupling of the error coordinates at the design inductance
5. Spectra and the pole sweep over grid strength
"""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from fluxgfm.errors import InvalidSpec, UnstableSweep
from fluxgfm.numerics import J, eig_small, rk4_step
from fluxgfm.plant import PlantParams, virtual_flux
from fluxgfm.smallsignal import (
    ClosedLoop,
    PoleSweepResult,
    SweepSample,
    approximate_voltage_linearization,
    closed_loop_field,
    closed_loop_matrix,
    dominant_pole,
    error_coordinates,
    find_equilibrium,
    is_stable,
    linear_response,
    numeric_jacobian,
    pole_sweep,
    static_gain,
    sweep_workers,
    sync_tf_coeffs,
    sync_transfer_matrix,
)
from fluxgfm.tuning import TuningSpec, full_design, setpoints_for, steady_state_targets


def _plant(L: float) -> PlantParams:
    return PlantParams(L_pu=L)


@pytest.fixture(scope="module")
def design_model(reference_design):
    """Closed-loop model at L = L0 and nominal grid frequency."""
    g, sp = reference_design
    return closed_loop_matrix(g, sp, _plant(0.5))


# =============================================================================
# Loop transfer functions
# =============================================================================

class TestSyncLoop:

    def test_static_gain_is_identity(self, reference_design, omega0):
        g, sp = reference_design
        coeffs = sync_tf_coeffs(g.k_p, sp, omega0)
        assert static_gain(coeffs) == pytest.approx(np.eye(2))

    def test_roots_match_design(self, reference_design, omega0):
        g, sp = reference_design
        roots = sync_tf_coeffs(g.k_p, sp, omega0).characteristic_roots()
        assert np.sort_complex(roots) / omega0 == pytest.approx(
            np.sort_complex(np.roots([1.0, 2.7, 2.25])), abs=1e-9
        )

    def test_frequency_input_is_high_pass_for_angle(self, reference_design, omega0):
        g, sp = reference_design
        coeffs = sync_tf_coeffs(g.k_p, sp, omega0)
        # A grid frequency step leaves the steady angle unchanged ...
        assert abs(sync_transfer_matrix(coeffs, 1e-9 * omega0)[0, 1]) < 1e-6
        # ... and the estimate follows the grid frequency with unit gain.
        assert sync_transfer_matrix(coeffs, 0.0)[1, 1] == pytest.approx(1.0)

    def test_voltage_loop_poles(self, reference_design, omega0):
        g, sp = reference_design
        A_v, B_v = approximate_voltage_linearization(g, sp)
        assert np.trace(A_v) == pytest.approx(-2.0 * omega0)
        assert np.linalg.det(A_v) == pytest.approx(omega0**2)
        assert B_v.shape == (2,)


# =============================================================================
# Equilibrium
# =============================================================================

class TestEquilibrium:

    def test_design_point(self, reference_design, omega0):
        g, sp = reference_design
        eq = find_equilibrium(g, sp, _plant(0.5))
        assert eq.method == "newton"
        assert eq.residual < 1e-10
        assert eq.delta == pytest.approx(sp.delta_star, abs=1e-9)
        assert eq.p == pytest.approx(1.0, abs=1e-9)
        assert eq.V == pytest.approx(1.0, abs=1e-9)
        assert eq.omega_c == pytest.approx(omega0)
        assert eq.psi_hat == pytest.approx(sp.psi_star, abs=1e-12)

    @pytest.mark.parametrize("L", [0.1, 0.3, 0.8, 1.0])
    def test_mismatched_plant(self, reference_design, L):
        g, sp = reference_design
        eq = find_equilibrium(g, sp, _plant(L))
        assert eq.residual < 1e-8
        # Synchronized with the grid.
        assert eq.omega_c == pytest.approx(eq.omega_g, abs=1e-5)
        # Only the component of e orthogonal to k_i may remain.
        assert float(g.k_i @ eq.e) == pytest.approx(0.0, abs=1e-9 * np.linalg.norm(g.k_i))

    def test_strong_grid_overshoots_power(self, reference_design):
        g, sp = reference_design
        eq = find_equilibrium(g, sp, _plant(0.1))
        assert 1.0 < eq.p < 1.4

    def test_off_nominal_grid_frequency(self, reference_design, omega0):
        g, sp = reference_design
        omega_g = 0.98 * omega0
        eq = find_equilibrium(g, sp, _plant(0.5), omega_g)
        assert eq.omega_c == pytest.approx(omega_g, abs=1e-5)
        assert eq.omega_g == omega_g

    @pytest.mark.parametrize("factor", [0.9, 1.1])
    def test_matched_reference_tracks_grid_frequency(self, reference_design, reference_spec, omega0, factor):
        g, sp = reference_design
        omega_g = factor * omega0
        matched = steady_state_targets(reference_spec, sp.delta_star, omega_ref=omega_g)
        eq = find_equilibrium(g, matched, _plant(0.5), omega_g)
        assert eq.omega_c == pytest.approx(omega_g, abs=1e-6)
        assert eq.delta == pytest.approx(sp.delta_star, abs=1e-6)
        np.testing.assert_allclose(eq.psi_hat, matched.psi_star, atol=1e-9)

    @pytest.mark.parametrize("p_star", [-1.0, -0.3, 0.0, 0.5, 1.5])
    def test_load_angle_tracks_setpoint(self, reference_design, reference_spec, omega0, p_star):
        g, _ = reference_design
        sp = setpoints_for(reference_spec, p_star)
        eq = find_equilibrium(g, sp, _plant(0.5))
        assert eq.delta == pytest.approx(sp.delta_star, abs=1e-6)
        assert eq.omega_c == pytest.approx(omega0, abs=1e-6)
        assert eq.p == pytest.approx(p_star, abs=1e-6)

    def test_to_dict(self, reference_design):
        g, sp = reference_design
        data = find_equilibrium(g, sp, _plant(0.5)).to_dict()
        assert set(data["state"]) == {"i_d", "i_q", "delta", "psi_hat_d", "psi_hat_q", "gamma_d", "gamma_q"}
        assert data["method"] == "newton"

    def test_zero_integrator_gain_rejected(self, reference_design):
        g, sp = reference_design
        broken = type(g)(**{**g.__dict__, "k_i": np.zeros(2)})
        with pytest.raises(InvalidSpec):
            ClosedLoop(broken, sp, _plant(0.5), 100.0)


# =============================================================================
# Jacobian
# =============================================================================

class TestJacobian:

    def test_numeric_jacobian_small_example(self):
        A = numeric_jacobian(lambda x: np.array([x[1] ** 2, x[0]]), np.array([1.0, 1.0]))
        assert A == pytest.approx(np.array([[0.0, 2.0], [1.0, 0.0]]), abs=1e-8)

    def test_matches_numeric_at_design_point(self, design_model):
        assert design_model.jacobian_deviation() < 1e-6

    @pytest.mark.parametrize("L", [0.1, 1.0])
    def test_matches_numeric_off_design(self, reference_design, L):
        g, sp = reference_design
        model = closed_loop_matrix(g, sp, _plant(L))
        assert model.jacobian_deviation() < 1e-6

    def test_matches_numeric_away_from_equilibrium(self, reference_design, omega0):
        g, sp = reference_design
        loop = ClosedLoop(g, sp, _plant(0.7), 0.99 * omega0)
        x = loop.expand(loop.design_seed())
        x = x + np.array([0.1, -0.2, 0.05, 1e-4, -2e-4, 0.0, 0.0])
        A = loop.jacobian(x)
        A_num = numeric_jacobian(loop.field, x)
        scale = max(1.0, float(np.linalg.norm(A, ord=np.inf)))
        assert np.max(np.abs(A - A_num)) / scale < 1e-6

    @pytest.mark.parametrize("L", np.linspace(0.1, 1.0, 5).tolist())
    @pytest.mark.parametrize("f_grid", [45.0, 48.0, 52.0, 55.0])
    def test_matches_numeric_over_operating_range(self, reference_design, L, f_grid):
        g, sp = reference_design
        loop = ClosedLoop(g, sp, _plant(L), 2 * math.pi * f_grid)
        x = loop.expand(loop.design_seed())
        A = loop.jacobian(x)
        A_num = numeric_jacobian(loop.field, x)
        scale = max(1.0, float(np.linalg.norm(A, ord=np.inf)))
        assert np.max(np.abs(A - A_num)) / scale < 1e-6

    def test_closed_loop_field_callable(self, reference_design):
        g, sp = reference_design
        f = closed_loop_field(g, sp, _plant(0.5))
        x = ClosedLoop(g, sp, _plant(0.5), g.omega0).expand(
            ClosedLoop(g, sp, _plant(0.5), g.omega0).design_seed()
        )
        rates = f(x)
        assert rates.shape == (7,)
        assert np.max(np.abs(rates[0:5])) < 1e-6


# =============================================================================
# Spectrum and decoupling
# =============================================================================

class TestDecoupling:
    """Block structure of the error coordinates at L = L0."""

    def test_zero_blocks(self, design_model):
        A_z = error_coordinates(design_model)
        tol = 1e-8 * np.max(np.abs(A_z))
        assert np.max(np.abs(A_z[0:2, 2:7])) < tol
        assert np.max(np.abs(A_z[2:4, 4:7])) < tol
        assert np.max(np.abs(A_z[:, 6])) < tol

    def test_diagonal_blocks_carry_placed_poles(self, design_model, omega0):
        A_z = error_coordinates(design_model)
        observer = A_z[0:2, 0:2]
        sync = A_z[2:4, 2:4]
        voltage = A_z[4:6, 4:6]
        assert np.trace(observer) / omega0 == pytest.approx(-5.0)
        assert np.linalg.det(observer) / omega0**2 == pytest.approx(6.25)
        assert np.trace(sync) / omega0 == pytest.approx(-2.7)
        assert np.linalg.det(sync) / omega0**2 == pytest.approx(2.25)
        assert np.trace(voltage) / omega0 == pytest.approx(-2.0)
        assert np.linalg.det(voltage) / omega0**2 == pytest.approx(1.0)

    def test_flux_error_decays_at_observer_poles(self, reference_design, nominal_plant, omega0):
        g, sp = reference_design
        loop = ClosedLoop(g, sp, nominal_plant, omega0)
        x = loop.expand(loop.design_seed())
        err0 = 1e-3 * np.linalg.norm(sp.psi_star) * np.array([1.0, 0.5])
        x[3:5] -= err0
        A_o = error_coordinates(closed_loop_matrix(g, sp, nominal_plant))[0:2, 0:2]
        np.testing.assert_allclose(A_o, -omega0 * J - g.K_o, atol=1e-6 * omega0)

        def flux_error(state: np.ndarray) -> np.ndarray:
            delta = state[2]
            u_g = nominal_plant.U_g * np.array([math.cos(delta), -math.sin(delta)])
            return virtual_flux(state[0:2], u_g, omega0, nominal_plant) - state[3:5]

        assert flux_error(x) == pytest.approx(err0, rel=1e-9)
        h = 2e-6
        for n in range(1, 5001):
            x = rk4_step(lambda t, y: loop.field(y), x, (n - 1) * h, h)
            if n % 500 == 0:
                expected = expm(A_o * n * h) @ err0
                assert np.linalg.norm(flux_error(x) - expected) < 0.02 * np.linalg.norm(err0)
        assert np.linalg.norm(flux_error(x)) < 0.05 * np.linalg.norm(err0)


class TestSpectrum:

    def test_design_spectrum(self, design_model, omega0):
        spectrum = design_model.spectrum()
        assert len(spectrum) == 7
        assert spectrum[0] == 0.0
        assert list(spectrum.structural) == [True] + [False] * 6
        values = spectrum.non_structural / omega0
        expected = np.concatenate((
            [-1.0, -1.0, -2.5, -2.5],
            np.roots([1.0, 2.7, 2.25]),
        ))
        assert np.sum(values) == pytest.approx(np.sum(expected), abs=1e-6)
        assert np.prod(values).real == pytest.approx(np.prod(expected).real, rel=1e-6)
        # Repeated poles are only resolved to about sqrt(eps).
        for target in expected:
            assert np.min(np.abs(values - target)) < 1e-4

    def test_dominant_pole_at_design(self, design_model, omega0):
        pole = dominant_pole(design_model.spectrum()) / omega0
        assert pole.real == pytest.approx(-1.0, abs=1e-4)
        assert abs(pole.imag) < 1e-4
        assert is_stable(design_model.spectrum())

    def test_reduced_matrix_has_zero_column(self, design_model):
        R = design_model.reduced()
        assert np.max(np.abs(R[:, 6])) < 1e-8 * np.max(np.abs(R))

    def test_full_matrix_agrees_with_reduced_spectrum(self, design_model):
        full = eig_small(design_model.A).values
        assert np.sum(full).real == pytest.approx(np.sum(design_model.spectrum().values).real, rel=1e-9)

    def test_dominant_pole_weak_grid(self, reference_design, omega0):
        g, sp = reference_design
        pole = dominant_pole(closed_loop_matrix(g, sp, _plant(1.0)).spectrum()) / omega0
        assert -0.72 < pole.real < -0.48

    def test_dominant_pole_strong_grid(self, reference_design, omega0):
        # Five times the design loop gain couples the synchronization and flux loops;
        # the dominant pair slows to about -0.35 omega0.
        g, sp = reference_design
        pole = dominant_pole(closed_loop_matrix(g, sp, _plant(0.1)).spectrum()) / omega0
        assert -0.40 < pole.real < -0.30


class TestLinearResponse:

    def test_agrees_with_nonlinear_loop(self, design_model):
        loop = design_model.loop()
        x_eq = design_model.equilibrium.x
        dx0 = np.array([1e-3, -1e-3, 1e-3, 1e-6, -1e-6, 0.0, 0.0])
        h, n_steps = 1e-5, 1000
        times = [n_steps * h]

        x = x_eq + dx0
        for n in range(n_steps):
            x = rk4_step(lambda t, y: loop.field(y), x, n * h, h)
        linear = linear_response(design_model, dx0, times)[0]
        assert np.linalg.norm((x - x_eq) - linear) < 0.05 * np.linalg.norm(dx0)

    def test_initial_value(self, design_model):
        dx0 = np.arange(7, dtype=float) * 1e-3
        assert linear_response(design_model, dx0, [0.0])[0] == pytest.approx(dx0)


# =============================================================================
# Pole sweep
# =============================================================================

class TestPoleSweep:

    def test_reference_sweep_is_stable(self, reference_design):
        g, sp = reference_design
        result = pole_sweep(g, sp, _plant(0.5), [0.1, 0.5, 1.0])
        assert result.L_values == [0.1, 0.5, 1.0]
        assert result.all_stable
        assert all(s.spectrum is not None and len(s.spectrum) == 7 for s in result.samples)

    def test_serial_and_threaded_agree(self, reference_design):
        g, sp = reference_design
        L_values = [0.2, 0.4, 0.6]
        serial = pole_sweep(g, sp, _plant(0.5), L_values, max_workers=1)
        threaded = pole_sweep(g, sp, _plant(0.5), L_values, max_workers=3)
        for a, b in zip(serial.samples, threaded.samples):
            assert np.allclose(a.spectrum.values, b.spectrum.values, rtol=1e-12, atol=0.0)

    def test_unstable_voltage_poles(self):
        spec = TuningSpec.reference(sigma_v=(0.5 * TuningSpec.reference().omega0,) * 2)
        g, sp = full_design(spec)
        result = pole_sweep(g, sp, _plant(0.5), [0.5])
        assert result.unstable_L == [0.5]
        assert not result.all_stable

    @pytest.mark.parametrize("L_values", [[], [0.5, 0.5], [0.6, 0.4], [0.0, 0.5]])
    def test_rejects_bad_grid(self, reference_design, L_values):
        g, sp = reference_design
        with pytest.raises(InvalidSpec):
            pole_sweep(g, sp, _plant(0.5), L_values)

    def test_csv(self, reference_design, tmp_path):
        g, sp = reference_design
        result = pole_sweep(g, sp, _plant(0.5), [0.3, 0.6], max_workers=1)
        path = result.write_csv(tmp_path / "poles.csv")
        lines = path.read_text().splitlines()
        assert lines[0].split(",") == result.header()
        assert lines[0].startswith("L_pu,re_1,im_1")
        assert len(lines) == 3
        assert float(lines[1].split(",")[0]) == 0.3

    def test_failed_sample_written_as_nan(self):
        result = PoleSweepResult(samples=(SweepSample(L_pu=0.5, spectrum=None, error="no equilibrium"),))
        row = result.rows()[0]
        assert row[0] == "0.5"
        assert all(v == "nan" for v in row[1:])
        assert result.unstable_L == [0.5]

    def test_worker_cap(self, monkeypatch):
        monkeypatch.setenv("FLUXGFM_THREADS", "2")
        assert 1 <= sweep_workers() <= 2
        monkeypatch.setenv("FLUXGFM_THREADS", "many")
        assert sweep_workers() >= 1

    def test_unstable_sweep_error(self):
        exc = UnstableSweep("1 unstable", unstable_L=[0.5])
        assert exc.exit_code == 4

    def test_grid_frequency_is_forwarded(self, reference_design, omega0):
        g, sp = reference_design
        result = pole_sweep(g, sp, _plant(0.5), [0.5], omega_g=0.99 * omega0, max_workers=1)
        assert result.samples[0].stable
        assert math.isfinite(result.samples[0].spectrum[1].real)
