"""
Tests for the control law: observer, frequency estimator, voltage command
and the sampled-data controller.
"""

import numpy as np
import pytest

from fluxgfm.controller import (
    Controller,
    ControllerState,
    controller_step,
    estimate_frequency,
    evaluate,
    lag_load_angle,
    observer_derivative,
    observer_error,
    voltage_command,
)
from fluxgfm.numerics import J, rot
from fluxgfm.tuning import TuningSpec, full_design, setpoints_for, steady_state_targets


def _design_point(design):
    """Controller state and dq current at the design operating point."""
    g, sp = design
    i_star = (sp.psi_star - sp.psi_g_star) / g.model.L_sec
    cs = ControllerState(psi_hat=sp.psi_star.copy(), gamma=g.gamma_bias(), theta_c=sp.delta_star)
    return cs, i_star


# =============================================================================
# Algebraic signals
# =============================================================================

class TestSignals:

    def test_observer_error_vanishes_at_design_point(self, reference_design):
        g, sp = reference_design
        cs, i_star = _design_point(reference_design)
        assert observer_error(i_star, cs.psi_hat, g.model, sp) == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_frequency_estimate_from_integrator_bias(self, reference_design):
        g, _ = reference_design
        assert estimate_frequency(g.gamma_bias(), np.zeros(2), g) == pytest.approx(g.omega0)

    def test_gamma_bias_is_minimum_norm(self, reference_design):
        g, _ = reference_design
        gamma = g.gamma_bias(300.0)
        assert float(g.k_i @ gamma) == pytest.approx(300.0)
        # Parallel to k_i, so no component along the orthogonal direction.
        cross = gamma[0] * g.k_i[1] - gamma[1] * g.k_i[0]
        assert cross / (np.linalg.norm(gamma) * np.linalg.norm(g.k_i)) == pytest.approx(0.0, abs=1e-12)

    def test_voltage_command_at_reference_magnitude(self, reference_design):
        g, sp = reference_design
        u_c = voltage_command(sp.psi_star, g.omega0, g, sp)
        assert u_c == pytest.approx(sp.u_c_star, abs=1e-12)

    def test_voltage_command_raises_voltage_when_low(self, normalized_design):
        g, sp = normalized_design
        # k_v = [0, -2]: a 10 % low flux estimate pushes the q-axis command by -2 * 0.1.
        u_c = voltage_command(0.9 * sp.psi_star, 1.0, g, sp)
        assert u_c == pytest.approx(sp.u_c_star + np.array([0.0, -0.2]))

    def test_evaluate_at_design_point(self, reference_design):
        g, sp = reference_design
        cs, i_star = _design_point(reference_design)
        out = evaluate(cs, i_star, g, g.model, sp)
        assert out.omega_c == pytest.approx(g.omega0)
        assert out.V_hat == pytest.approx(sp.V_star)
        assert out.u_c == pytest.approx(sp.u_c_star, abs=1e-12)

    def test_flux_error_rate_ignores_injected_voltage(self, reference_design):
        # psi_err' = (-omega_c J psi + u_c) - psi_hat' must not depend on u_c.
        g, sp = reference_design
        rng = np.random.default_rng(11)
        scale = np.linalg.norm(sp.psi_star)
        for _ in range(10):
            cs = ControllerState(
                psi_hat=scale * rng.normal(size=2), gamma=g.gamma_bias(rng.uniform(250.0, 380.0))
            )
            psi = scale * rng.normal(size=2)
            i_dq = rng.normal(size=2)
            omega_c = rng.uniform(250.0, 380.0)
            rates = []
            for u_c in (rng.normal(size=2), rng.normal(size=2)):
                dpsi = -omega_c * (J @ psi) + u_c
                rates.append(dpsi - observer_derivative(cs, i_dq, u_c, omega_c, g, g.model, sp).psi_hat)
            np.testing.assert_allclose(rates[0], rates[1], rtol=0.0, atol=1e-9)

    def test_observer_rates_vanish_at_design_point(self, reference_design):
        g, sp = reference_design
        cs, i_star = _design_point(reference_design)
        rates = observer_derivative(cs, i_star, sp.u_c_star, g.omega0, g, g.model, sp)
        assert rates.psi_hat == pytest.approx([0.0, 0.0], abs=1e-9)
        assert rates.gamma == pytest.approx([0.0, 0.0], abs=1e-12)
        assert rates.theta_c == pytest.approx(g.omega0)


# =============================================================================
# Sampled-data update
# =============================================================================

class TestControllerStep:

    def test_equilibrium_is_preserved(self, reference_design):
        g, sp = reference_design
        cs, i_star = _design_point(reference_design)
        dt = 1e-4
        i_s = rot(cs.theta_c) @ i_star
        state, u_c_s = controller_step(cs, i_s, dt, g, g.model, sp)
        assert state.psi_hat == pytest.approx(sp.psi_star, abs=1e-12)
        assert state.gamma == pytest.approx(cs.gamma, abs=1e-12)
        assert state.theta_c == pytest.approx(cs.theta_c + g.omega0 * dt)
        assert u_c_s == pytest.approx(rot(cs.theta_c) @ sp.u_c_star)

    def test_hold_compensation_rotates_half_a_sample(self, reference_design):
        g, sp = reference_design
        cs, i_star = _design_point(reference_design)
        dt = 1e-4
        i_s = rot(cs.theta_c) @ i_star
        _, u_plain = controller_step(cs, i_s, dt, g, g.model, sp)
        _, u_comp = controller_step(cs, i_s, dt, g, g.model, sp, zoh_compensation=True)
        assert u_comp == pytest.approx(rot(0.5 * g.omega0 * dt) @ u_plain)

    def test_rejects_non_positive_step(self, reference_design):
        g, sp = reference_design
        cs, i_star = _design_point(reference_design)
        with pytest.raises(ValueError):
            controller_step(cs, i_star, 0.0, g, g.model, sp)


class TestController:
    """Stateful controller wrapper."""

    def test_cold_start(self, reference_design):
        g, sp = reference_design
        ctrl = Controller(g, sp)
        assert ctrl.state.psi_hat == pytest.approx(sp.psi_g_star)
        assert float(g.k_i @ ctrl.state.gamma) == pytest.approx(g.omega0)
        assert ctrl.state.theta_c == 0.0
        assert ctrl.last_output is None

    def test_step_records_output(self, reference_design):
        g, sp = reference_design
        ctrl = Controller(g, sp, zoh_compensation=False)
        u = ctrl.step(np.zeros(2), 1e-4)
        assert ctrl.last_output is not None
        assert u.shape == (2,)
        assert ctrl.state.theta_c == pytest.approx(1e-4 * ctrl.last_output.omega_c)

    def test_reset_to_explicit_state(self, reference_design):
        g, sp = reference_design
        ctrl = Controller(g, sp)
        ctrl.step(np.array([0.1, 0.2]), 1e-4)
        ctrl.reset(psi_hat=sp.psi_star, theta_c=0.5)
        assert ctrl.state.psi_hat == pytest.approx(sp.psi_star)
        assert ctrl.state.theta_c == 0.5
        assert ctrl.last_output is None

    def test_output_does_not_advance(self, reference_design):
        g, sp = reference_design
        ctrl = Controller(g, sp)
        before = ctrl.state
        out = ctrl.output(np.zeros(2))
        assert ctrl.state is before
        assert out.omega_c == pytest.approx(estimate_frequency(before.gamma, out.e, g))

    def test_update_setpoints_starts_the_lag(self, reference_design, reference_spec):
        g, sp = reference_design
        ctrl = Controller(g, sp)
        new = setpoints_for(reference_spec, 0.5)
        ctrl.update_setpoints(new)
        assert ctrl.target is new
        assert ctrl.gains is g
        # Power and voltage references switch at once; the load angle has not moved yet.
        assert ctrl.setpoints.p_star == 0.5
        assert ctrl.setpoints.delta_star == sp.delta_star
        assert ctrl.setpoints.psi_g_star == pytest.approx(sp.psi_g_star, abs=1e-15)

    def test_update_setpoints_without_lag(self, reference_spec):
        g, sp = full_design(TuningSpec.reference(shape_load_angle=False))
        ctrl = Controller(g, sp)
        new = setpoints_for(reference_spec, 0.5)
        ctrl.update_setpoints(new)
        assert ctrl.setpoints is new

    def test_load_angle_follows_the_lag(self, reference_design, reference_spec):
        g, sp = reference_design
        ctrl = Controller(g, sp)
        new = setpoints_for(reference_spec, 0.5)
        ctrl.update_setpoints(new)
        dt = 1e-4
        for _ in range(20):
            ctrl.step(np.zeros(2), dt)
        expected = new.delta_star + (sp.delta_star - new.delta_star) * np.exp(-20 * dt / g.tau_delta)
        assert ctrl.delta_ref == pytest.approx(expected, rel=1e-12)
        assert ctrl.setpoints.delta_star == ctrl.delta_ref

    def test_reset_settles_the_lag(self, reference_design, reference_spec):
        g, sp = reference_design
        ctrl = Controller(g, sp)
        new = setpoints_for(reference_spec, 0.5)
        ctrl.update_setpoints(new)
        ctrl.step(np.zeros(2), 1e-4)
        ctrl.reset()
        assert ctrl.setpoints is new
        assert ctrl.delta_ref == new.delta_star


class TestLoadAngleReference:

    def test_lag_is_exact_for_a_step(self):
        assert lag_load_angle(0.0, 1.0, 0.5, 0.5) == pytest.approx(1.0 - np.exp(-1.0))
        assert lag_load_angle(0.2, 0.2, 1.0, 0.1) == 0.2

    def test_lag_disabled(self):
        assert lag_load_angle(0.0, 0.7, 1e-4, 0.0) == 0.7

    def test_rotated_setpoints_match_targets(self, reference_design, reference_spec):
        _, sp = reference_design
        rotated = sp.at_load_angle(0.2)
        direct = steady_state_targets(reference_spec, 0.2)
        assert rotated.delta_star == 0.2
        assert rotated.u_g_star == pytest.approx(direct.u_g_star, abs=1e-12)
        assert rotated.psi_g_star == pytest.approx(direct.psi_g_star, abs=1e-15)
        assert rotated.psi_star is sp.psi_star
        assert rotated.u_c_star is sp.u_c_star
        assert rotated.p_star == sp.p_star

    def test_same_angle_returns_same_setpoints(self, reference_design):
        _, sp = reference_design
        assert sp.at_load_angle(sp.delta_star) is sp
