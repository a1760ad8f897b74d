"""
Tests for operating-point computation and gain design.
"""

import math

import numpy as np
import pytest

from fluxgfm.errors import InfeasibleSetpoint, InvalidSpec, NonConjugatePair, SingularFlux
from fluxgfm.numerics import J
from fluxgfm.plant import PlantParams
from fluxgfm.smallsignal import sync_tf_coeffs
from fluxgfm.tuning import (
    TuningSpec,
    design_k_p,
    full_design,
    identity_residuals,
    load_angle_lag,
    load_angle_linear,
    load_angle_setpoint,
    setpoints_for,
    steady_state_targets,
)


# =============================================================================
# Operating point
# =============================================================================

class TestOperatingPoint:

    def test_reference_load_angle(self, reference_spec):
        assert load_angle_setpoint(reference_spec) == pytest.approx(math.asin(0.5))

    def test_linear_load_angle(self, reference_spec):
        assert load_angle_linear(reference_spec) == pytest.approx(0.5)
        assert load_angle_linear(reference_spec, 0.2) == pytest.approx(0.1)

    def test_infeasible_setpoint(self):
        spec = TuningSpec.reference(p_star=3.0)
        with pytest.raises(InfeasibleSetpoint) as exc_info:
            load_angle_setpoint(spec)
        assert exc_info.value.exit_code == 2
        assert "2 pu" in exc_info.value.notes[0]

    def test_feasibility_is_monotonic(self):
        limit = 1.0 / 0.5
        for p in np.linspace(-limit, limit, 9):
            load_angle_setpoint(TuningSpec.reference(p_star=float(p)))
        for p in (limit * 1.001, -limit * 1.001, 10.0):
            with pytest.raises(InfeasibleSetpoint):
                load_angle_setpoint(TuningSpec.reference(p_star=p))

    def test_setpoint_constellation(self, reference_design, omega0):
        _, sp = reference_design
        assert sp.u_c_star == pytest.approx([1.0, 0.0])
        assert sp.u_g_star == pytest.approx([math.cos(sp.delta_star), -math.sin(sp.delta_star)])
        # omega0 J psi = u for both fluxes.
        assert omega0 * (J @ sp.psi_g_star) == pytest.approx(sp.u_g_star)
        assert omega0 * (J @ sp.psi_star) == pytest.approx(sp.u_c_star)
        assert np.linalg.norm(sp.psi_star) == pytest.approx(1.0 / omega0)

    def test_setpoints_for_new_power(self, reference_spec):
        sp = setpoints_for(reference_spec, 0.5)
        assert sp.p_star == 0.5
        assert sp.delta_star == pytest.approx(math.asin(0.25))

    def test_targets_at_other_frequency(self, reference_spec):
        sp = steady_state_targets(reference_spec, 0.2, omega_ref=300.0)
        assert sp.omega_ref == 300.0
        assert 300.0 * (J @ sp.psi_star) == pytest.approx(sp.u_c_star)


# =============================================================================
# Gains
# =============================================================================

class TestReferenceGains:
    """Hand-derived gains at zero load with omega0 = 1."""

    def test_observer_gain(self, normalized_design):
        g, _ = normalized_design
        assert g.k_o == pytest.approx([5.25, -5.0])
        np.testing.assert_allclose(g.K_o, [[0.0, -5.25], [0.0, 5.0]], atol=1e-12)

    def test_sync_gains(self, normalized_design):
        g, _ = normalized_design
        assert g.k_p == pytest.approx([-2.7, -2.25])
        assert g.k_i == pytest.approx([-2.25, 5.625])

    def test_voltage_gain(self, normalized_design, reference_design):
        assert normalized_design.gains.k_v == pytest.approx([0.0, -2.0])
        # k_v is dimensionless and independent of the frequency scale.
        assert reference_design.gains.k_v == pytest.approx([0.0, -2.0])

    def test_observer_poles(self, reference_design, omega0):
        g, _ = reference_design
        A_o = -omega0 * J - g.K_o
        assert np.trace(A_o) == pytest.approx(-5.0 * omega0)
        assert np.linalg.det(A_o) == pytest.approx(6.25 * omega0**2)

    def test_sync_polynomial(self, reference_design, omega0):
        g, sp = reference_design
        coeffs = sync_tf_coeffs(g.k_p, sp, omega0)
        assert coeffs.a1 == pytest.approx(-2.7 * omega0)
        assert coeffs.a2 == pytest.approx(-2.25 * omega0**2)

    def test_damping_ratio(self, omega0):
        spec = TuningSpec.reference(zeta=0.7)
        g, sp = full_design(spec)
        roots = sync_tf_coeffs(g.k_p, sp, omega0).characteristic_roots()
        assert abs(roots[0]) == pytest.approx(1.5 * omega0)
        assert -roots[0].real / abs(roots[0]) == pytest.approx(0.7)

    def test_model_inductance(self, reference_design, nominal_plant):
        assert reference_design.gains.model.L_pu == 0.5
        design = full_design(TuningSpec.reference(L0_pu=0.3), nominal_plant)
        assert design.gains.model.L_pu == 0.3
        assert design.gains.model.omega_base == nominal_plant.omega_base

    def test_load_angle_lag(self, reference_design, omega0):
        # 2 zeta / omega_s = 1.8 / (1.5 omega0)
        assert reference_design.gains.tau_delta == pytest.approx(1.2 / omega0)
        assert load_angle_lag(TuningSpec.reference(zeta=0.5, omega_s=2.0)) == pytest.approx(0.5)
        assert full_design(TuningSpec.reference(shape_load_angle=False)).gains.tau_delta == 0.0

    def test_design_unpacks(self, reference_design):
        gains, setpoints = reference_design
        assert gains is reference_design.gains
        assert setpoints is reference_design.setpoints


class TestIdentityResiduals:

    def test_reference_residuals(self, reference_design):
        assert set(reference_design.residuals) == {
            "observer pole trace",
            "observer pole product",
            "voltage pole trace",
            "voltage pole product",
            "sync damping (a1)",
            "sync bandwidth (a2)",
            "k_i cancellation",
            "decoupling term",
            "setpoint power",
        }
        assert max(abs(r) for r in reference_design.residuals.values()) < 1e-9

    def test_random_specs(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            w0 = rng.uniform(0.5, 400.0)
            re, im = -rng.uniform(1.0, 4.0), rng.uniform(0.0, 2.0)
            spec = TuningSpec(
                sigma_o=(complex(re, im) * w0, complex(re, -im) * w0),
                sigma_v=(-rng.uniform(0.3, 2.0) * w0, -rng.uniform(0.3, 2.0) * w0),
                zeta=rng.uniform(0.3, 1.5),
                omega_s=rng.uniform(0.5, 3.0) * w0,
                L0_pu=rng.uniform(0.1, 1.0),
                p_star=rng.uniform(-0.9, 0.9),
                omega0=w0,
            )
            design = full_design(spec)
            residuals = identity_residuals(design.gains, design.setpoints, spec)
            assert max(abs(r) for r in residuals.values()) < 1e-9

            A_o = -w0 * J - design.gains.K_o
            got = np.sort_complex(np.linalg.eigvals(A_o))
            want = np.sort_complex(np.array(spec.sigma_o))
            # Coincident poles are only resolved to sqrt(eps).
            assert np.allclose(got, want, atol=1e-6 * abs(want[0]))

            A_v = -w0 * J - np.outer(design.gains.k_v, [0.0, -w0])
            got = np.sort_complex(np.linalg.eigvals(A_v))
            want = np.sort_complex(np.array(spec.sigma_v))
            assert np.allclose(got, want, atol=1e-6 * max(abs(want[0]), abs(want[1])))


class TestSpecValidation:

    @pytest.mark.parametrize("field", ["zeta", "omega_s", "L0_pu", "V_star", "U_g", "omega0"])
    def test_positive_fields(self, field):
        with pytest.raises(InvalidSpec):
            TuningSpec.reference(**{field: 0.0})

    def test_non_conjugate_poles(self):
        with pytest.raises(NonConjugatePair):
            TuningSpec.reference(sigma_o=(-1 + 1j, -2.0))

    def test_right_half_plane_poles_warn(self, caplog):
        spec = TuningSpec.reference(sigma_v=(10.0, 10.0))
        assert spec.sigma_v == (10 + 0j, 10 + 0j)
        assert "left half-plane" in caplog.text

    def test_singular_flux(self, reference_spec):
        sp = steady_state_targets(reference_spec, 0.0)
        zero = type(sp)(**{**sp.__dict__, "psi_g_star": np.zeros(2)})
        with pytest.raises(SingularFlux):
            design_k_p(reference_spec, zero)

    def test_custom_plant_bases(self):
        plant = PlantParams.from_ratings(L_pu=0.5, U_line_v=400.0, I_rated_a=20.0)
        design = full_design(TuningSpec.reference(), plant)
        assert design.gains.model.U_base == plant.U_base
