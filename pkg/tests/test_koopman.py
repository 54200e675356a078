"""Classical flows for the commuting (Q, Pi) subsystem."""

import numpy as np
import pytest

from qmfslab.fock import poly1
from qmfslab.koopman import (
    ClassicalFlow,
    FlowDivergenceError,
    StepSizeError,
    ensemble_moments,
    integrate,
    integrate_with_tangent,
    transport_density,
)


def harmonic_flow(m=1.0, omega=1.0, dt=1e-3):
    return ClassicalFlow(
        f=poly1((0, 1, 1.0 / m)), g=poly1((1, 0, m * omega**2)), dt=dt
    )


class TestClassicalFlow:
    def test_velocity_sign_convention(self):
        # dQ/dt = f, dPi/dt = -g
        flow = harmonic_flow()
        vq, vp = flow.velocity(2.0, 3.0, 0.0)
        assert vq == pytest.approx(3.0)
        assert vp == pytest.approx(-2.0)

    def test_callable_and_poly_agree(self):
        poly_flow = ClassicalFlow(
            f=poly1((0, 1, 1.0), (2, 0, 0.1)), g=poly1((1, 0, 1.0))
        )
        call_flow = ClassicalFlow(
            f=lambda Q, Pi, t: Pi + 0.1 * Q**2, g=lambda Q, Pi, t: Q
        )
        for Q, Pi in [(0.3, -0.2), (1.5, 2.0)]:
            assert np.allclose(
                poly_flow.velocity(Q, Pi, 0.0), call_flow.velocity(Q, Pi, 0.0)
            )

    def test_jacobian_analytic_vs_fd(self):
        poly_flow = ClassicalFlow(
            f=poly1((0, 1, 1.0), (2, 0, 0.1)), g=poly1((1, 0, 1.0))
        )
        call_flow = ClassicalFlow(
            f=lambda Q, Pi, t: Pi + 0.1 * Q**2, g=lambda Q, Pi, t: Q
        )
        J_poly = poly_flow.jacobian(0.7, -0.4, 0.0)
        J_fd = call_flow.jacobian(0.7, -0.4, 0.0)
        assert np.allclose(J_poly, J_fd, atol=1e-7)

    def test_bad_dt_rejected(self):
        with pytest.raises(ValueError):
            ClassicalFlow(f=poly1((0, 1, 1.0)), g=poly1((1, 0, 1.0)), dt=0.0)


class TestIntegrate:
    def test_harmonic_closed_form(self):
        flow = harmonic_flow()
        times, Qs, Ps = integrate(flow, 1.0, 0.0, T=2 * np.pi)
        assert abs(Qs[-1] - 1.0) < 1e-9
        assert abs(Ps[-1]) < 1e-9
        # mid-trajectory check too
        k = len(times) // 4
        assert abs(Qs[k] - np.cos(times[k])) < 1e-9

    def test_energy_conservation(self):
        m, w = 2.0, 1.5
        flow = harmonic_flow(m, w)
        _, Qs, Ps = integrate(flow, 0.8, -0.3, T=5.0)
        E = Ps**2 / (2 * m) + 0.5 * m * w**2 * Qs**2
        assert np.max(np.abs(E - E[0])) < 1e-10

    def test_step_halving_guard(self):
        flow = ClassicalFlow(
            f=poly1((0, 1, 1.0), (2, 0, 0.3)), g=poly1((1, 0, 1.0)), dt=0.25
        )
        with pytest.raises(StepSizeError):
            integrate(flow, 1.5, 0.0, T=5.0, rtol=1e-12)

    def test_divergence_guard(self):
        # dQ/dt = Q^2 blows up in finite time
        flow = ClassicalFlow(f=poly1((2, 0, 1.0)), g=poly1((1, 0, 0.0), (0, 0, 0.0)), dt=1e-3)
        with pytest.raises((FlowDivergenceError, OverflowError)):
            integrate(flow, 5.0, 0.0, T=10.0, check=False)

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            integrate(harmonic_flow(), 1.0, 0.0, T=0.0)


class TestTangent:
    def test_hamiltonian_flow_preserves_area(self):
        # Duffing oscillator: f = Pi, g = Q + 0.3 Q^3 has zero divergence
        flow = ClassicalFlow(
            f=poly1((0, 1, 1.0)), g=poly1((1, 0, 1.0), (3, 0, 0.3))
        )
        y, J = integrate_with_tangent(flow, 0.5, -0.2, T=3.0)
        assert np.linalg.det(J) == pytest.approx(1.0, abs=1e-8)

    def test_harmonic_monodromy(self):
        flow = harmonic_flow()
        _, J = integrate_with_tangent(flow, 0.3, 0.4, T=2 * np.pi)
        assert np.allclose(J, np.eye(2), atol=1e-8)

    def test_dissipative_flow_contracts(self):
        # f = Pi - 0.5 Q gives divergence -0.5: area shrinks as exp(-t/2)
        flow = ClassicalFlow(
            f=lambda Q, Pi, t: Pi - 0.5 * Q, g=lambda Q, Pi, t: Q, dt=1e-3
        )
        _, J = integrate_with_tangent(flow, 1.0, 0.0, T=2.0)
        assert np.linalg.det(J) == pytest.approx(np.exp(-1.0), rel=1e-5)


class TestTransport:
    def test_rotation_of_gaussian_cloud(self):
        # harmonic flow rotates the phase plane rigidly, so transported
        # moments are the rotated initial moments
        rng = np.random.default_rng(3)
        mean0 = np.array([1.0, -0.5])
        cov0 = np.array([[0.5, 0.1], [0.1, 0.3]])
        samples = rng.multivariate_normal(mean0, cov0, size=4000)
        flow = harmonic_flow()
        t = 1.3
        out, mean, cov = transport_density(flow, samples, t)
        c, s = np.cos(t), np.sin(t)
        R = np.array([[c, s], [-s, c]])
        m_in, c_in = ensemble_moments(samples)
        assert np.allclose(mean, R @ m_in, atol=1e-8)
        assert np.allclose(cov, R @ c_in @ R.T, atol=1e-8)

    def test_weighted_moments(self):
        samples = np.array([[0.0, 0.0], [2.0, 0.0]])
        mean, cov = ensemble_moments(samples, weights=np.array([3.0, 1.0]))
        assert mean[0] == pytest.approx(0.5)
        assert cov[0, 0] == pytest.approx(0.75)

    def test_shape_validation(self):
        flow = harmonic_flow()
        with pytest.raises(ValueError):
            transport_density(flow, np.zeros((3, 3)), 1.0)
        with pytest.raises(ValueError):
            transport_density(flow, np.zeros((0, 2)), 1.0)
