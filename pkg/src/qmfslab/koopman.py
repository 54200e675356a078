"""Classical flows for the (Q, Pi) subsystem.

The subsystem obeys dQ/dt = f(Q, Pi, t), dPi/dt = -g(Q, Pi, t) for
whatever f and g were built into the coupled quantum model, so its
trajectories and Liouville densities are plain classical objects.  This
module integrates them: RK4 for trajectories (with a step-halving error
estimate), semi-Lagrangian transport along characteristics for sampled
densities (exact along trajectories, no numerical diffusion).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ClassicalFlow",
    "FlowDivergenceError",
    "StepSizeError",
    "integrate",
    "integrate_with_tangent",
    "transport_density",
    "ensemble_moments",
]

BLOWUP_NORM = 1e12  # arbitrary but documented; nonlinear flows may escape


class FlowDivergenceError(RuntimeError):
    """Trajectory norm exceeded the blowup guard."""


class StepSizeError(RuntimeError):
    """Step-halving error estimate exceeded the requested tolerance."""


def _make_eval(fn):
    """Uniform (Q, Pi, t) -> value for callables and M=1 polynomial terms."""
    if callable(fn):
        return fn

    terms = tuple(fn)

    def evaluate(Q, Pi, t):
        total = 0.0
        for (a, b), coef in terms:
            total = total + coef * Q ** a[0] * Pi ** b[0]
        return total

    return evaluate


def _poly_partial(terms, var: int):
    """d/dQ (var=0) or d/dPi (var=1) of an M=1 polynomial."""
    out = []
    for (a, b), coef in terms:
        exps = [a[0], b[0]]
        if exps[var] == 0:
            continue
        new_coef = coef * exps[var]
        exps[var] -= 1
        out.append((((exps[0],), (exps[1],)), new_coef))
    return tuple(out)


@dataclass(frozen=True)
class ClassicalFlow:
    """Velocity field (f, -g); f and g are callables (Q, Pi, t) -> value
    or M=1 polynomial term tuples (shared representation with the dense
    oracle)."""

    f: object
    g: object
    dt: float = 1e-3

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "_f", _make_eval(self.f))
        object.__setattr__(self, "_g", _make_eval(self.g))

    def velocity(self, Q, Pi, t):
        return self._f(Q, Pi, t), -self._g(Q, Pi, t)

    def jacobian(self, Q: float, Pi: float, t: float) -> np.ndarray:
        """d(velocity)/d(Q, Pi); analytic for polynomials, central FD else."""
        rows = []
        for fn, sign in ((self.f, 1.0), (self.g, -1.0)):
            if callable(fn):
                eps = 1e-6 * max(1.0, abs(Q), abs(Pi))
                dQ = (fn(Q + eps, Pi, t) - fn(Q - eps, Pi, t)) / (2 * eps)
                dP = (fn(Q, Pi + eps, t) - fn(Q, Pi - eps, t)) / (2 * eps)
            else:
                dQ = _make_eval(_poly_partial(fn, 0))(Q, Pi, t)
                dP = _make_eval(_poly_partial(fn, 1))(Q, Pi, t)
            rows.append([sign * dQ, sign * dP])
        return np.array(rows)


def _rk4_sweep(flow: ClassicalFlow, Q, Pi, T: float, dt: float, record: bool):
    n_steps = max(1, int(round(T / dt)))
    h = T / n_steps
    t = 0.0
    if record:
        times = np.empty(n_steps + 1)
        Qs = np.empty((n_steps + 1,) + np.shape(Q))
        Ps = np.empty_like(Qs)
        times[0], Qs[0], Ps[0] = 0.0, Q, Pi
    for k in range(n_steps):
        k1q, k1p = flow.velocity(Q, Pi, t)
        k2q, k2p = flow.velocity(Q + h / 2 * k1q, Pi + h / 2 * k1p, t + h / 2)
        k3q, k3p = flow.velocity(Q + h / 2 * k2q, Pi + h / 2 * k2p, t + h / 2)
        k4q, k4p = flow.velocity(Q + h * k3q, Pi + h * k3p, t + h)
        Q = Q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        Pi = Pi + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        t += h
        if np.max(np.hypot(Q, Pi)) > BLOWUP_NORM:
            raise FlowDivergenceError(
                f"trajectory norm exceeded {BLOWUP_NORM:g} at t = {t:.6g}"
            )
        if record:
            times[k + 1], Qs[k + 1], Ps[k + 1] = t, Q, Pi
    if record:
        return times, Qs, Ps
    return Q, Pi


def integrate(
    flow: ClassicalFlow,
    Q0: float,
    Pi0: float,
    T: float,
    dt: float = None,
    check: bool = True,
    rtol: float = 1e-8,
):
    """RK4 trajectory (times, Q(t), Pi(t)).

    With ``check`` on, the endpoint is re-integrated at half step and
    the relative difference must stay below ``rtol``.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    dt = flow.dt if dt is None else dt
    times, Qs, Ps = _rk4_sweep(flow, float(Q0), float(Pi0), T, dt, record=True)
    if check:
        Qh, Ph = _rk4_sweep(flow, float(Q0), float(Pi0), T, dt / 2, record=False)
        scale = max(1.0, abs(Qh), abs(Ph))
        err = max(abs(Qs[-1] - Qh), abs(Ps[-1] - Ph)) / scale
        if err > rtol:
            raise StepSizeError(
                f"step-halving error {err:.3g} exceeds rtol {rtol:g}; "
                f"reduce dt below {dt:g}"
            )
    return times, Qs, Ps


def integrate_with_tangent(
    flow: ClassicalFlow, Q0: float, Pi0: float, T: float, dt: float = None
):
    """Trajectory plus the tangent map J(T) (variational RK4).

    det J measures phase-space area change: 1 for Hamiltonian flows,
    exp(-integrated divergence) otherwise.
    """
    dt = flow.dt if dt is None else dt
    n_steps = max(1, int(round(T / dt)))
    h = T / n_steps
    y = np.array([float(Q0), float(Pi0)])
    J = np.eye(2)
    t = 0.0

    def rhs(state, tang, tt):
        vq, vp = flow.velocity(state[0], state[1], tt)
        D = flow.jacobian(state[0], state[1], tt)
        return np.array([vq, vp]), D @ tang

    for _ in range(n_steps):
        k1, K1 = rhs(y, J, t)
        k2, K2 = rhs(y + h / 2 * k1, J + h / 2 * K1, t + h / 2)
        k3, K3 = rhs(y + h / 2 * k2, J + h / 2 * K2, t + h / 2)
        k4, K4 = rhs(y + h * k3, J + h * K3, t + h)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        J = J + h / 6 * (K1 + 2 * K2 + 2 * K3 + K4)
        t += h
        if np.hypot(*y) > BLOWUP_NORM:
            raise FlowDivergenceError(
                f"trajectory norm exceeded {BLOWUP_NORM:g} at t = {t:.6g}"
            )
    return y, J


def transport_density(
    flow: ClassicalFlow,
    samples: np.ndarray,
    T: float,
    weights: np.ndarray = None,
    dt: float = None,
):
    """Push weighted phase-space samples along characteristics.

    ``samples`` is (n, 2) with columns (Q, Pi).  Returns the transported
    samples and their weighted (mean, covariance).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError("samples must have shape (n, 2)")
    if samples.shape[0] < 1:
        raise ValueError("need at least one sample")
    dt = flow.dt if dt is None else dt
    Q, Pi = _rk4_sweep(
        flow, samples[:, 0].copy(), samples[:, 1].copy(), T, dt, record=False
    )
    out = np.column_stack([Q, Pi])
    mean, cov = ensemble_moments(out, weights)
    return out, mean, cov


def ensemble_moments(samples: np.ndarray, weights: np.ndarray = None):
    """Weighted mean and covariance of an (n, 2) sample cloud."""
    samples = np.asarray(samples, dtype=float)
    if weights is None:
        weights = np.full(samples.shape[0], 1.0 / samples.shape[0])
    else:
        weights = np.asarray(weights, dtype=float)
        weights = weights / np.sum(weights)
    mean = weights @ samples
    centered = samples - mean
    cov = (centered * weights[:, None]).T @ centered
    return mean, cov
