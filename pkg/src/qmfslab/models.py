"""Constructors for the concrete back-action-evading model zoo.

Every builder returns a :class:`ModelBundle`: the linear model in the
physical basis, named canonical (symplectic) changes of basis, and the
observable sets that are known to form quantum-mechanics-free
subsystems.  The central instance is the positive/negative-mass
oscillator pair, where the collective variables

    Q = q + q',   P = (p + p')/2,   Phi = (q - q')/2,   Pi = p - p'

split the dynamics into two commuting oscillator subsystems {Q, Pi} and
{Phi, P}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phase_space import LinearModel, ObservableSet, is_qmfs, symplectic_form

__all__ = [
    "ModelBundle",
    "single_oscillator",
    "oscillator_pair",
    "sideband_model",
    "spin_pair_hp",
    "rebased_model",
    "BUILDERS",
]


@dataclass(frozen=True)
class ModelBundle:
    """A model plus its named canonical bases and known-QMFS candidates."""

    model: LinearModel
    named_bases: dict
    qmfs_sets: tuple
    description: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        Omega = self.model.Omega
        for name, T in self.named_bases.items():
            T = np.asarray(T, dtype=float)
            defect = np.max(np.abs(T @ Omega @ T.T - Omega))
            if defect > 1e-13:
                raise ValueError(
                    f"basis {name!r} is not symplectic (defect {defect:.3g})"
                )
        for obs in self.qmfs_sets:
            verdict = is_qmfs(self.model, obs)
            if not verdict:
                raise ValueError(
                    f"declared QMFS set {obs.labels} fails the commutation "
                    f"test (residual {verdict.max_residual:.3g})"
                )

    def basis(self, name: str) -> np.ndarray:
        return self.named_bases[name]


def rebased_model(model: LinearModel, T: np.ndarray) -> LinearModel:
    """Model in new canonical coordinates x' = T x (T symplectic).

    The Hamiltonian is invariant, so G' = T^{-T} G T^{-1}.
    """
    T = np.asarray(T, dtype=float)
    Omega = model.Omega
    if np.max(np.abs(T @ Omega @ T.T - Omega)) > 1e-12:
        raise ValueError("T is not symplectic")
    Tinv = np.linalg.inv(T)
    Gp = Tinv.T @ model.G @ Tinv
    Gp = (Gp + Gp.T) / 2
    couplings = tuple(T @ b for b in model.force_couplings)
    return LinearModel(model.n_modes, model.hbar, Gp, couplings)


def _check_oscillator_params(m: float, omega: float):
    if m == 0:
        raise ValueError("mass must be nonzero")
    if omega <= 0:
        raise ValueError("frequency must be positive")


def single_oscillator(m: float, omega: float, hbar: float = 1.0) -> ModelBundle:
    """Harmonic oscillator H = p^2/2m + m w^2 q^2 / 2.

    Negative m inverts the entire Hamiltonian: same oscillation frequency,
    opposite phase-space circulation, energy ladder running down.
    """
    _check_oscillator_params(m, omega)
    G = np.diag([m * omega**2, 1.0 / m])
    model = LinearModel(1, hbar, G, force_couplings=(np.array([0.0, 1.0]),))
    sign = "negative" if m < 0 else "positive"
    return ModelBundle(
        model=model,
        named_bases={"physical": np.eye(2)},
        qmfs_sets=(),
        description=f"{sign}-mass oscillator, m={m}, omega={omega}",
        metadata={"m": m, "omega": omega},
    )


# x_qmfs = PAIR_TRANSFORM @ x_phys with x_phys = (q, p, q', p') and
# x_qmfs = (Q, P, Phi, Pi).
PAIR_TRANSFORM = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],  # Q = q + q'
        [0.0, 0.5, 0.0, 0.5],  # P = (p + p')/2
        [0.5, 0.0, -0.5, 0.0],  # Phi = (q - q')/2
        [0.0, 1.0, 0.0, -1.0],  # Pi = p - p'
    ]
)

ROW_Q = PAIR_TRANSFORM[0]
ROW_P = PAIR_TRANSFORM[1]
ROW_PHI = PAIR_TRANSFORM[2]
ROW_PI = PAIR_TRANSFORM[3]


def oscillator_pair(m: float, omega: float, hbar: float = 1.0) -> ModelBundle:
    """Positive-mass plus negative-mass oscillator pair.

    Physical basis (q, p, q', p'), H = p^2/2m + m w^2 q^2/2
    - p'^2/2m - m w^2 q'^2/2.  The "qmfs" basis (Q, P, Phi, Pi) turns H
    into P Pi / m + m w^2 Phi Q, so {Q, Pi} and {Phi, P} are each a
    closed harmonic-oscillator subsystem.  The force port drives p of
    the positive-mass oscillator.
    """
    if m <= 0:
        raise ValueError("pair mass must be positive (the primed partner "
                         "carries the negative mass)")
    _check_oscillator_params(m, omega)
    G = np.diag([m * omega**2, 1.0 / m, -m * omega**2, -1.0 / m])
    force_b = np.array([0.0, 1.0, 0.0, 0.0])
    model = LinearModel(2, hbar, G, force_couplings=(force_b,))
    qmfs_sets = (
        ObservableSet(np.array([ROW_Q, ROW_PI]), ("Q", "Pi")),
        ObservableSet(np.array([ROW_PHI, ROW_P]), ("Phi", "P")),
    )
    return ModelBundle(
        model=model,
        named_bases={"physical": np.eye(4), "qmfs": PAIR_TRANSFORM},
        qmfs_sets=qmfs_sets,
        description=f"positive/negative-mass oscillator pair, m={m}, omega={omega}",
        metadata={"m": m, "omega": omega},
    )


def sideband_model(omega_mod: float, hbar: float = 1.0) -> ModelBundle:
    """Two-sideband (modulation-picture) realization of the pair.

    Blue and red sidebands of a carrier behave as positive- and
    negative-mass oscillators at the modulation frequency (m = 1).  The
    quadrature amplitudes

        alpha1 = (1/2) sqrt(w/hbar) (Q + i Pi / w)
        alpha2 = sqrt(w/hbar) (-i Phi + P / w)

    are exposed as real (Re, Im) observable rows; each pair spans one of
    the two QMFS subsystems.  The carrier frequency is metadata only:
    the field decomposes as E = E1 cos(Omega t) + E2 sin(Omega t) with
    E_i built from alpha_i, but the carrier oscillation is not part of
    the modulation-picture dynamics.
    """
    if omega_mod <= 0:
        raise ValueError("modulation frequency must be positive")
    base = oscillator_pair(1.0, omega_mod, hbar)
    w = omega_mod
    c1 = 0.5 * np.sqrt(w / hbar)
    c2 = np.sqrt(w / hbar)
    alpha1_row = c1 * (ROW_Q + 1j * ROW_PI / w)
    alpha2_row = c2 * (ROW_P / w - 1j * ROW_PHI)
    quad_sets = (
        ObservableSet(
            np.array([c1 * ROW_Q, c1 * ROW_PI / w]),
            ("alpha1_re", "alpha1_im"),
        ),
        ObservableSet(
            np.array([c2 * ROW_P / w, -c2 * ROW_PHI]),
            ("alpha2_re", "alpha2_im"),
        ),
    )
    return ModelBundle(
        model=base.model,
        named_bases=dict(base.named_bases),
        qmfs_sets=base.qmfs_sets + quad_sets,
        description=(
            f"two-sideband modulation picture, modulation frequency {omega_mod}"
        ),
        metadata={
            "m": 1.0,
            "omega": omega_mod,
            "alpha_rows": {"alpha1": alpha1_row, "alpha2": alpha2_row},
            "field_decomposition": "E = E1 cos(carrier t) + E2 sin(carrier t)",
        },
    )


def spin_pair_hp(J0: float, gamma_B0: float, hbar: float = 1.0) -> ModelBundle:
    """Gaussian (large-spin) model of two oppositely polarized ensembles.

    Holstein-Primakoff mapping about the stretched states:
    q = Jx/sqrt(J0), p = Jy/sqrt(J0), q' = J'x/sqrt(J0),
    p' = -J'y/sqrt(J0), giving H ~ (gamma B0 / 2)(q^2 + p^2 - q'^2 - p'^2).
    This is the oscillator pair at frequency gamma*B0 with effective
    mass 1/(gamma*B0).
    """
    if J0 <= 0:
        raise ValueError("J0 must be positive")
    if gamma_B0 <= 0:
        raise ValueError("Larmor frequency must be positive")
    w = gamma_B0
    G = w * np.diag([1.0, 1.0, -1.0, -1.0])
    force_b = np.array([0.0, 1.0, 0.0, 0.0])
    model = LinearModel(2, hbar, G, force_couplings=(force_b,))
    qmfs_sets = (
        ObservableSet(np.array([ROW_Q, ROW_PI]), ("Q", "Pi")),
        ObservableSet(np.array([ROW_PHI, ROW_P]), ("Phi", "P")),
    )
    return ModelBundle(
        model=model,
        named_bases={"physical": np.eye(4), "qmfs": PAIR_TRANSFORM},
        qmfs_sets=qmfs_sets,
        description=(
            f"Holstein-Primakoff spin pair, J0={J0}, Larmor frequency {gamma_B0}"
        ),
        metadata={
            "J0": J0,
            "gamma_B0": gamma_B0,
            "effective_mass": 1.0 / w,
            "mapping": "q=Jx/sqrt(J0), p=Jy/sqrt(J0), "
                       "q'=J'x/sqrt(J0), p'=-J'y/sqrt(J0)",
        },
    )


BUILDERS = {
    "single": single_oscillator,
    "pair": oscillator_pair,
    "sideband": sideband_model,
    "spin-hp": spin_pair_hp,
}
