"""Symplectic linear-system core.

Phase-space ordering is x = (q1, p1, q2, p2, ...).  Canonical commutators
are encoded by the symplectic form Omega, [x_i, x_j] = i*hbar*Omega_ij,
with Omega block-diagonal [[0, 1], [-1, 0]] per mode.  A quadratic
Hamiltonian H = x^T G x / 2 generates the drift A = Omega @ G, the
Heisenberg flow x(t) = Phi(t) x(0) with Phi(t) = expm(A t).

For linear observables O_j = s_j . x the two-time commutator is the
c-number matrix

    K(t, t') = i*hbar * S Phi(t) Omega Phi(t')^T S^T,

and a set of observables is a dynamically closed, back-action-free
("quantum-mechanics-free") subsystem exactly when K vanishes for all
times.  By Cayley-Hamilton this reduces to the finite algebraic test
S A^i Omega (A^T)^j S^T = 0 for 0 <= i, j <= 2n-1, which is what
``is_qmfs`` checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

__all__ = [
    "LinearModel",
    "ObservableSet",
    "QmfsVerdict",
    "symplectic_form",
    "build_drift",
    "transfer_matrix",
    "two_time_commutator",
    "is_qmfs",
    "model_to_json",
    "model_from_json",
]

# expm(A t) is trusted (rel err <= 1e-12) only up to this norm; larger
# arguments are rejected rather than silently degraded.
MAX_EXPM_NORM = 50.0


def symplectic_form(n_modes: int) -> np.ndarray:
    """Block-diagonal symplectic form for ordering (q1, p1, q2, p2, ...)."""
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    block = np.array([[0.0, 1.0], [-1.0, 0.0]])
    Omega = np.zeros((2 * n_modes, 2 * n_modes))
    for k in range(n_modes):
        Omega[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = block
    return Omega


def build_drift(G: np.ndarray, Omega: np.ndarray) -> np.ndarray:
    """Drift matrix A = Omega @ G of the quadratic Hamiltonian x^T G x / 2."""
    G = np.asarray(G, dtype=float)
    Omega = np.asarray(Omega, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"G must be square, got shape {G.shape}")
    if Omega.shape != G.shape:
        raise ValueError(f"shape mismatch: G {G.shape} vs Omega {Omega.shape}")
    if not np.array_equal(G, G.T):
        # G is constructed, never measured, so exact symmetry is demanded.
        raise ValueError("G must be exactly symmetric")
    return Omega @ G


@dataclass(frozen=True)
class LinearModel:
    """Linear phase-space model with quadratic Hamiltonian and force ports."""

    n_modes: int
    hbar: float = 1.0
    G: np.ndarray = None
    force_couplings: tuple = ()

    Omega: np.ndarray = field(init=False, repr=False)
    A: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        d = 2 * self.n_modes
        G = np.zeros((d, d)) if self.G is None else np.asarray(self.G, dtype=float)
        if G.shape != (d, d):
            raise ValueError(f"G must be {d}x{d}, got {G.shape}")
        Omega = symplectic_form(self.n_modes)
        A = build_drift(G, Omega)
        couplings = tuple(np.asarray(b, dtype=float) for b in self.force_couplings)
        for b in couplings:
            if b.shape != (d,):
                raise ValueError(f"force coupling must have length {d}")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "Omega", Omega)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "force_couplings", couplings)
        for arr in (self.G, self.Omega, self.A) + couplings:
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return 2 * self.n_modes


@dataclass(frozen=True)
class ObservableSet:
    """Rows of S define linear observables s . x, one label per row."""

    S: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        if S.shape[0] < 1:
            raise ValueError("at least one observable row required")
        norms = np.linalg.norm(S, axis=1)
        if np.any(norms == 0):
            raise ValueError("observable rows must be nonzero")
        labels = tuple(self.labels) if self.labels else tuple(
            f"O{i}" for i in range(S.shape[0])
        )
        if len(labels) != S.shape[0]:
            raise ValueError("one label per row required")
        S.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "labels", labels)

    def subset(self, rows) -> "ObservableSet":
        rows = list(rows)
        return ObservableSet(self.S[rows], tuple(self.labels[i] for i in rows))

    @property
    def n_obs(self) -> int:
        return self.S.shape[0]


def transfer_matrix(model: LinearModel, t: float) -> np.ndarray:
    """Propagator Phi(t) = expm(A t); exact identity at t = 0."""
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    if t == 0.0:
        return np.eye(model.dim)
    norm_At = np.linalg.norm(model.A * t, 2)
    if norm_At > MAX_EXPM_NORM:
        raise ValueError(
            f"||A t|| = {norm_At:.3g} exceeds the trusted expm bound "
            f"{MAX_EXPM_NORM}"
        )
    return expm(model.A * t)


def two_time_commutator(
    model: LinearModel, obs: ObservableSet, t: float, t_prime: float
) -> np.ndarray:
    """Exact c-number commutator matrix K_jk = [O_j(t), O_k(t')]."""
    S = obs.S
    Phi_t = transfer_matrix(model, t)
    Phi_tp = transfer_matrix(model, t_prime)
    return 1j * model.hbar * (S @ Phi_t @ model.Omega @ Phi_tp.T @ S.T)


@dataclass(frozen=True)
class QmfsVerdict:
    """Outcome of the algebraic commutation test, with failure witness."""

    is_qmfs: bool
    max_residual: float
    witness: tuple = None  # (i, j, row, col) of the largest scaled residual

    def __bool__(self) -> bool:
        return self.is_qmfs


def is_qmfs(model: LinearModel, obs: ObservableSet, tol: float = 1e-12) -> QmfsVerdict:
    """Exact algebraic QMFS test.

    The observables commute at all pairs of times iff
    S A^i Omega (A^T)^j S^T = 0 for all 0 <= i, j <= 2n-1: expanding
    Phi(t) = expm(A t) in powers of A, Cayley-Hamilton closes the series
    on the first 2n powers.  Residuals are scaled by
    ||S||^2 ||A||^(i+j) so the tolerance is dimensionless.
    """
    S = obs.S
    A = model.A
    d = model.dim
    norm_S = np.linalg.norm(S, 2)
    norm_A = np.linalg.norm(A, 2)

    # left[i] = S A^i, built once; the (i, j) residual is
    # left[i] Omega left[j]^T.
    left = [S]
    for _ in range(d - 1):
        left.append(left[-1] @ A)

    worst = 0.0
    witness = None
    for i in range(d):
        for j in range(d):
            R = left[i] @ model.Omega @ left[j].T
            scale = norm_S**2 * max(norm_A, 1.0) ** (i + j)
            scaled = np.abs(R) / scale
            k = np.unravel_index(np.argmax(scaled), scaled.shape)
            if scaled[k] > worst:
                worst = float(scaled[k])
                witness = (i, j, int(k[0]), int(k[1]))
    if worst < tol:
        return QmfsVerdict(True, worst, None)
    return QmfsVerdict(False, worst, witness)


def model_to_json(model: LinearModel, observables: ObservableSet = None) -> str:
    """Serialize a model (and optional observable set) as a JSON document."""
    doc = {
        "n_modes": model.n_modes,
        "hbar": model.hbar,
        "G": model.G.tolist(),
        "force_couplings": [b.tolist() for b in model.force_couplings],
    }
    if observables is not None:
        doc["observables"] = [
            {"label": lab, "s": row.tolist()}
            for lab, row in zip(observables.labels, observables.S)
        ]
    return json.dumps(doc, indent=2)


def model_from_json(text: str):
    """Inverse of :func:`model_to_json`.

    Returns (model, observables); observables is None when absent.
    """
    doc = json.loads(text)
    model = LinearModel(
        n_modes=int(doc["n_modes"]),
        hbar=float(doc.get("hbar", 1.0)),
        G=np.asarray(doc["G"], dtype=float),
        force_couplings=tuple(doc.get("force_couplings", [])),
    )
    obs = None
    if "observables" in doc and doc["observables"]:
        rows = [entry["s"] for entry in doc["observables"]]
        labels = tuple(entry["label"] for entry in doc["observables"])
        obs = ObservableSet(np.asarray(rows, dtype=float), labels)
    return model, obs
