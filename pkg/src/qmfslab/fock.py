"""Dense truncated-Fock brute-force oracle.

Everything here is deliberately unsophisticated: dense matrices, exact
eigendecomposition, explicit commutators.  The point is to provide an
independent ground truth for the linear phase-space engine and the
classical-flow correspondence, with truncation as the only error
source.

The Koopman-style Hamiltonian

    H = (1/2) sum_j (P_j f_j + f_j P_j + Phi_j g_j + g_j Phi_j) + h

with f, g, h polynomials in the mutually commuting set (Q, Pi) drives
dQ_j/dt = f_j(Q, Pi), dPi_j/dt = -g_j(Q, Pi): the (Q, Pi) observables
evolve under any chosen classical dynamics while commuting with each
other at all times.  Mode layout: mode j carries (Q_j, P_j), mode M+j
carries (Phi_j, Pi_j); Q and Pi live on different modes, which is what
makes them commute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TruncationSpec",
    "PolyKoopman",
    "build_quadrature_ops",
    "koopman_operators",
    "build_koopman_hamiltonian",
    "oscillator_hamiltonian",
    "heisenberg_op",
    "HeisenbergPropagator",
    "commutator_residual",
    "guard_projector",
    "top_level_population",
    "poly_op",
    "poly_eval",
    "poly1",
]

DIM_CAP = 4096
MAX_DEGREE = 4


@dataclass(frozen=True)
class TruncationSpec:
    """Per-mode truncation N with a trusted low-excitation core.

    Guarded quantities are evaluated on the subspace with fewer than
    ``core_levels`` quanta per mode (default N // 2).  A thin band at
    the top of the ladder is not enough: for the coupled Hamiltonians
    built here the truncation defect sits inside a (near-)degenerate
    spectrum and contaminates a depth that grows with N, so the trusted
    region has to be pinned at the bottom of the ladder.  Convergence is
    then demonstrated by growing N at fixed core.
    """

    n_levels: int
    n_modes: int = 2
    core_levels: int = None
    guard_fraction: float = 1e-6
    dim_cap: int = DIM_CAP

    def __post_init__(self):
        if self.n_levels < 2:
            raise ValueError("need at least 2 levels per mode")
        if self.n_modes < 1:
            raise ValueError("need at least 1 mode")
        if self.dim > self.dim_cap:
            raise ValueError(
                f"total dimension {self.dim} exceeds cap {self.dim_cap}"
            )
        if self.core_levels is None:
            object.__setattr__(self, "core_levels", max(1, self.n_levels // 2))
        if not 1 <= self.core_levels <= self.n_levels:
            raise ValueError("core_levels must be in [1, n_levels]")

    @property
    def dim(self) -> int:
        return self.n_levels**self.n_modes


def _ladder(N: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1.0, N)), 1)


def _embed(op: np.ndarray, mode: int, spec: TruncationSpec) -> np.ndarray:
    """Single-mode operator -> full product space (kron ordering mode 0 first)."""
    out = np.array([[1.0 + 0j]])
    N = spec.n_levels
    for k in range(spec.n_modes):
        out = np.kron(out, op if k == mode else np.eye(N))
    return out


def build_quadrature_ops(
    spec: TruncationSpec, hbar: float = 1.0, ref_scale: float = 1.0
):
    """Quadrature pairs (q_i, p_i) on the full product space.

    q = sqrt(hbar / 2 w~) (a + a+), p = i sqrt(hbar w~ / 2) (a+ - a) with
    reference scale w~ = ``ref_scale``.  The truncation defect of
    [q, p] = i hbar is confined to the top level of each ladder.
    """
    if ref_scale <= 0:
        raise ValueError("ref_scale must be positive")
    a = _ladder(spec.n_levels)
    q1 = np.sqrt(hbar / (2 * ref_scale)) * (a + a.T)
    p1 = 1j * np.sqrt(hbar * ref_scale / 2) * (a.T - a)
    return [
        (_embed(q1, k, spec), _embed(p1, k, spec)) for k in range(spec.n_modes)
    ]


@dataclass(frozen=True)
class PolyKoopman:
    """Polynomial classical dynamics for M (Q, Pi) pairs.

    Each polynomial is a tuple of terms ((a, b), coef) with exponent
    tuples a, b of length M: the monomial prod_j Q_j^a_j Pi_j^b_j.
    ``f`` and ``g`` hold one polynomial per pair; ``h`` is a single
    polynomial.
    """

    M: int
    f: tuple
    g: tuple
    h: tuple = ()
    max_degree: int = MAX_DEGREE

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if len(self.f) != self.M or len(self.g) != self.M:
            raise ValueError("need one f and one g polynomial per pair")
        for poly in tuple(self.f) + tuple(self.g) + (self.h,):
            for (a, b), coef in poly:
                if len(a) != self.M or len(b) != self.M:
                    raise ValueError("exponent tuples must have length M")
                if sum(a) + sum(b) > self.max_degree:
                    raise ValueError("polynomial degree exceeds cap")
                if not np.isfinite(coef):
                    raise ValueError("coefficients must be finite")

    @staticmethod
    def from_json(text: str) -> "PolyKoopman":
        """Parse {"M", "f": [{"a","b","coef"}...], "g": [...], "h": [...]}.

        For M = 1 the exponents "a", "b" are plain integers; for M > 1
        they are length-M lists.
        """
        doc = json.loads(text)
        M = int(doc["M"])

        def parse_poly(entries):
            terms = []
            for e in entries:
                a = e["a"] if isinstance(e["a"], list) else [e["a"]]
                b = e["b"] if isinstance(e["b"], list) else [e["b"]]
                terms.append(
                    ((tuple(int(x) for x in a), tuple(int(x) for x in b)),
                     float(e["coef"]))
                )
            return tuple(terms)

        if M == 1:
            f = (parse_poly(doc["f"]),)
            g = (parse_poly(doc["g"]),)
        else:
            f = tuple(parse_poly(entry) for entry in doc["f"])
            g = tuple(parse_poly(entry) for entry in doc["g"])
        h = parse_poly(doc.get("h", []))
        return PolyKoopman(M=M, f=f, g=g, h=h)

    def to_json(self) -> str:
        def dump_poly(poly):
            out = []
            for (a, b), coef in poly:
                entry = {
                    "a": a[0] if self.M == 1 else list(a),
                    "b": b[0] if self.M == 1 else list(b),
                    "coef": coef,
                }
                out.append(entry)
            return out

        doc = {"M": self.M}
        if self.M == 1:
            doc["f"] = dump_poly(self.f[0])
            doc["g"] = dump_poly(self.g[0])
        else:
            doc["f"] = [dump_poly(p) for p in self.f]
            doc["g"] = [dump_poly(p) for p in self.g]
        doc["h"] = dump_poly(self.h)
        return json.dumps(doc, indent=2)


def poly1(*terms) -> tuple:
    """Convenience constructor for an M = 1 polynomial: poly1((a, b, coef), ...)."""
    return tuple((((int(a),), (int(b),)), float(c)) for a, b, c in terms)


def poly_eval(poly, Q, Pi) -> float:
    """Evaluate a polynomial at scalar (or array) phase-space points."""
    Q = np.atleast_1d(np.asarray(Q, dtype=float))
    Pi = np.atleast_1d(np.asarray(Pi, dtype=float))
    total = 0.0
    for (a, b), coef in poly:
        term = coef
        for j, (aj, bj) in enumerate(zip(a, b)):
            term = term * Q[j] ** aj * Pi[j] ** bj
        total = total + term
    return total


def poly_op(poly, Q_ops, Pi_ops) -> np.ndarray:
    """Operator value of a polynomial in the commuting set (Q, Pi).

    All arguments commute, so any factor ordering gives the same
    (Hermitian) operator; products are taken in a fixed canonical order.
    """
    dim = Q_ops[0].shape[0]
    out = np.zeros((dim, dim), dtype=complex)
    for (a, b), coef in poly:
        term = coef * np.eye(dim, dtype=complex)
        for j, (aj, bj) in enumerate(zip(a, b)):
            for _ in range(aj):
                term = term @ Q_ops[j]
            for _ in range(bj):
                term = term @ Pi_ops[j]
        out += term
    return out


def koopman_operators(
    pk_M: int, spec: TruncationSpec, hbar: float = 1.0, ref_scale: float = 1.0
) -> dict:
    """Operator dictionary {Q, P, Phi, Pi}: lists of length M."""
    if spec.n_modes != 2 * pk_M:
        raise ValueError(
            f"need {2 * pk_M} modes for M={pk_M} pairs, spec has {spec.n_modes}"
        )
    pairs = build_quadrature_ops(spec, hbar, ref_scale)
    return {
        "Q": [pairs[j][0] for j in range(pk_M)],
        "P": [pairs[j][1] for j in range(pk_M)],
        "Phi": [pairs[pk_M + j][0] for j in range(pk_M)],
        "Pi": [pairs[pk_M + j][1] for j in range(pk_M)],
    }


def build_koopman_hamiltonian(
    pk: PolyKoopman,
    spec: TruncationSpec,
    hbar: float = 1.0,
    ref_scale: float = 1.0,
):
    """Dense Hamiltonian matrix plus the operator dictionary it acts on."""
    ops = koopman_operators(pk.M, spec, hbar, ref_scale)
    dim = spec.dim
    H = np.zeros((dim, dim), dtype=complex)
    for j in range(pk.M):
        F = poly_op(pk.f[j], ops["Q"], ops["Pi"])
        Gm = poly_op(pk.g[j], ops["Q"], ops["Pi"])
        P = ops["P"][j]
        Phi = ops["Phi"][j]
        H += 0.5 * (P @ F + F @ P + Phi @ Gm + Gm @ Phi)
    if pk.h:
        H += poly_op(pk.h, ops["Q"], ops["Pi"])
    defect = np.linalg.norm(H - H.conj().T)
    scale = max(np.linalg.norm(H), 1.0)
    if defect > 1e-12 * scale:
        raise ValueError(
            f"Hamiltonian not Hermitian (defect {defect:.3g}); ordering bug"
        )
    H = (H + H.conj().T) / 2
    return H, ops


def oscillator_hamiltonian(
    spec: TruncationSpec,
    m: float,
    omega: float,
    hbar: float = 1.0,
    mode: int = 0,
) -> np.ndarray:
    """H = p^2/2m + m w^2 q^2/2 on one mode (m < 0 inverts the ladder)."""
    if m == 0 or omega <= 0:
        raise ValueError("need m != 0 and omega > 0")
    q, p = build_quadrature_ops(spec, hbar, ref_scale=abs(m) * omega)[mode]
    return p @ p / (2 * m) + 0.5 * m * omega**2 * (q @ q)


class HeisenbergPropagator:
    """Caches the eigendecomposition of H for repeated O(t) evaluations."""

    def __init__(self, H: np.ndarray, hbar: float = 1.0):
        self.hbar = hbar
        self.energies, self.vectors = np.linalg.eigh(H)

    def evolve(self, O: np.ndarray, t: float) -> np.ndarray:
        """O(t) = exp(iHt/hbar) O exp(-iHt/hbar)."""
        V = self.vectors
        Ot = V.conj().T @ O @ V
        phase = np.exp(1j * self.energies * t / self.hbar)
        Ot = Ot * np.outer(phase, phase.conj())
        return V @ Ot @ V.conj().T


def heisenberg_op(H: np.ndarray, O: np.ndarray, t: float, hbar: float = 1.0):
    """One-shot Heisenberg evolution; use the propagator class for grids."""
    return HeisenbergPropagator(H, hbar).evolve(O, t)


def guard_projector(spec: TruncationSpec) -> np.ndarray:
    """Diagonal projector onto the trusted low-excitation core."""
    keep_single = np.zeros(spec.n_levels)
    keep_single[: spec.core_levels] = 1.0
    keep = np.array([1.0])
    for _ in range(spec.n_modes):
        keep = np.kron(keep, keep_single)
    return np.diag(keep)


def top_level_population(state: np.ndarray, spec: TruncationSpec) -> float:
    """Population outside the core; above guard_fraction = untrusted."""
    P = guard_projector(spec)
    guarded = np.diag(P) == 0
    return float(np.sum(np.abs(state[guarded]) ** 2))


def commutator_residual(
    H: np.ndarray,
    O_set,
    t_grid,
    spec: TruncationSpec,
    hbar: float = 1.0,
    norm: str = "spec",
) -> float:
    """Max guarded norm of [O_j(t), O_k(t')] over all pairs and grid times.

    ``norm`` selects the matrix norm applied to the projected
    commutator: spectral ("spec") or Frobenius ("fro").
    """
    energies, V = np.linalg.eigh(H)
    keep = np.diag(guard_projector(spec)) != 0
    V_keep = V[keep, :]
    Vh = V.conj().T
    ord_ = 2 if norm == "spec" else "fro"

    # For Hermitian evolved operators A, B the projected commutator
    # P(AB - BA)P only needs the kept rows R = A[keep, :]:
    # it equals R_A R_B+ - R_B R_A+.
    rows = []
    for O in O_set:
        defect = np.linalg.norm(O - O.conj().T)
        if defect > 1e-10 * max(1.0, np.linalg.norm(O)):
            raise ValueError("observables must be Hermitian")
        Otil = Vh @ O @ V
        for t in t_grid:
            phase = np.exp(1j * energies * t / hbar)
            rows.append(V_keep @ (Otil * np.outer(phase, phase.conj())) @ Vh)

    worst = 0.0
    for i, RA in enumerate(rows):
        for RB in rows[i:]:
            C = RA @ RB.conj().T - RB @ RA.conj().T
            worst = max(worst, float(np.linalg.norm(C, ord_)))
    return worst
