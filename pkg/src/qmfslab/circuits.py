"""Heisenberg propagation of Pauli-Z observables through permutation circuits.

A circuit of X / CX / CCX gates permutes computational-basis states, so
conjugating any Z_j gives a diagonal operator with entries
(-1)^(f_j(x)): a Boolean function of the input bits.  All such images
commute with the inputs, which is the stroboscopic (pre/post-gate)
no-back-action condition; the classical processing between input and
output lives entirely inside this commuting family.  Everything is
exact integer arithmetic, so the oracle tolerances are zero.

Circuit text format: first line "bits N", then one gate per line,
"X t" / "CX c t" / "CCX c1 c2 t" with 0-indexed distinct bit indices.
Bit j of basis state x is (x >> j) & 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ReversibleCircuit",
    "BoolFunc",
    "SynthesisResult",
    "SynthesisBudgetError",
    "circuit_permutation",
    "propagate_z",
    "dense_oracle_check",
    "build_classical_function",
    "truth_table_from_function",
    "anf_monomials",
    "restricted_table",
]

MAX_BITS = 16
MAX_DENSE_BITS = 8


class SynthesisBudgetError(RuntimeError):
    """Synthesis would exceed the bit budget."""


def _check_gate(gate, n_bits: int):
    name, *idx = gate
    arity = {"X": 1, "CX": 2, "CCX": 3}
    if name not in arity:
        raise ValueError(f"unknown gate {name!r}")
    if len(idx) != arity[name]:
        raise ValueError(f"{name} takes {arity[name]} bit indices, got {idx}")
    if len(set(idx)) != len(idx):
        raise ValueError(f"gate {gate} repeats a bit index")
    if any(not 0 <= i < n_bits for i in idx):
        raise ValueError(f"gate {gate} out of range for {n_bits} bits")


@dataclass(frozen=True)
class ReversibleCircuit:
    """Sequence of X / CX / CCX gates on n_bits <= 16 bits."""

    n_bits: int
    gates: tuple

    def __post_init__(self):
        if not 1 <= self.n_bits <= MAX_BITS:
            raise ValueError(f"n_bits must be in [1, {MAX_BITS}]")
        gates = tuple(tuple(g) for g in self.gates)
        for gate in gates:
            _check_gate(gate, self.n_bits)
        object.__setattr__(self, "gates", gates)

    def then(self, other: "ReversibleCircuit") -> "ReversibleCircuit":
        if other.n_bits != self.n_bits:
            raise ValueError("bit-count mismatch")
        return ReversibleCircuit(self.n_bits, self.gates + other.gates)

    def to_text(self) -> str:
        lines = [f"bits {self.n_bits}"]
        lines += [" ".join(str(p) for p in gate) for gate in self.gates]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "ReversibleCircuit":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("bits "):
            raise ValueError('circuit text must start with "bits N"')
        n_bits = int(lines[0].split()[1])
        gates = []
        for ln in lines[1:]:
            parts = ln.split()
            gates.append((parts[0],) + tuple(int(p) for p in parts[1:]))
        return ReversibleCircuit(n_bits, tuple(gates))


@dataclass(frozen=True)
class BoolFunc:
    """Truth table over n input bits; value table[x] for input x."""

    n_bits: int
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.uint8) & 1
        if table.shape != (1 << self.n_bits,):
            raise ValueError(
                f"table must have 2^{self.n_bits} entries, got {table.shape}"
            )
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def __call__(self, x: int) -> int:
        return int(self.table[x])

    def diagonal(self) -> np.ndarray:
        """Diagonal of the corresponding +-1 operator, (-1)^f(x)."""
        return 1 - 2 * self.table.astype(np.int64)


def _apply_gate(gate, x: np.ndarray) -> np.ndarray:
    name = gate[0]
    if name == "X":
        return x ^ (1 << gate[1])
    if name == "CX":
        c, t = gate[1], gate[2]
        return x ^ (((x >> c) & 1) << t)
    c1, c2, t = gate[1], gate[2], gate[3]
    return x ^ ((((x >> c1) & 1) & ((x >> c2) & 1)) << t)


def circuit_permutation(circuit: ReversibleCircuit) -> np.ndarray:
    """The bijection on {0, ..., 2^n - 1} composed from the gate list."""
    x = np.arange(1 << circuit.n_bits, dtype=np.int64)
    for gate in circuit.gates:
        x = _apply_gate(gate, x)
    return x


def propagate_z(circuit: ReversibleCircuit, j: int) -> BoolFunc:
    """Heisenberg image of Z_j: f_j(x) = bit j of the permuted input.

    With U|x> = |pi(x)>, U+ Z_j U is diagonal with entries
    (-1)^(pi(x)_j).
    """
    if not 0 <= j < circuit.n_bits:
        raise ValueError(f"bit index {j} out of range")
    perm = circuit_permutation(circuit)
    return BoolFunc(circuit.n_bits, (perm >> j) & 1)


def dense_oracle_check(circuit: ReversibleCircuit) -> int:
    """Brute-force unitary conjugation check; returns the max deviation.

    Builds the 2^n x 2^n permutation unitary, conjugates every Z_j, and
    asserts that each image (a) is diagonal, (b) matches the truth-table
    prediction, and (c) commutes with every input Z_k.  Integer
    arithmetic throughout, so any nonzero deviation is a real bug.
    """
    n = circuit.n_bits
    if n > MAX_DENSE_BITS:
        raise ValueError(f"dense oracle limited to {MAX_DENSE_BITS} bits")
    dim = 1 << n
    perm = circuit_permutation(circuit)
    U = np.zeros((dim, dim), dtype=np.int64)
    U[perm, np.arange(dim)] = 1  # U |x> = |perm(x)>
    deviation = 0
    for j in range(n):
        Zj = np.diag(1 - 2 * ((np.arange(dim) >> j) & 1))
        img = U.T @ Zj @ U
        off = img - np.diag(np.diag(img))
        deviation = max(deviation, int(np.max(np.abs(off))))
        predicted = propagate_z(circuit, j).diagonal()
        deviation = max(
            deviation, int(np.max(np.abs(np.diag(img) - predicted)))
        )
        for k in range(n):
            Zk = np.diag(1 - 2 * ((np.arange(dim) >> k) & 1))
            deviation = max(
                deviation, int(np.max(np.abs(img @ Zk - Zk @ img)))
            )
    return deviation


def truth_table_from_function(n_bits: int, fn) -> BoolFunc:
    """BoolFunc from a python predicate over bit tuples (lsb first)."""
    table = [
        fn(*[(x >> j) & 1 for j in range(n_bits)]) & 1
        for x in range(1 << n_bits)
    ]
    return BoolFunc(n_bits, np.array(table, dtype=np.uint8))


def anf_monomials(func: BoolFunc):
    """Algebraic normal form: the set of AND-monomials (as bitmasks)
    whose XOR equals the function (Moebius transform over GF(2))."""
    coeffs = func.table.astype(np.uint8).copy()
    n = func.n_bits
    for j in range(n):
        bit = 1 << j
        for x in range(1 << n):
            if x & bit:
                coeffs[x] ^= coeffs[x ^ bit]
    return [x for x in range(1 << n) if coeffs[x]]


@dataclass(frozen=True)
class SynthesisResult:
    """Synthesized circuit plus its bit bookkeeping."""

    circuit: ReversibleCircuit
    input_bits: tuple
    output_bits: tuple
    ancilla_bits: tuple


def build_classical_function(targets, n_inputs: int) -> SynthesisResult:
    """Toffoli/CNOT/X circuit computing each target on its own output bit.

    Naive exclusive-sum-of-products construction from the ANF: degree-0
    terms become X, degree-1 CX, degree-2 CCX; higher-degree monomials
    are accumulated through AND-chain ancillas (one CCX per extra
    factor, no uncomputation, no optimality).  Inputs occupy bits
    0..n_inputs-1 and are left untouched; outputs assume their ancilla
    bits start at 0.
    """
    targets = list(targets)
    for tgt in targets:
        if tgt.n_bits != n_inputs:
            raise ValueError("all targets must be functions of the inputs")

    monomial_lists = [anf_monomials(t) for t in targets]
    n_outputs = len(targets)
    n_chain = sum(
        max(0, bin(m).count("1") - 2)
        for mons in monomial_lists
        for m in mons
    )
    n_total = n_inputs + n_outputs + n_chain
    if n_total > MAX_BITS:
        raise SynthesisBudgetError(
            f"need {n_total} bits (inputs {n_inputs}, outputs {n_outputs}, "
            f"chain ancillas {n_chain}), budget is {MAX_BITS}"
        )

    gates = []
    output_bits = tuple(range(n_inputs, n_inputs + n_outputs))
    next_ancilla = n_inputs + n_outputs
    for out_bit, mons in zip(output_bits, monomial_lists):
        for mask in mons:
            factors = [j for j in range(n_inputs) if mask & (1 << j)]
            if not factors:
                gates.append(("X", out_bit))
            elif len(factors) == 1:
                gates.append(("CX", factors[0], out_bit))
            elif len(factors) == 2:
                gates.append(("CCX", factors[0], factors[1], out_bit))
            else:
                # chain: acc = f0 AND f1, then AND in one factor at a time
                acc = next_ancilla
                next_ancilla += 1
                gates.append(("CCX", factors[0], factors[1], acc))
                for fac in factors[2:-1]:
                    nxt = next_ancilla
                    next_ancilla += 1
                    gates.append(("CCX", acc, fac, nxt))
                    acc = nxt
                gates.append(("CCX", acc, factors[-1], out_bit))
    circuit = ReversibleCircuit(n_total, tuple(gates))
    return SynthesisResult(
        circuit=circuit,
        input_bits=tuple(range(n_inputs)),
        output_bits=output_bits,
        ancilla_bits=tuple(range(n_inputs + n_outputs, n_total)),
    )


def restricted_table(func: BoolFunc, n_inputs: int) -> BoolFunc:
    """Restrict a full-width truth table to ancillas-initialized-to-zero
    inputs: keep entries where all bits >= n_inputs are 0."""
    table = [func(x) for x in range(1 << n_inputs)]
    return BoolFunc(n_inputs, np.array(table, dtype=np.uint8))


def random_circuit(n_bits: int, n_gates: int, rng) -> ReversibleCircuit:
    """Uniformly random gate list; used by the randomized oracle checks."""
    gates = []
    kinds = ["X", "CX", "CCX"] if n_bits >= 3 else (
        ["X", "CX"] if n_bits == 2 else ["X"]
    )
    for _ in range(n_gates):
        kind = kinds[rng.integers(len(kinds))]
        arity = {"X": 1, "CX": 2, "CCX": 3}[kind]
        idx = rng.choice(n_bits, size=arity, replace=False)
        gates.append((kind,) + tuple(int(i) for i in idx))
    return ReversibleCircuit(n_bits, tuple(gates))


def all_circuits_exhaustive(n_bits: int, max_gates: int):
    """Every circuit up to max_gates gates (for small n); a generator."""
    single = []
    for t in range(n_bits):
        single.append(("X", t))
    for c, t in itertools.permutations(range(n_bits), 2):
        single.append(("CX", c, t))
    for c1, c2, t in itertools.permutations(range(n_bits), 3):
        if c1 < c2:
            single.append(("CCX", c1, c2, t))
    for length in range(max_gates + 1):
        for combo in itertools.product(single, repeat=length):
            yield ReversibleCircuit(n_bits, combo)
