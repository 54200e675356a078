"""Stroboscopic Pauli-Z propagation through reversible circuits."""

import numpy as np
import pytest

from qmfslab.circuits import (
    BoolFunc,
    ReversibleCircuit,
    SynthesisBudgetError,
    all_circuits_exhaustive,
    anf_monomials,
    build_classical_function,
    circuit_permutation,
    dense_oracle_check,
    propagate_z,
    random_circuit,
    restricted_table,
    truth_table_from_function,
)


class TestReversibleCircuit:
    def test_gate_validation(self):
        with pytest.raises(ValueError):
            ReversibleCircuit(2, (("CCX", 0, 1, 2),))  # out of range
        with pytest.raises(ValueError):
            ReversibleCircuit(2, (("CX", 0, 0),))  # repeated index
        with pytest.raises(ValueError):
            ReversibleCircuit(2, (("H", 0),))  # unknown gate

    def test_bit_budget(self):
        with pytest.raises(ValueError):
            ReversibleCircuit(17, ())

    def test_text_round_trip(self):
        c = ReversibleCircuit(3, (("X", 0), ("CX", 0, 1), ("CCX", 0, 1, 2)))
        assert ReversibleCircuit.from_text(c.to_text()) == c

    def test_from_text_requires_header(self):
        with pytest.raises(ValueError):
            ReversibleCircuit.from_text("X 0\n")

    def test_then_concatenates(self):
        a = ReversibleCircuit(2, (("X", 0),))
        b = ReversibleCircuit(2, (("CX", 0, 1),))
        assert a.then(b).gates == (("X", 0), ("CX", 0, 1))
        with pytest.raises(ValueError):
            a.then(ReversibleCircuit(3, ()))


class TestPermutation:
    def test_x_gate(self):
        c = ReversibleCircuit(2, (("X", 1),))
        assert np.array_equal(circuit_permutation(c), [2, 3, 0, 1])

    def test_cx_gate(self):
        c = ReversibleCircuit(2, (("CX", 0, 1),))
        # control bit 0: inputs 1 and 3 flip bit 1
        assert np.array_equal(circuit_permutation(c), [0, 3, 2, 1])

    def test_ccx_gate(self):
        c = ReversibleCircuit(3, (("CCX", 0, 1, 2),))
        perm = circuit_permutation(c)
        assert perm[3] == 7 and perm[7] == 3
        assert all(perm[x] == x for x in (0, 1, 2, 4, 5, 6))

    def test_is_bijection(self):
        rng = np.random.default_rng(0)
        c = random_circuit(5, 30, rng)
        perm = circuit_permutation(c)
        assert sorted(perm) == list(range(32))


class TestPropagateZ:
    def test_cnot_output_is_parity(self):
        # conjugating Z on the target of a CNOT gives Z1 Z2: the Boolean
        # image is the XOR of the two input bits
        c = ReversibleCircuit(2, (("CX", 0, 1),))
        f = propagate_z(c, 1)
        for x in range(4):
            b0, b1 = x & 1, (x >> 1) & 1
            assert f(x) == b0 ^ b1
        # the control is untouched
        g = propagate_z(c, 0)
        for x in range(4):
            assert g(x) == x & 1

    def test_toffoli_output_is_and_xor(self):
        # Z on the Toffoli target pulls back to x3 XOR (x1 AND x2)
        c = ReversibleCircuit(3, (("CCX", 0, 1, 2),))
        f = propagate_z(c, 2)
        for x in range(8):
            b0, b1, b2 = x & 1, (x >> 1) & 1, (x >> 2) & 1
            assert f(x) == b2 ^ (b0 & b1)

    def test_index_range(self):
        c = ReversibleCircuit(2, ())
        with pytest.raises(ValueError):
            propagate_z(c, 2)


class TestDenseOracle:
    def test_cnot_zero_deviation(self):
        c = ReversibleCircuit(2, (("CX", 0, 1),))
        assert dense_oracle_check(c) == 0

    def test_toffoli_zero_deviation(self):
        c = ReversibleCircuit(3, (("CCX", 0, 1, 2),))
        assert dense_oracle_check(c) == 0

    def test_random_circuits_zero_deviation(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            c = random_circuit(4, 15, rng)
            assert dense_oracle_check(c) == 0

    def test_exhaustive_two_bits(self):
        count = 0
        for c in all_circuits_exhaustive(2, 2):
            assert dense_oracle_check(c) == 0
            count += 1
        assert count > 1  # empty circuit plus all 1- and 2-gate lists

    def test_size_cap(self):
        with pytest.raises(ValueError):
            dense_oracle_check(ReversibleCircuit(9, ()))


class TestBoolFunc:
    def test_diagonal_signs(self):
        f = BoolFunc(1, np.array([0, 1]))
        assert np.array_equal(f.diagonal(), [1, -1])

    def test_table_length_checked(self):
        with pytest.raises(ValueError):
            BoolFunc(2, np.array([0, 1]))

    def test_truth_table_from_function(self):
        maj = truth_table_from_function(3, lambda a, b, c: (a & b) | (b & c) | (a & c))
        assert maj(0b011) == 1
        assert maj(0b100) == 0


class TestAnf:
    def test_xor_function(self):
        f = truth_table_from_function(2, lambda a, b: a ^ b)
        assert sorted(anf_monomials(f)) == [0b01, 0b10]

    def test_and_function(self):
        f = truth_table_from_function(2, lambda a, b: a & b)
        assert anf_monomials(f) == [0b11]

    def test_constant_one(self):
        f = BoolFunc(2, np.ones(4, dtype=np.uint8))
        assert anf_monomials(f) == [0]

    def test_reconstruction(self):
        # XOR of the ANF monomials reproduces the table
        rng = np.random.default_rng(5)
        table = rng.integers(0, 2, size=16).astype(np.uint8)
        f = BoolFunc(4, table)
        mons = anf_monomials(f)
        for x in range(16):
            val = 0
            for m in mons:
                val ^= int((x & m) == m)
            assert val == f(x)


class TestSynthesis:
    def test_full_adder_round_trip(self):
        # sum and carry of three input bits, synthesized and re-derived
        # by Z propagation through the synthesized circuit
        s = truth_table_from_function(3, lambda a, b, c: a ^ b ^ c)
        cy = truth_table_from_function(
            3, lambda a, b, c: (a & b) | (b & c) | (a & c)
        )
        result = build_classical_function([s, cy], 3)
        assert dense_oracle_check(result.circuit) == 0
        for target, out_bit in zip([s, cy], result.output_bits):
            f = propagate_z(result.circuit, out_bit)
            back = restricted_table(f, 3)
            assert np.array_equal(back.table, target.table)

    def test_inputs_untouched(self):
        f = truth_table_from_function(2, lambda a, b: a ^ b)
        result = build_classical_function([f], 2)
        for j in result.input_bits:
            g = propagate_z(result.circuit, j)
            for x in range(1 << result.circuit.n_bits):
                assert g(x) == (x >> j) & 1

    def test_high_degree_uses_ancillas(self):
        f = truth_table_from_function(4, lambda a, b, c, d: a & b & c & d)
        result = build_classical_function([f], 4)
        assert len(result.ancilla_bits) >= 1
        back = restricted_table(propagate_z(result.circuit, result.output_bits[0]), 4)
        assert np.array_equal(back.table, f.table)

    def test_budget_error(self):
        # many high-degree targets exhaust the 16-bit budget
        targets = [
            truth_table_from_function(5, lambda a, b, c, d, e: a & b & c & d & e)
            for _ in range(4)
        ]
        with pytest.raises(SynthesisBudgetError):
            build_classical_function(targets, 5)

    def test_input_width_checked(self):
        f = truth_table_from_function(2, lambda a, b: a ^ b)
        with pytest.raises(ValueError):
            build_classical_function([f], 3)
