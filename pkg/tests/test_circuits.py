import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from qlease.circuits import (CncCircuit, TruthTable, UnsatisfiableCircuit, affine_tester, eval_circuit,
                             from_bits, is_functionally_equal, plaintext_equality_checker,
                             point_circuit, sample_pseudoentropic, sample_unpredictable, search,
                             to_bits, wildcard_circuit)
from qlease.rng import make_rng


def test_point_circuit():
    c = point_circuit(from_bits("0101"), 4)
    assert eval_circuit(c, "0101") == 1
    assert eval_circuit(c, "0000") == 0
    assert search(point_circuit(from_bits("1100"), 4)) == from_bits("1100")
    with pytest.raises(ValueError):
        eval_circuit(c, "01")


def test_wildcard_search():
    c = wildcard_circuit({0, 2}, from_bits("1010"), 4)
    x = search(c)
    bits = to_bits(x, 4)
    assert bits[0] == "1" and bits[2] == "1" and c(x) == 1
    with pytest.raises(UnsatisfiableCircuit):
        search(wildcard_circuit({0, 2}, from_bits("1011"), 4))


def test_wildcard_exhaustive_against_definition():
    S, n = (1, 3, 4), 6
    lock = from_bits("010010")
    c = wildcard_circuit(S, lock, n)
    for x in range(1 << n):
        b, lb = to_bits(x, n), to_bits(lock, n)
        want = all(b[i] == lb[i] for i in S) and all(lb[i] == "0" for i in range(n) if i not in S)
        assert c(x) == int(want)


def test_affine_eval_matches_matrix_arithmetic(rng):
    M = rng.integers(0, 2, size=(3, 6))
    alpha = rng.integers(0, 2, size=3)
    c = affine_tester(M, alpha, 2)
    for _ in range(100):
        x = int(rng.integers(0, 64))
        v = np.array([int(b) for b in to_bits(x, 6)])
        assert c(x) == int(np.array_equal((M @ v) % 2, alpha))


def test_affine_search_z3(rng):
    M = rng.integers(0, 3, size=(3, 5))
    alpha = (M @ rng.integers(0, 3, size=5)) % 3
    c = affine_tester(M, alpha, 3)
    x = search(c)
    assert np.array_equal((M @ c.inner.decode(x, 5)) % 3, alpha)
    bad = affine_tester([[1, 1], [1, 1]], [0, 1], 2)
    with pytest.raises(UnsatisfiableCircuit):
        search(bad)


def test_plaintext_equality_search(rng):
    c = plaintext_equality_checker(1234, 0b10110, 8)
    x = search(c)
    assert c(x) == 1 and sum(c(y) for y in range(256)) == 1


def test_message_output():
    c = CncCircuit(point_circuit(5, 4).inner, 5, msg=0b110, msg_bits=3)
    assert c(5) == 0b110 and c(4) == 0


def test_json_roundtrip(rng):
    for family in ("truth_table", "point", "wildcard", "affine", "plaintext_eq"):
        c = sample_unpredictable(6, 3, rng, family).circuit
        back = CncCircuit.from_json(c.to_json())
        assert is_functionally_equal(c, back, c.n)


def test_functional_equality():
    a = point_circuit(3, 5)
    assert is_functionally_equal(a, a, 5)
    assert not is_functionally_equal(a, point_circuit(4, 5), 5)
    with pytest.raises(ValueError):
        is_functionally_equal(a, a, 21)


def test_lock_distribution_m1(rng):
    locks = [sample_unpredictable(3, 1, rng).circuit.lock for _ in range(2000)]
    assert set(locks) == {0, 1}


def test_lock_distribution_chi_square():
    rng = make_rng(11)
    counts = np.zeros(256)
    for _ in range(100_000):
        counts[sample_unpredictable(1, 8, rng).circuit.lock] += 1
    assert chisquare(counts).pvalue > 0.01


def test_evasiveness_monte_carlo():
    rng = make_rng(12)
    m, trials, x0 = 4, 20_000, 5
    hits = sum(sample_unpredictable(4, m, rng).circuit(x0) for _ in range(trials))
    p = 2 ** -m
    assert abs(hits / trials - p) <= 3 * math.sqrt(p * (1 - p) / trials)


def test_pseudoentropic_annotation(rng):
    s = sample_pseudoentropic(4, 4, rng)
    assert s.distribution == "pseudoentropic" and s.entropy_bits == 4


def test_truth_table_limits():
    with pytest.raises(ValueError):
        TruthTable(2, 1, (0, 1, 0))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["point", "wildcard", "affine", "plaintext_eq"]),
       st.integers(2, 8))
def test_search_never_wrong(seed, family, n):
    c = sample_unpredictable(n, None, make_rng(seed), family).circuit
    try:
        x = search(c)
    except UnsatisfiableCircuit:
        assert not any(c(y) for y in range(1 << c.n))
    else:
        assert c(x) == 1
