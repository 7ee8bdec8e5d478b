import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlease.field import FieldParams, Subspace, random_subspace
from qlease.rng import make_rng
from qlease.states import (BinaryMeasurement, BipartiteState, DensityOperator, PureState,
                           SimulationCapError, ZeroProbabilityBranch, acceptance_probability,
                           conditional_second_register, dump_state, gentle_measurement_bound_check,
                           load_state, measure_membership, partial_trace_first, partial_trace_second,
                           project_onto_subspace_state, pure_trace_distance, qft, qft_array,
                           states_equal, subspace_state, trace_distance)

from conftest import dense_fourier_matrix, span_by_enumeration


def random_state(params, rng):
    v = rng.normal(size=params.dim) + 1j * rng.normal(size=params.dim)
    return PureState.from_unnormalized(params, v)


def test_subspace_state_examples():
    p = FieldParams(2, 2)
    s = subspace_state(Subspace.from_generators(p, [[1, 0]]))
    assert np.allclose(s.amplitudes, [1 / math.sqrt(2), 0, 1 / math.sqrt(2), 0])
    assert np.allclose(subspace_state(Subspace.full(p)).amplitudes, 0.5)


def test_subspace_state_support(rng):
    p = FieldParams(2, 6)
    A = random_subspace(p, 3, rng)
    s = subspace_state(A)
    support = np.nonzero(np.abs(s.amplitudes) > 1e-12)[0]
    assert len(support) == 8 == len(span_by_enumeration(A.basis, 2, 6))
    assert np.allclose(s.amplitudes[support], 1 / math.sqrt(8))


def test_qft_small_cases():
    one = PureState.basis(FieldParams(2, 1), [0])
    assert np.allclose(qft(one).amplitudes, [1 / math.sqrt(2)] * 2)
    three = PureState.basis(FieldParams(3, 1), [0])
    assert np.allclose(qft(three).amplitudes, 1 / math.sqrt(3))
    p = FieldParams(2, 2)
    s = subspace_state(Subspace.from_generators(p, [[1, 1]]))
    assert states_equal(qft(s), s)


@pytest.mark.parametrize("q,lam", [(2, 3), (3, 2), (5, 2), (7, 1)])
def test_qft_matches_dense_matrix(q, lam, rng):
    p = FieldParams(q, lam)
    F = dense_fourier_matrix(p)
    s = random_state(p, rng)
    assert np.allclose(qft(s).amplitudes, F @ s.amplitudes, atol=1e-12)
    assert np.allclose(qft(s, inverse=True).amplitudes, F.conj().T @ s.amplitudes, atol=1e-12)


@pytest.mark.parametrize("q,lam", [(2, 4), (3, 3), (5, 2)])
def test_fourier_dual_identity(q, lam, rng):
    p = FieldParams(q, lam)
    for d in range(lam + 1):
        A = random_subspace(p, d, rng)
        diff = qft(subspace_state(A)).amplitudes - subspace_state(A.dual()).amplitudes
        assert np.linalg.norm(diff) <= 1e-9


def test_double_forward_transform_is_negation_for_odd_q():
    p = FieldParams(3, 2)
    s = PureState.basis(p, [1, 2])
    twice = qft(qft(s))
    assert states_equal(twice, PureState.basis(p, [2, 1]))


def test_membership_examples(rng):
    p = FieldParams(2, 2)
    A = Subspace.from_generators(p, [[0, 1]])
    bell = PureState.from_unnormalized(p, [1, 0, 0, 1])
    out = measure_membership(bell, A, force=1)
    assert out.probability == pytest.approx(0.5)
    assert states_equal(out.post_state, PureState.basis(p, [0, 0]))
    s = subspace_state(A)
    out = measure_membership(s, A, rng)
    assert out.outcome == 1 and out.probability == pytest.approx(1.0) and states_equal(out.post_state, s)
    assert measure_membership(PureState.basis(p, [1, 0]), A, rng).outcome == 0
    with pytest.raises(ZeroProbabilityBranch):
        measure_membership(s, A, force=0)


def test_membership_branch_probabilities_sum_to_one(rng):
    p = FieldParams(3, 3)
    A = random_subspace(p, 1, rng)
    s = random_state(p, rng)
    total = measure_membership(s, A, force=1).probability + measure_membership(s, A, force=0).probability
    assert total == pytest.approx(1.0, abs=1e-9)


def test_projection_probabilities(rng):
    p = FieldParams(2, 6)
    A = random_subspace(p, 3, rng)
    assert project_onto_subspace_state(subspace_state(A), A, rng).details["accept_probability"] == pytest.approx(1)
    a = A.elements()[3]
    got = project_onto_subspace_state(PureState.basis(p, a), A, rng).details["accept_probability"]
    assert got == pytest.approx(2 ** -3)
    v = next(u for u in np.ndindex(*(2,) * 6) if not A.contains(u))
    coset = PureState.from_unnormalized(p, [float(A.contains((np.array(x) - v) % 2))
                                            for x in np.ndindex(*(2,) * 6)])
    assert project_onto_subspace_state(coset, A, rng).details["accept_probability"] == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("q,lam", [(2, 4), (3, 3), (5, 2)])
def test_projector_identity(q, lam, rng):
    p = FieldParams(q, lam)
    for _ in range(10):
        A = random_subspace(p, int(rng.integers(0, lam + 1)), rng)
        psi = random_state(p, rng).amplitudes
        v = qft_array(psi * A.mask(), p) * A.dual().mask()
        v = qft_array(v, p, inverse=True)
        t = subspace_state(A).amplitudes
        assert np.linalg.norm(v - np.vdot(t, psi) * t) <= 1e-9


def test_trace_distance_cases(rng):
    p = FieldParams(2, 3)
    u, v = random_state(p, rng), random_state(p, rng)
    assert trace_distance(u, u) == pytest.approx(0, abs=1e-12)
    e0, e1 = PureState.basis(p, [0, 0, 0]), PureState.basis(p, [1, 0, 0])
    assert trace_distance(e0, e1) == pytest.approx(1)
    c = abs(u.inner(v))
    assert trace_distance(u, v) == pytest.approx(math.sqrt(1 - c * c), abs=1e-9)
    assert pure_trace_distance(u, v) == pytest.approx(math.sqrt(1 - c * c), abs=1e-9)


def test_partial_traces(rng):
    p = FieldParams(2, 2)
    u, v = random_state(p, rng), random_state(p, rng)
    prod = u.tensor(v)
    assert np.allclose(partial_trace_second(prod).matrix, u.density().matrix)
    assert np.allclose(partial_trace_first(prod).matrix, v.density().matrix)
    bell = BipartiteState.from_unnormalized(p, np.eye(4))
    assert np.allclose(partial_trace_second(bell).matrix, np.eye(4) / 4)
    amps = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = partial_trace_second(BipartiteState.from_unnormalized(p, amps))
    assert np.trace(rho.matrix).real == pytest.approx(1, abs=1e-9)
    assert np.linalg.eigvalsh(rho.matrix).min() > -1e-9


def test_conditional_second_register(rng):
    p = FieldParams(2, 4)
    A = random_subspace(p, 2, rng)
    v = random_state(p, rng)
    acc, post, prob = conditional_second_register(subspace_state(A).tensor(v), A, rng)
    assert acc and prob == pytest.approx(1) and np.allclose(post.matrix, v.density().matrix)
    # |B> orthogonal to |A>: a basis state outside A
    out = next(u for u in np.ndindex(*(2,) * 4) if not A.contains(u))
    B = PureState.basis(p, out)
    u, w = random_state(p, rng), random_state(p, rng)
    sigma = BipartiteState.from_unnormalized(
        p, np.outer(subspace_state(A).amplitudes, u.amplitudes) + np.outer(B.amplitudes, w.amplitudes))
    acc, post, prob = conditional_second_register(sigma, A, force=True)
    assert prob == pytest.approx(0.5) and np.allclose(post.matrix, u.density().matrix)


def test_conditional_matches_monte_carlo():
    rng = make_rng(99)
    p = FieldParams(2, 2)
    A = random_subspace(p, 1, rng)
    amps = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    sigma = BipartiteState.from_unnormalized(p, amps)
    _, _, p_acc = conditional_second_register(sigma, A, force=True)
    t = subspace_state(A).amplitudes
    direct = np.linalg.norm(t.conj() @ sigma.amplitudes) ** 2
    assert p_acc == pytest.approx(direct)
    trials = 100_000
    hits = sum(conditional_second_register(sigma, A, rng)[0] for _ in range(trials))
    se = math.sqrt(p_acc * (1 - p_acc) / trials)
    assert abs(hits / trials - p_acc) <= 3 * se


def test_gentle_measurement(rng):
    p = FieldParams(2, 4)
    A = random_subspace(p, 2, rng)
    m = BinaryMeasurement.subspace_state(A)
    tdist, bound = gentle_measurement_bound_check(subspace_state(A), m)
    assert tdist == pytest.approx(0, abs=1e-12) and bound == pytest.approx(0, abs=1e-7)
    theta = 0.3
    v = next(u for u in np.ndindex(*(2,) * 4) if not A.contains(u))
    coset = PureState.from_unnormalized(p, [float(A.contains((np.array(x) - v) % 2))
                                            for x in np.ndindex(*(2,) * 4)])
    s = PureState.from_unnormalized(p, math.cos(theta) * subspace_state(A).amplitudes
                                    + math.sin(theta) * coset.amplitudes)
    tdist, bound = gentle_measurement_bound_check(s, m)
    assert bound == pytest.approx(math.sin(theta)) and tdist <= math.sin(theta) + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["computational", "fourier", "rank_one"]))
def test_gentle_measurement_random(seed, kind):
    rng = make_rng(seed)
    p = FieldParams(3, 2)
    A = random_subspace(p, 1, rng)
    if kind == "computational":
        m = BinaryMeasurement.computational(A.mask())
    elif kind == "fourier":
        m = BinaryMeasurement.fourier(A.dual().mask(), p)
    else:
        m = BinaryMeasurement.subspace_state(A)
    tdist, bound = gentle_measurement_bound_check(random_state(p, rng), m)
    assert tdist <= bound + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([(2, 5), (3, 3), (5, 2), (7, 2)]))
def test_qft_unitary(seed, ql):
    p = FieldParams(*ql)
    s = random_state(p, make_rng(seed))
    f = qft_array(s.amplitudes, p)
    assert abs(np.linalg.norm(f) - 1) <= 1e-9
    assert np.allclose(qft_array(f, p, inverse=True), s.amplitudes, atol=1e-9)


def test_caps():
    with pytest.raises(SimulationCapError):
        PureState.basis(FieldParams(2, 21), [0] * 21)
    with pytest.raises(SimulationCapError):
        BipartiteState(FieldParams(2, 13), np.zeros((2**13, 2**13)))


def test_density_validation():
    p = FieldParams(2, 1)
    with pytest.raises(ValueError):
        DensityOperator(p, [[1, 1], [0, 0]])
    with pytest.raises(ValueError):
        DensityOperator(p, [[2, 0], [0, -1]])


def test_state_dump_roundtrip(rng):
    p = FieldParams(3, 3)
    s = random_state(p, rng)
    blob = dump_state(s)
    assert blob[:4] == b"QLSV" and len(blob) == 16 + 16 * p.dim
    assert np.array_equal(load_state(blob).amplitudes, s.amplitudes)
    with pytest.raises(ValueError):
        load_state(b"XXXX" + blob[4:])
