import math
from dataclasses import replace

import numpy as np
import pytest

from qlease.circuits import UnsatisfiableCircuit, point_circuit, sample_unpredictable, search, wildcard_circuit
from qlease.field import FieldParams, Subspace, random_subspace
from qlease.oracles import NizkProof
from qlease.rng import make_rng
from qlease.scheme import (LeaseWitness, check, gen, lease_from_json, lease_relation, lease_to_json,
                           lessor, run, run_accept_probability, run_reusable, setup, verify_lease)
from qlease.states import PureState, SimulationCapError, acceptance_probability, states_equal, subspace_state


@pytest.fixture
def scheme(rng):
    crs = setup(FieldParams(2, 6), "ideal", rng)
    return crs, gen(crs, rng)


def test_setup_checks():
    with pytest.raises(ValueError):
        setup(FieldParams(2, 5))
    with pytest.raises(SimulationCapError):
        setup(FieldParams(2, 22))
    with pytest.raises(ValueError):
        setup(FieldParams(2, 4), mode="real")


def test_gen_dimensions(scheme, rng):
    crs, _ = scheme
    for _ in range(10):
        sk = gen(crs, rng)
        assert sk.A.dim == 3 and sk.A.dual().dim == 3


def test_lessor_output(scheme, rng):
    crs, sk = scheme
    lease = lessor(crs, sk, point_circuit(0b10101, 5), rng)
    assert verify_lease(crs, lease) == 1
    assert states_equal(lease.quantum, subspace_state(sk.A))
    assert check(sk, lease, rng) == 1


def test_relation_on_honest_witness(scheme, rng):
    crs, sk = scheme
    c = point_circuit(9, 5)
    lease = lessor(crs, sk, c, rng)
    # the sealed witness is what the prover committed to
    from qlease.oracles import NizkTrapdoor
    w = crs.nizk_crs.oracle._witnesses[lease.proof.witness_ref][1]
    assert isinstance(w, LeaseWitness) and lease_relation(lease.statement, w)
    assert c(w.x) == 1
    assert not lease_relation(lease.statement, replace(w, x=w.x ^ 1))
    assert not lease_relation(lease.statement, replace(w, r_A=w.r_A + 1))
    assert not lease_relation(lease.statement, replace(w, A=random_subspace(sk.A.params, 3, rng)))


def test_lessor_unsatisfiable(scheme, rng):
    crs, sk = scheme
    with pytest.raises(UnsatisfiableCircuit):
        lessor(crs, sk, wildcard_circuit({0}, 0b01, 2), rng)


@pytest.mark.parametrize("family", ["point", "wildcard", "affine", "plaintext_eq"])
def test_run_correct_on_all_inputs(scheme, rng, family):
    crs, sk = scheme
    c = sample_unpredictable(6, None, rng, family).circuit
    lease = lessor(crs, sk, c, rng)
    for x in range(1 << c.n):
        assert run(crs, lease, x, rng).output == c(x)
    assert check(sk, lease, rng) == 1


def test_run_rejects_basis_state(scheme):
    crs, sk = scheme
    c = point_circuit(3, 5)
    rng = make_rng(31)
    trials, passes = 4000, 0
    a = sk.A.elements()[1]
    for _ in range(trials):
        lease = lessor(crs, sk, c, rng)
        lease.quantum = PureState.basis(sk.A.params, a)
        passes += run(crs, lease, 3, rng).output is not None
    p = 2 ** -3
    assert abs(passes / trials - p) <= 3 * math.sqrt(p * (1 - p) / trials)


def test_run_with_tampered_proof(scheme, rng):
    crs, sk = scheme
    lease = lessor(crs, sk, point_circuit(3, 5), rng)
    pi = lease.proof
    lease.proof = NizkProof(pi.statement_digest, pi.witness_ref, pi.simulated, "0" * len(pi.tag))
    res = run(crs, lease, 3, rng)
    assert res.output is None and res.c == 0 and res.a is None
    assert states_equal(lease.quantum, subspace_state(sk.A))


def test_run_wrong_input_length(scheme, rng):
    crs, sk = scheme
    lease = lessor(crs, sk, point_circuit(3, 5), rng)
    with pytest.raises(ValueError):
        run(crs, lease, 1 << 5, rng)


def test_check_probabilities(scheme, rng):
    crs, sk = scheme
    lease = lessor(crs, sk, point_circuit(3, 5), rng)
    outside = next(np.array(v) for v in np.ndindex(*(2,) * 6) if not sk.A.contains(v))
    lease.quantum = PureState.basis(sk.A.params, outside)
    assert check(sk, lease, rng) == 0
    lease.quantum = PureState.basis(sk.A.params, sk.A.elements()[2])
    assert acceptance_probability(lease.quantum, sk.A) == pytest.approx(2 ** -3)


def test_run_is_projection_onto_subspace_state(scheme, rng):
    crs, sk = scheme
    lease = lessor(crs, sk, point_circuit(3, 5), rng)
    for _ in range(20):
        v = rng.normal(size=64) + 1j * rng.normal(size=64)
        lease.quantum = PureState.from_unnormalized(sk.A.params, v)
        assert run_accept_probability(crs, lease) == pytest.approx(
            acceptance_probability(lease.quantum, sk.A), abs=1e-9)


def test_run_reusable_honest(scheme, rng):
    crs, sk = scheme
    c = point_circuit(17, 5)
    lease = lessor(crs, sk, c, rng)
    for i in range(100):
        x = i % 32
        res = run_reusable(crs, lease, x, rng)
        assert res.output == c(x)
        assert res.details["disturbance"] <= 1e-9


def test_run_reusable_perturbed(scheme, rng):
    crs, sk = scheme
    lease = lessor(crs, sk, point_circuit(17, 5), rng)
    t = subspace_state(sk.A).amplitudes
    w = rng.normal(size=64) + 0j
    w -= np.vdot(t, w) * t
    w /= np.linalg.norm(w)
    eps = 0.05
    lease.quantum = PureState.from_unnormalized(sk.A.params, math.sqrt(1 - eps) * t + math.sqrt(eps) * w)
    res = run_reusable(crs, lease, 17, make_rng(0))
    if res.output is not None:
        assert res.details["disturbance"] <= math.sqrt(eps) + 1e-9


def test_lease_serialization(scheme, rng):
    crs, sk = scheme
    lease = lessor(crs, sk, point_circuit(6, 5), rng)
    back = lease_from_json(lease_to_json(lease), lease.quantum)
    assert back.statement == lease.statement
    assert verify_lease(crs, back)
    assert run(crs, back, 6, rng).output == 1


def test_family_circuit_lease(scheme, rng):
    from qlease.dequantum import sample_family
    crs, sk = scheme
    c = sample_family(2, None, rng)
    lease = lessor(crs, sk, c, rng)
    assert all(run(crs, lease, x, rng).output == c(x) for x in range(1 << c.n))
