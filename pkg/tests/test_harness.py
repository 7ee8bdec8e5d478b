import math

import numpy as np
import pytest

from qlease.circuits import point_circuit
from qlease.field import FieldParams, random_subspace
from qlease.harness import (SchemeConfig, bruteforce_mauler, check_then_measure_direct,
                            entangled_strategy, estimate_run_agreement, finite_term_experiment,
                            infinite_term_experiment, make_strategy, product_strategy, wilson)
from qlease.rng import make_rng
from qlease.scheme import gen, lessor, run, setup
from qlease.states import (BipartiteState, PureState, conditional_second_register, subspace_state)


def within(k, n, p, sigmas=3.0):
    se = math.sqrt(p * (1 - p) / n)
    return abs(k / n - p) <= sigmas * se


def accounting(report):
    c = report.counts
    assert c.get("joint_success", 0) <= c.get("check_pass", report.trials) <= report.trials


def test_honest_return_has_no_second_copy():
    r = finite_term_experiment(make_strategy("honest_return"), SchemeConfig(seed=1), trials=50)
    assert r.check_pass == 50 and r.joint_success == 0
    accounting(r)


def test_measure_reprepare_rates():
    r = finite_term_experiment(make_strategy("measure_reprepare_duplicate"), SchemeConfig(seed=2), trials=3000)
    assert within(r.check_pass, 3000, 1 / 8)
    assert within(r.counts["copy2_projection"], 3000, 1 / 8)
    assert within(r.counts["joint_sampled"], 3000, 1 / 64)
    accounting(r)


def test_fourier_measure_rates():
    r = finite_term_experiment(make_strategy("fourier_measure_duplicate"), SchemeConfig(seed=3), trials=2000)
    assert within(r.check_pass, 2000, 1 / 8)


def test_fresh_subspace_pirate_fails():
    r = finite_term_experiment(make_strategy("classical_copy_fresh_subspace"), SchemeConfig(seed=4), trials=100)
    assert r.check_pass == 100 and r.joint_success == 0 and r.counts["copy2_projection"] == 0


def test_product_duplicator_infinite_term():
    def basis_of_A(crs, lease, rng):
        amps = lease.quantum.amplitudes
        v = np.zeros_like(amps)
        v[int(np.nonzero(np.abs(amps) > 0)[0][1])] = 1
        return v

    trials = 3000
    r = infinite_term_experiment(product_strategy(basis_of_A), SchemeConfig(seed=5, beta=0.1), trials=trials)
    assert r.counts["copy1_success"] == trials
    assert within(r.counts["copy2_projection"], trials, 1 / 8)
    assert r.counts["both_success"] == trials


def test_garbage_second_register():
    def zero(crs, lease, rng):
        v = np.zeros(crs.params.dim, complex)
        v[0] = 1
        return v

    r = infinite_term_experiment(product_strategy(zero, copy_classical=False), SchemeConfig(seed=6), trials=50)
    assert r.counts["both_success"] == 0 and r.counts["both_sampled"] == 0


def test_entangled_strategy_matches_born_rule():
    # (|A>|A> + |w>|0>)/sqrt2 with w a basis vector outside A:
    # copy 1 passes with prob 1/2 and then leaves |A> on R2; on rejection the
    # R2 state is |0>, whose Run acceptance is 1/8.
    def branch(crs, lease, rng):
        amps = lease.quantum.amplitudes
        outside = int(np.nonzero(np.abs(amps) < 1e-12)[0][0])
        w = np.zeros_like(amps)
        w[outside] = 1
        zero = np.zeros_like(amps)
        zero[0] = 1
        return amps, w, zero

    trials = 4000
    r = infinite_term_experiment(entangled_strategy(branch), SchemeConfig(seed=8), trials=trials)
    assert within(r.counts["copy1_projection"], trials, 0.5)
    p2 = 0.5 * 1.0 + 0.5 * (1 / 8)
    assert within(r.counts["copy2_projection"], trials, p2)
    assert within(r.counts["both_success"], trials, 0.5)


def test_conditional_path_agrees_with_direct_simulation():
    rng = make_rng(40)
    crs = setup(FieldParams(2, 4), "ideal", rng)
    sk = gen(crs, rng)
    lease = lessor(crs, sk, point_circuit(3, 4), rng)
    amps = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    amps += 3 * np.outer(subspace_state(sk.A).amplitudes, subspace_state(sk.A).amplitudes)
    sigma = BipartiteState.from_unnormalized(crs.params, amps)
    trials = 10_000
    direct = [check_then_measure_direct(sigma, sk, lease.classical(), crs, rng) for _ in range(trials)]
    joint_direct = sum(a and b for a, b in direct)
    acc, post, p_acc = conditional_second_register(sigma, sk.A, force=True)
    from qlease.harness import _copy_lease
    from qlease.scheme import run_accept_probability
    p_joint = p_acc * run_accept_probability(crs, _copy_lease(lease.classical(), post))
    assert within(joint_direct, trials, p_joint)


def test_estimate_run_agreement():
    rng = make_rng(41)
    crs = setup(FieldParams(2, 6), "ideal", rng)
    sk = gen(crs, rng)
    c = point_circuit(5, 6)
    lease = lessor(crs, sk, c, rng)
    assert estimate_run_agreement(crs, lease, c) == pytest.approx(1.0)
    assert estimate_run_agreement(crs, None, c) == 0.0
    t = subspace_state(sk.A).amplitudes
    w = np.zeros(64, complex)
    w[int(np.nonzero(np.abs(t) < 1e-12)[0][0])] = 1
    overlap = 0.6
    damaged = lease.copy()
    damaged.quantum = PureState.from_unnormalized(crs.params, overlap * t + math.sqrt(1 - overlap ** 2) * w)
    assert estimate_run_agreement(crs, damaged, c) == pytest.approx(overlap ** 2)
    broken = lease.copy()
    broken.quantum = PureState.from_unnormalized(crs.params, w)
    assert estimate_run_agreement(crs, broken, c) == 0.0
    lo = estimate_run_agreement(crs, lease, c, mode="sampled", trials=100, rng=rng)
    assert 0.9 < lo <= 1.0


def test_mauler_budgets():
    rng = make_rng(42)
    crs = setup(FieldParams(2, 6), "toy", rng)
    sk = gen(crs, rng)
    lease = lessor(crs, sk, point_circuit(200, 8), rng)
    assert not bruteforce_mauler(crs, lease, 0, rng).success
    res = bruteforce_mauler(crs, lease, 256, rng)
    assert res.success and res.x == 200
    assert all(run(crs, res.lease, x, rng).output == lease.c_obf(x) for x in range(256))
    ideal = setup(FieldParams(2, 6), "ideal", rng)
    with pytest.raises(ValueError):
        bruteforce_mauler(ideal, lessor(ideal, gen(ideal, rng), point_circuit(1, 8), rng), 10, rng)


def test_determinism():
    cfg = SchemeConfig(seed=9)
    s = make_strategy("measure_reprepare_duplicate")
    assert finite_term_experiment(s, cfg, trials=100).to_json() == finite_term_experiment(s, cfg, trials=100).to_json()


def test_standard_error_halves():
    s = make_strategy("measure_reprepare_duplicate")
    a = finite_term_experiment(s, SchemeConfig(seed=10), trials=1000).to_json()["rates"]["check_pass"]["stderr"]
    b = finite_term_experiment(s, SchemeConfig(seed=10), trials=4000).to_json()["rates"]["check_pass"]["stderr"]
    assert 0.35 < b / a < 0.65


def test_wilson_interval():
    lo, hi = wilson(0, 100)
    assert lo == 0.0 and 0 < hi < 0.05
    assert wilson(0, 0) == (0.0, 1.0)


def test_unknown_strategy():
    with pytest.raises(ValueError):
        make_strategy("telepathy")
