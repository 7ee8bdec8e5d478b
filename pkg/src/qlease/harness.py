"""Pirate strategies and the two lessor-security experiments.

A pirate receives the lease and returns a bipartite state on registers
R1, R2 together with one classical tuple (g, g_perp, c_obf, proof) per
register. Register 1 goes back to the lessor; register 2 is what the pirate
keeps. All quantum work is exact state-vector simulation; randomness only
enters through sampled measurement outcomes, so agreement probabilities
can be computed analytically next to the sampled counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import binomtest

from .circuits import CncCircuit, SearchTag, sample_unpredictable
from .field import FieldParams, random_subspace
from .oracles import RelationNotSatisfied, lock_digest, qiho_eval, sho_obf
from .rng import ALGORITHM, draw_bits, draw_seed, make_rng
from .scheme import (CommonReferenceString, LeasedState, LeaseWitness, SecretKey, check, gen,
                     lessor, run, run_accept_probability, setup, verify_lease)
from .states import (BipartiteState, DensityOperator, PureState, conditional_second_register,
                     partial_trace_first, partial_trace_second, qft_array, subspace_state,
                     two_step_projection_array)

EXHAUSTIVE_MAX_N = 8
SAMPLED_INPUTS = 64
DEFAULT_BETA = 0.5
SETUP_STREAM = 1 << 62

STRATEGIES = ("honest_return", "measure_reprepare_duplicate", "fourier_measure_duplicate",
              "classical_copy_fresh_subspace", "budget_bruteforce_mauler", "custom")


@dataclass
class PirateOutput:
    sigma: BipartiteState
    classical1: tuple
    classical2: tuple | None
    info: dict = field(default_factory=dict)


PirateFn = Callable[[CommonReferenceString, LeasedState, np.random.Generator], PirateOutput]


@dataclass
class PirateStrategy:
    kind: str
    fn: PirateFn
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ValueError(f"unknown strategy kind {self.kind!r}")

    def __call__(self, crs, lease, rng) -> PirateOutput:
        return self.fn(crs, lease, rng)

    @property
    def name(self) -> str:
        return self.params.get("name", self.kind)


def _zero_state(params: FieldParams) -> np.ndarray:
    v = np.zeros(params.dim, dtype=np.complex128)
    v[0] = 1.0
    return v


def _amps(lease: LeasedState) -> np.ndarray:
    q = lease.quantum
    if isinstance(q, PureState):
        return q.amplitudes
    raise ValueError("strategies expect a pure leased state")


def _sample_basis(amps: np.ndarray, rng: np.random.Generator) -> int:
    p = np.abs(amps) ** 2
    return int(rng.choice(len(p), p=p / p.sum()))


def _honest_return(crs, lease, rng) -> PirateOutput:
    sigma = BipartiteState(crs.params, np.outer(_amps(lease), _zero_state(crs.params)))
    return PirateOutput(sigma, lease.classical(), None)


def _measure_reprepare(crs, lease, rng) -> PirateOutput:
    idx = _sample_basis(_amps(lease), rng)
    v = np.zeros(crs.params.dim, dtype=np.complex128)
    v[idx] = 1.0
    return PirateOutput(BipartiteState(crs.params, np.outer(v, v)), lease.classical(),
                        lease.classical(), {"measured": idx})


def _fourier_measure(crs, lease, rng) -> PirateOutput:
    params = crs.params
    idx = _sample_basis(qft_array(_amps(lease), params), rng)
    e = np.zeros(params.dim, dtype=np.complex128)
    e[idx] = 1.0
    v = qft_array(e, params, inverse=True)
    return PirateOutput(BipartiteState(params, np.outer(v, v)), lease.classical(),
                        lease.classical(), {"measured": idx})


def _fresh_subspace(crs, lease, rng) -> PirateOutput:
    """Keep C_obf, swap in a self-chosen subspace, and try to prove it.

    Without an accepting point or the obfuscation randomness the relation
    cannot be satisfied; the pirate then falls back to the old proof.
    """
    params = crs.params
    A2 = random_subspace(params, params.lam // 2, rng)
    r1, r2 = draw_seed(rng), draw_seed(rng)
    g2, g2_perp = sho_obf(A2, seed=r1, mode=crs.mode), sho_obf(A2.dual(), seed=r2, mode=crs.mode)
    statement = (g2, g2_perp, lease.c_obf)
    proof, proved = lease.proof, False
    try:
        proof = crs.nizk_crs.oracle.prove(crs.nizk_crs, statement,
                                          LeaseWitness(A2, 0, r1, r2, None, None), rng)
        proved = True
    except RelationNotSatisfied:
        pass
    sigma = BipartiteState(params, np.outer(_amps(lease), subspace_state(A2).amplitudes))
    return PirateOutput(sigma, lease.classical(), (g2, g2_perp, lease.c_obf, proof), {"proved": proved})


@dataclass
class MaulerResult:
    success: bool
    queries: int
    x: int | None = None
    circuit: CncCircuit | None = None
    lease: LeasedState | None = None
    sk: SecretKey | None = None


def bruteforce_mauler(crs: CommonReferenceString, lease: LeasedState, budget: int,
                      rng: np.random.Generator) -> MaulerResult:
    """Guess inputs against the salted lock digest of a toy-mode C_obf.

    With ``budget >= 2**n`` every input is tried in order; otherwise
    ``budget`` uniform guesses are made. On a hit the circuit is rebuilt
    from the public inner program and leased under a self-generated key.
    """
    h = lease.c_obf
    if getattr(h, "mode", None) != "toy":
        raise ValueError("the brute-force mauler needs a toy-mode obfuscation")
    n = h.n
    exhaustive = budget >= (1 << n)
    guesses = range(1 << n) if exhaustive else (draw_bits(rng, n) for _ in range(max(0, budget)))
    queries = 0
    for x in guesses:
        queries += 1
        alpha = h.inner(x)
        if lock_digest(h.salt, alpha, h.m) != h.digest:
            continue
        msg = qiho_eval(h, x) if h.sealed_msg is not None else None
        rebuilt = CncCircuit(h.inner, alpha, msg, h.msg_bits,
                             SearchTag("custom", search_fn=lambda _c, _x=x: _x))
        sk2 = gen(crs, rng)
        return MaulerResult(True, queries, x, rebuilt, lessor(crs, sk2, rebuilt, rng), sk2)
    return MaulerResult(False, queries)


def _mauler_fn(budget: int) -> PirateFn:
    def fn(crs, lease, rng) -> PirateOutput:
        res = bruteforce_mauler(crs, lease, budget, rng)
        if not res.success:
            sigma = BipartiteState(crs.params, np.outer(_amps(lease), _zero_state(crs.params)))
            return PirateOutput(sigma, lease.classical(), None, {"queries": res.queries})
        sigma = BipartiteState(crs.params, np.outer(_amps(lease), _amps(res.lease)))
        return PirateOutput(sigma, lease.classical(), res.lease.classical(),
                            {"queries": res.queries, "success": True})
    return fn


def make_strategy(kind: str, **params) -> PirateStrategy:
    if kind == "honest_return":
        return PirateStrategy(kind, _honest_return, params)
    if kind == "measure_reprepare_duplicate":
        return PirateStrategy(kind, _measure_reprepare, params)
    if kind == "fourier_measure_duplicate":
        return PirateStrategy(kind, _fourier_measure, params)
    if kind == "classical_copy_fresh_subspace":
        return PirateStrategy(kind, _fresh_subspace, params)
    if kind == "budget_bruteforce_mauler":
        return PirateStrategy(kind, _mauler_fn(int(params.get("budget", 1 << 10))), params)
    if kind == "custom":
        if "fn" not in params:
            raise ValueError("custom strategies need fn=")
        fn = params.pop("fn")
        return PirateStrategy(kind, fn, params)
    raise ValueError(f"unknown strategy kind {kind!r}")


def product_strategy(second: Callable[[CommonReferenceString, LeasedState, np.random.Generator], np.ndarray],
                     copy_classical: bool = True, name: str = "product") -> PirateStrategy:
    """Return the lease untouched on R1 and ``second(...)`` on R2."""
    def fn(crs, lease, rng) -> PirateOutput:
        v = np.asarray(second(crs, lease, rng), dtype=np.complex128)
        sigma = BipartiteState.from_unnormalized(crs.params, np.outer(_amps(lease), v))
        return PirateOutput(sigma, lease.classical(), lease.classical() if copy_classical else None)
    return PirateStrategy("custom", fn, {"name": name})


def entangled_strategy(branch: Callable[[CommonReferenceString, LeasedState, np.random.Generator],
                                        tuple[np.ndarray, np.ndarray, np.ndarray]],
                       name: str = "entangled") -> PirateStrategy:
    """(|A>|u> + |w>|v>)/norm, with ``branch`` returning (u, w, v)."""
    def fn(crs, lease, rng) -> PirateOutput:
        u, w, v = (np.asarray(t, dtype=np.complex128) for t in branch(crs, lease, rng))
        amps = np.outer(_amps(lease), u) + np.outer(w, v)
        sigma = BipartiteState.from_unnormalized(crs.params, amps)
        return PirateOutput(sigma, lease.classical(), lease.classical())
    return PirateStrategy("custom", fn, {"name": name})


# --- agreement ---------------------------------------------------------------

def _copy_lease(classical: tuple, quantum) -> LeasedState:
    g, g_perp, c_obf, proof = classical
    return LeasedState(quantum, g, g_perp, c_obf, proof)


def _truth(circuit, n: int) -> np.ndarray:
    return np.fromiter((circuit(x) for x in range(1 << n)), dtype=np.int64, count=1 << n)


def estimate_run_agreement(crs: CommonReferenceString, copy: LeasedState | None, circuit,
                           mode: str = "exhaustive", trials: int = SAMPLED_INPUTS,
                           rng: np.random.Generator | None = None) -> float:
    """min over x of Pr[Run(copy, x) = C(x)].

    ``exhaustive`` uses the exact Born probability for every x (n <= 8).
    ``sampled`` runs the copy once per sampled x and returns the Wilson
    lower bound of the success fraction.
    """
    if copy is None:
        return 0.0
    n = circuit.n
    if mode == "exhaustive":
        if n > EXHAUSTIVE_MAX_N:
            raise ValueError(f"exhaustive agreement needs n <= {EXHAUSTIVE_MAX_N}")
        p = run_accept_probability(crs, copy)
        if p <= 0.0:
            return 0.0
        for x in range(1 << n):
            if copy.c_obf(x) != circuit(x):
                return 0.0
        return min(p, 1.0)
    if mode != "sampled":
        raise ValueError("mode must be 'exhaustive' or 'sampled'")
    if rng is None:
        raise ValueError("sampled agreement needs an rng")
    hits = 0
    for _ in range(trials):
        x = draw_bits(rng, n)
        res = run(crs, copy.copy(), x, rng)
        hits += int(res.output is not None and res.output == circuit(x))
    return wilson(hits, trials)[0]


def _exact_agreement(crs, copy: LeasedState | None, truth: np.ndarray) -> float:
    if copy is None:
        return 0.0
    p = run_accept_probability(crs, copy)
    if p <= 1e-15:
        return 0.0
    outs = np.fromiter((copy.c_obf(x) for x in range(len(truth))), dtype=np.int64, count=len(truth))
    return float(min(p, 1.0)) if np.array_equal(outs, truth) else 0.0


def _sampled_agreement(crs, copy: LeasedState | None, circuit, rng) -> float:
    """Minimum over sampled x of the exact per-x agreement (n > 8)."""
    if copy is None:
        return 0.0
    p = run_accept_probability(crs, copy)
    if p <= 1e-15:
        return 0.0
    xs = [draw_bits(rng, circuit.n) for _ in range(SAMPLED_INPUTS)]
    return float(min(p, 1.0)) if all(copy.c_obf(x) == circuit(x) for x in xs) else 0.0


# --- statistics --------------------------------------------------------------

def wilson(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n <= 0:
        return (0.0, 1.0)
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return (float(ci.low), float(ci.high))


def rate_block(k: int, n: int) -> dict:
    p = k / n if n else 0.0
    se = math.sqrt(p * (1 - p) / n) if n else 0.0
    lo, hi = wilson(k, n)
    return {"count": int(k), "rate": p, "stderr": se, "wilson95": [lo, hi]}


# --- experiments -------------------------------------------------------------

@dataclass(frozen=True)
class SchemeConfig:
    q: int = 2
    lam: int = 6
    n: int = 5
    mode: str = "ideal"
    seed: int = 0
    beta: float = DEFAULT_BETA
    family: str = "point"

    @property
    def params(self) -> FieldParams:
        return FieldParams(self.q, self.lam)

    def to_json(self) -> dict:
        return {"q": self.q, "lambda": self.lam, "n": self.n, "mode": self.mode,
                "seed": self.seed, "beta": self.beta, "family": self.family}


CircuitSampler = Callable[[np.random.Generator], CncCircuit]


def default_sampler(config: SchemeConfig) -> CircuitSampler:
    return lambda rng: sample_unpredictable(config.n, None, rng, config.family).circuit


@dataclass
class ExperimentReport:
    experiment: str
    strategy: str
    config: dict
    trials: int
    counts: dict
    agreement_mode: str
    extra: dict = field(default_factory=dict)

    @property
    def check_pass(self) -> int:
        return self.counts.get("check_pass", 0)

    @property
    def joint_success(self) -> int:
        return self.counts.get("joint_success", 0)

    def rate(self, key: str) -> float:
        return self.counts.get(key, 0) / self.trials if self.trials else 0.0

    def to_json(self) -> dict:
        return {"experiment": self.experiment, "strategy": self.strategy, "config": self.config,
                "rng": ALGORITHM, "trials": self.trials, "agreement_mode": self.agreement_mode,
                "rates": {k: rate_block(v, self.trials) for k, v in sorted(self.counts.items())},
                "extra": self.extra}

    def csv_row(self) -> dict:
        row = {"experiment": self.experiment, "strategy": self.strategy, "trials": self.trials,
               "seed": self.config.get("seed")}
        for k, v in sorted(self.counts.items()):
            row[k] = v
            row[k + "_rate"] = self.rate(k)
        return row


def _trial_setup(config: SchemeConfig, oracle=None):
    from .oracles import DEFAULT_NIZK
    return setup(config.params, config.mode, make_rng(config.seed, SETUP_STREAM), oracle or DEFAULT_NIZK)


def _register2_lease(classical2, reduced: DensityOperator) -> LeasedState | None:
    if classical2 is None:
        return None
    return _copy_lease(classical2, reduced)


def finite_term_experiment(strategy: PirateStrategy, config: SchemeConfig,
                           sampler: CircuitSampler | None = None, trials: int = 100,
                           crs: CommonReferenceString | None = None) -> ExperimentReport:
    """Finite-term game, one independent rng stream per trial.

    Per trial: lease a fresh circuit, let the pirate act, run Check on R1,
    and take R2's conditional state. Counters:

    ``check_pass``        Check accepted R1.
    ``joint_success``     Check accepted and the kept copy agrees with C with
                          probability >= beta on every input.
    ``copy2_projection``  a sampled Run on R2 (after Check, whichever branch)
                          passed both membership measurements.
    ``joint_sampled``     Check accepted and that sampled Run returned C(x).
    """
    sampler = sampler or default_sampler(config)
    crs = crs or _trial_setup(config)
    exhaustive = config.n <= EXHAUSTIVE_MAX_N
    counts = {"check_pass": 0, "joint_success": 0, "copy2_projection": 0, "joint_sampled": 0}
    for t in range(trials):
        rng = make_rng(config.seed, t)
        circuit = sampler(rng)
        sk = gen(crs, rng)
        lease = lessor(crs, sk, circuit, rng)
        out = strategy(crs, lease, rng)
        accepted, reduced2, _ = conditional_second_register(out.sigma, sk.A, rng)
        copy2 = _register2_lease(out.classical2, reduced2)
        if accepted:
            counts["check_pass"] += 1
            if exhaustive:
                agree = _exact_agreement(crs, copy2, _truth(circuit, circuit.n))
            else:
                agree = _sampled_agreement(crs, copy2, circuit, rng)
            if agree >= config.beta:
                counts["joint_success"] += 1
        if copy2 is not None:
            x = draw_bits(rng, circuit.n)
            res = run(crs, copy2, x, rng)
            if res.a and res.b and res.c:
                counts["copy2_projection"] += 1
                if accepted and res.output == circuit(x):
                    counts["joint_sampled"] += 1
    return ExperimentReport("finite_term", strategy.name, config.to_json(), trials, counts,
                            "exhaustive" if exhaustive else "sampled")


def _run_register1(crs, classical1, sigma: BipartiteState, x: int, rng):
    """Run copy 1 on R1 of ``sigma``; returns (output, post bipartite amplitudes)."""
    lease1 = _copy_lease(classical1, None)
    if not verify_lease(crs, lease1):
        return None, sigma.amplitudes
    params = crs.params
    g, g_perp = lease1.g, lease1.g_perp
    a, b, _, post = two_step_projection_array(sigma.amplitudes, params, g.mask(params),
                                              g_perp.mask(params), rng, axis=0)
    if not (a and b):
        return None, post
    return int(lease1.c_obf(x)), post


def infinite_term_experiment(strategy: PirateStrategy, config: SchemeConfig,
                             sampler: CircuitSampler | None = None, trials: int = 100,
                             crs: CommonReferenceString | None = None) -> ExperimentReport:
    """Infinite-term game: no Check; the pirate must keep two working copies.

    Per trial: sample x, run copy 1 on R1, then score R2's post-run state.
    ``both_success`` needs copy 1 to output C(x) and copy 2 to agree with C
    with probability >= beta on every input. When copy 1 returned ⊥ the
    copy-2 score is tallied under ``rejected_branch_copy2_success`` instead.
    ``copy1_projection`` / ``copy2_projection`` count sampled acceptances
    and ``both_sampled`` counts trials where a sampled copy-2 Run at the
    same x also returned C(x).
    """
    sampler = sampler or default_sampler(config)
    crs = crs or _trial_setup(config)
    exhaustive = config.n <= EXHAUSTIVE_MAX_N
    counts = {"copy1_success": 0, "copy1_projection": 0, "copy2_projection": 0, "both_success": 0,
              "both_sampled": 0, "rejected_branch_copy2_success": 0}
    for t in range(trials):
        rng = make_rng(config.seed, t)
        circuit = sampler(rng)
        sk = gen(crs, rng)
        lease = lessor(crs, sk, circuit, rng)
        out = strategy(crs, lease, rng)
        x = draw_bits(rng, circuit.n)
        y1, post = _run_register1(crs, out.classical1, out.sigma, x, rng)
        ok1 = y1 is not None and y1 == circuit(x)
        counts["copy1_projection"] += int(y1 is not None)
        counts["copy1_success"] += int(ok1)
        reduced2 = partial_trace_first(BipartiteState.from_unnormalized(crs.params, post))
        copy2 = _register2_lease(out.classical2, reduced2)
        if exhaustive:
            agree = _exact_agreement(crs, copy2, _truth(circuit, circuit.n))
        else:
            agree = _sampled_agreement(crs, copy2, circuit, rng)
        if agree >= config.beta:
            if ok1:
                counts["both_success"] += 1
            elif y1 is None:
                counts["rejected_branch_copy2_success"] += 1
        if copy2 is not None:
            res = run(crs, copy2, x, rng)
            if res.output is not None:
                counts["copy2_projection"] += 1
                if ok1 and res.output == circuit(x):
                    counts["both_sampled"] += 1
    return ExperimentReport("infinite_term", strategy.name, config.to_json(), trials, counts,
                            "exhaustive" if exhaustive else "sampled")


def check_then_measure_direct(sigma: BipartiteState, sk: SecretKey, copy2_classical: tuple,
                              crs: CommonReferenceString, rng: np.random.Generator) -> tuple[int, int]:
    """Reference path for the conditional-state shortcut.

    Applies Check to R1 and the Run projection to R2 on the joint state
    directly, never forming a reduced density matrix. Returns the two bits.
    """
    from .states import rank_one_measure_array
    params = crs.params
    bit1, _, post = rank_one_measure_array(sigma.amplitudes, subspace_state(sk.A).amplitudes, rng, axis=0)
    lease2 = _copy_lease(copy2_classical, None)
    if not verify_lease(crs, lease2):
        return bit1, 0
    a, b, _, _ = two_step_projection_array(post, params, lease2.g.mask(params),
                                           lease2.g_perp.mask(params), rng, axis=1)
    return bit1, int(a and b)


def marginals(sigma: BipartiteState) -> tuple[DensityOperator, DensityOperator]:
    return partial_trace_second(sigma), partial_trace_first(sigma)
