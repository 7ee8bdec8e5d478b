"""The leasing scheme: setup, gen, lessor, run, check.

A lease pairs the subspace state |A> with public membership oracles for A
and its dual, an obfuscation of the circuit, and a proof tying the three
together. Run projects the quantum part onto |A> before evaluating, so a
lease only works while it still holds the state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuits import CncCircuit, accepts, search
from .field import FieldParams, Subspace, random_subspace
from .oracles import (DEFAULT_NIZK, InputHidingObfHandle, NizkCrs, NizkOracle, NizkProof,
                      SubspaceObfHandle, _check_mode, obfuscate_circuit, sho_obf)
from .rng import draw_seed
from .states import (ATOL, DensityOperator, PureState, check_cap, rank_one_measure_array,
                     subspace_state, trace_distance, two_step_acceptance,
                     two_step_projection_array)

RELATION_ID = "lease-relation-v1"


@dataclass(frozen=True)
class LeaseWitness:
    A: Subspace
    r_o: int
    r_A: int
    r_A_perp: int
    circuit: object
    x: int | None


def lease_relation(statement, witness) -> bool:
    """The NP relation proven by the lessor.

    The three obfuscations must re-derive bit for bit from the recorded
    seeds, and ``x`` must be accepted. Circuits outside the compute-and-compare
    class carry no accepting point, so the last conjunct is skipped for them.
    """
    try:
        g, g_perp, c_obf = statement
    except (TypeError, ValueError):
        return False
    if not isinstance(witness, LeaseWitness) or not isinstance(g, SubspaceObfHandle):
        return False
    A = witness.A
    if g != sho_obf(A, seed=witness.r_A, mode=g.mode):
        return False
    if g_perp != sho_obf(A.dual(), seed=witness.r_A_perp, mode=g.mode):
        return False
    if c_obf != obfuscate_circuit(witness.circuit, witness.r_o, mode=g.mode):
        return False
    if isinstance(witness.circuit, CncCircuit):
        return witness.x is not None and accepts(witness.circuit, witness.x)
    return True


@dataclass(frozen=True)
class CommonReferenceString:
    nizk_crs: NizkCrs
    params: FieldParams
    mode: str = "ideal"

    def __post_init__(self):
        if self.nizk_crs.relation_id != RELATION_ID:
            raise ValueError("CRS is not bound to the lease relation")

    def to_json(self) -> dict:
        return {"q": self.params.q, "lambda": self.params.lam, "mode": self.mode,
                "nizk": self.nizk_crs.to_json()}


@dataclass(frozen=True)
class SecretKey:
    A: Subspace

    def to_json(self) -> dict:
        return {"A": self.A.to_json()}


@dataclass
class LeasedState:
    """Mutable: measurements replace ``quantum`` in place (single writer)."""
    quantum: PureState | DensityOperator
    g: SubspaceObfHandle
    g_perp: SubspaceObfHandle
    c_obf: object
    proof: NizkProof | None

    @property
    def statement(self) -> tuple:
        return (self.g, self.g_perp, self.c_obf)

    def classical(self) -> tuple:
        return (self.g, self.g_perp, self.c_obf, self.proof)

    def copy(self) -> LeasedState:
        return LeasedState(self.quantum, self.g, self.g_perp, self.c_obf, self.proof)


@dataclass
class RunResult:
    output: int | None
    post_lease: LeasedState
    a: int | None = None
    b: int | None = None
    c: int = 0
    details: dict = field(default_factory=dict)

    @property
    def rejected(self) -> bool:
        return self.output is None


def register_relation(oracle: NizkOracle = DEFAULT_NIZK) -> None:
    oracle.register_relation(RELATION_ID, lease_relation)


def setup(params: FieldParams, mode: str = "ideal", rng: np.random.Generator | None = None,
          oracle: NizkOracle = DEFAULT_NIZK) -> CommonReferenceString:
    _check_mode(mode)
    if params.lam % 2:
        raise ValueError("lambda must be even")
    check_cap(params)
    register_relation(oracle)
    return CommonReferenceString(oracle.crsgen(RELATION_ID, rng), params, mode)


def gen(crs: CommonReferenceString, rng: np.random.Generator) -> SecretKey:
    return SecretKey(random_subspace(crs.params, crs.params.lam // 2, rng))


def lessor(crs: CommonReferenceString, sk: SecretKey, circuit, rng: np.random.Generator) -> LeasedState:
    """Lease ``circuit`` under ``sk``.

    Compute-and-compare circuits must be searchable; ``search`` errors
    propagate. Other programs (e.g. the de-quantumizable family) are wrapped
    without an accepting point.
    """
    A = sk.A
    x = search(circuit) if isinstance(circuit, CncCircuit) else None
    r_o, r_A, r_A_perp = draw_seed(rng), draw_seed(rng), draw_seed(rng)
    c_obf = obfuscate_circuit(circuit, r_o, mode=crs.mode)
    g = sho_obf(A, seed=r_A, mode=crs.mode)
    g_perp = sho_obf(A.dual(), seed=r_A_perp, mode=crs.mode)
    witness = LeaseWitness(A, r_o, r_A, r_A_perp, circuit, x)
    proof = crs.nizk_crs.oracle.prove(crs.nizk_crs, (g, g_perp, c_obf), witness, rng)
    return LeasedState(subspace_state(A), g, g_perp, c_obf, proof)


def verify_lease(crs: CommonReferenceString, lease: LeasedState) -> int:
    return int(crs.nizk_crs.oracle.verify(crs.nizk_crs, lease.statement, lease.proof))


def _pure_component(q, rng: np.random.Generator | None) -> np.ndarray:
    """Amplitudes of ``q``; a mixed state is unravelled into one eigenvector."""
    if isinstance(q, PureState):
        return q.amplitudes
    w, v = np.linalg.eigh(q.matrix)
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    if w.max() > 1 - 1e-12:
        return v[:, int(np.argmax(w))]
    if rng is None:
        raise ValueError("an rng is required to sample a mixed state")
    return v[:, int(rng.choice(len(w), p=w))]


def _input_length(c_obf) -> int:
    return int(c_obf.n)


def run(crs: CommonReferenceString, lease: LeasedState, x: int, rng: np.random.Generator | None = None,
        force: tuple[int, int] | None = None) -> RunResult:
    """Evaluate the leased circuit at ``x``.

    The proof is checked first; a failing proof returns ⊥ (``None``) with the
    quantum part untouched. Otherwise the two membership measurements run and
    ⊥ is returned unless both accept. ``lease.quantum`` is replaced by the
    post-measurement state either way.
    """
    n = _input_length(lease.c_obf)
    if not 0 <= int(x) < (1 << n):
        raise ValueError(f"input must be an {n}-bit string")
    c = verify_lease(crs, lease)
    if not c:
        return RunResult(None, lease, None, None, 0)
    params = lease.g.params
    psi = _pure_component(lease.quantum, rng)
    a, b, prob, post = two_step_projection_array(psi, params, lease.g.mask(params),
                                                 lease.g_perp.mask(params), rng, force=force)
    lease.quantum = PureState.from_unnormalized(params, post)
    if not (a and b):
        return RunResult(None, lease, a, b, c, {"probability": prob})
    return RunResult(int(lease.c_obf(int(x))), lease, a, b, c, {"probability": prob})


def run_accept_probability(crs: CommonReferenceString, lease: LeasedState) -> float:
    """Probability that ``run`` does not return ⊥ (independent of x)."""
    if not verify_lease(crs, lease):
        return 0.0
    params = lease.g.params
    m1, m2 = lease.g.mask(params), lease.g_perp.mask(params)
    q = lease.quantum
    if isinstance(q, PureState):
        return two_step_acceptance(q.amplitudes, params, m1, m2)
    w, v = np.linalg.eigh(q.matrix)
    return float(sum(max(wi, 0.0) * two_step_acceptance(v[:, i], params, m1, m2)
                     for i, wi in enumerate(w) if wi > 1e-15))


def check(sk: SecretKey, lease: LeasedState, rng: np.random.Generator | None = None,
          force: int | None = None) -> int:
    """Measure {|A><A|, I - |A><A|}; the post-measurement state stays in the lease."""
    params = sk.A.params
    psi = _pure_component(lease.quantum, rng)
    bit, _, post = rank_one_measure_array(psi, subspace_state(sk.A).amplitudes, rng, force=force)
    lease.quantum = PureState.from_unnormalized(params, post)
    return bit


def run_reusable(crs: CommonReferenceString, lease: LeasedState, x: int,
                 rng: np.random.Generator | None = None) -> RunResult:
    """``run`` plus a disturbance audit.

    Records the trace distance between the pre- and post-run quantum parts
    and asserts it respects the gentle-measurement bound sqrt(1 - p_accept);
    for an honest lease that bound is 0.
    """
    before = lease.quantum
    p_acc = run_accept_probability(crs, lease)
    result = run(crs, lease, x, rng)
    dist = trace_distance(before, lease.quantum)
    result.details["disturbance"] = dist
    result.details["accept_probability"] = p_acc
    bound = math.sqrt(max(0.0, 1.0 - p_acc))
    result.details["bound"] = bound
    if result.output is not None and dist > bound + ATOL:
        raise AssertionError(f"run disturbed the lease by {dist} > {bound}")
    return result


# --- serialization -----------------------------------------------------------

def lease_to_json(lease: LeasedState, include_sealed: bool = True) -> dict:
    """Classical parts of a lease. ``include_sealed`` stores the ideal-oracle
    contents of the membership handles so another process can reload them."""
    def sho(h: SubspaceObfHandle) -> dict:
        d = h.to_json()
        if include_sealed:
            d["sealed"] = h.sealed_json()
        return d

    if not isinstance(lease.c_obf, InputHidingObfHandle):
        raise ValueError("only compute-and-compare leases can be serialized")
    return {"g": sho(lease.g), "g_perp": sho(lease.g_perp), "c_obf": lease.c_obf.to_json(),
            "proof": lease.proof.to_json() if lease.proof is not None else None}


def lease_from_json(data: dict, quantum: PureState) -> LeasedState:
    def sho(d: dict) -> SubspaceObfHandle:
        if "sealed" not in d:
            raise ValueError("membership handle has no sealed contents")
        return SubspaceObfHandle(d["token"], d["mode"], Subspace.from_json(d["sealed"], strict=True))

    proof = NizkProof.from_json(data["proof"]) if data.get("proof") else None
    return LeasedState(quantum, sho(data["g"]), sho(data["g_perp"]),
                       InputHidingObfHandle.from_json(data["c_obf"]), proof)
