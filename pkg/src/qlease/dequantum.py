"""The de-quantumizable circuit family and the extraction attack on it.

A family member C_{a,b,r,pk,O} hands out, on input 0...0, an encryption of
its secret point a together with a lockable obfuscation O that releases
(sk | r) to anyone presenting an encryption of b. Whoever can run the
circuit homomorphically turns ct(a) into ct(b), unlocks O, decrypts, and
rebuilds the circuit exactly. Oracle access alone never finds a.

The homomorphic encryption is an ideal functionality: ciphertexts are
keystream-masked and tagged, and evaluation happens inside a sealed
decrypt-run-re-encrypt boundary keyed by the public key.
"""
from __future__ import annotations

import hashlib
import hmac
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .circuits import is_functionally_equal, EXHAUSTIVE_LIMIT
from .oracles import LockableObfHandle, keystream, lo_eval, lo_obf, lo_resolve, LO_TOKEN_BITS
from .rng import draw_bits

KEY_BITS = 64
PK_BITS = 64
R_BITS = 64


class FheTagError(ValueError):
    pass


class ExtractionError(RuntimeError):
    pass


def _mac(key: bytes, *parts: int) -> int:
    msg = b"|".join(str(p).encode() for p in parts)
    return int.from_bytes(hmac.new(key, msg, hashlib.sha256).digest(), "big")


def _key_bytes(sk: int) -> bytes:
    return int(sk).to_bytes(KEY_BITS // 8, "big")


@dataclass(frozen=True)
class FheLayout:
    msg_bits: int
    nonce_bits: int
    tag_bits: int

    @property
    def ct_bits(self) -> int:
        return self.nonce_bits + self.msg_bits + self.tag_bits

    def pack(self, nonce: int, payload: int, tag: int) -> int:
        return (nonce << (self.msg_bits + self.tag_bits)) | (payload << self.tag_bits) | tag

    def unpack(self, ct: int) -> tuple[int, int, int]:
        tag = ct & ((1 << self.tag_bits) - 1)
        payload = (ct >> self.tag_bits) & ((1 << self.msg_bits) - 1)
        nonce = ct >> (self.msg_bits + self.tag_bits)
        return nonce, payload, tag


@dataclass(frozen=True)
class ToyFheKeypair:
    pk: int
    sk: int = field(repr=False)


def _pad(sk: int, nonce: int, nbits: int) -> int:
    return keystream(b"fhe-pad" + _key_bytes(sk) + nonce.to_bytes(16, "big"), nbits)


def _tag(sk: int, layout: FheLayout, nonce: int, payload: int) -> int:
    return _mac(_key_bytes(sk), "tag", nonce, payload) >> (256 - layout.tag_bits) if layout.tag_bits else 0


def encrypt_with_key(sk: int, layout: FheLayout, msg: int, r: int) -> int:
    if not 0 <= msg < (1 << layout.msg_bits):
        raise ValueError("message does not fit the layout")
    nonce = _mac(b"fhe-nonce", r) >> (256 - layout.nonce_bits)
    payload = msg ^ _pad(sk, nonce, layout.msg_bits)
    return layout.pack(nonce, payload, _tag(sk, layout, nonce, payload))


def fhe_decrypt(sk: int, ct: int, layout: FheLayout) -> int:
    nonce, payload, tag = layout.unpack(int(ct))
    if not hmac.compare_digest(tag.to_bytes(32, "big"), _tag(sk, layout, nonce, payload).to_bytes(32, "big")):
        raise FheTagError("ciphertext tag mismatch")
    return payload ^ _pad(sk, nonce, layout.msg_bits)


class FheOracle:
    """Ideal functionality: maps public keys to their secret keys.

    Only :meth:`encrypt` and :meth:`eval` consult the table; every access
    is appended to ``log``.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._keys: dict[int, int] = {}
        self.log: list[tuple] = []

    def keygen(self, rng: np.random.Generator) -> ToyFheKeypair:
        sk = draw_bits(rng, KEY_BITS)
        pk = _mac(b"fhe-pk", sk) >> (256 - PK_BITS)
        with self._lock:
            self._keys[pk] = sk
        return ToyFheKeypair(pk, sk)

    def _sk(self, pk: int) -> int:
        with self._lock:
            if pk not in self._keys:
                raise KeyError(f"unknown public key {pk:#x}")
            return self._keys[pk]

    def encrypt(self, pk: int, msg: int, r: int, layout: FheLayout) -> int:
        return encrypt_with_key(self._sk(pk), layout, msg, r)

    def eval(self, pk: int, evaluator: Callable[[int], int], ct: int, layout: FheLayout) -> int:
        """Encryption of ``evaluator(Dec(ct))``, produced inside the sealed boundary."""
        sk = self._sk(pk)
        x = fhe_decrypt(sk, ct, layout)
        y = int(evaluator(x))
        if not 0 <= y < (1 << layout.msg_bits):
            raise ValueError("evaluator output does not fit the ciphertext layout")
        r = _mac(_key_bytes(sk), "re-encrypt", ct, y) >> (256 - R_BITS)
        with self._lock:
            self.log.append(("eval", pk))
        return encrypt_with_key(sk, layout, y, r)


DEFAULT_FHE = FheOracle()


def fhe_keygen(rng: np.random.Generator, oracle: FheOracle = DEFAULT_FHE) -> ToyFheKeypair:
    return oracle.keygen(rng)


def fhe_encrypt(pk: int, msg: int, r: int, layout: FheLayout, oracle: FheOracle = DEFAULT_FHE) -> int:
    return oracle.encrypt(pk, msg, r, layout)


def fhe_eval(pk: int, evaluator: Callable[[int], int], ct: int, layout: FheLayout,
             oracle: FheOracle = DEFAULT_FHE) -> int:
    return oracle.eval(pk, evaluator, ct, layout)


@dataclass(frozen=True)
class FheDecryptCircuit:
    """QFHE.Dec(sk, .) as a total circuit: output is valid-bit | message."""
    sk: int = field(repr=False)
    layout: FheLayout

    @property
    def n(self) -> int:
        return self.layout.ct_bits

    @property
    def m(self) -> int:
        return 1 + self.layout.msg_bits

    def __call__(self, ct: int) -> int:
        try:
            return (1 << self.layout.msg_bits) | fhe_decrypt(self.sk, ct, self.layout)
        except FheTagError:
            return 0


# --- the family --------------------------------------------------------------

@dataclass(frozen=True)
class FamilyLayout:
    lambda_bits: int
    nonce_bits: int
    tag_bits: int
    n: int

    @classmethod
    def default(cls, lambda_bits: int, n: int | None = None) -> FamilyLayout:
        ct = 3 * lambda_bits
        minimum = max(ct, lambda_bits)
        if n is None:
            n = minimum
        if n < minimum:
            raise ValueError(f"n must be at least {minimum} to hold the padded ciphertext")
        return cls(lambda_bits, lambda_bits, lambda_bits, n)

    @property
    def fhe(self) -> FheLayout:
        return FheLayout(self.lambda_bits, self.nonce_bits, self.tag_bits)

    @property
    def ct_bits(self) -> int:
        return self.fhe.ct_bits

    @property
    def m(self) -> int:
        return self.ct_bits + LO_TOKEN_BITS + PK_BITS

    def pack_zero_output(self, ct1: int, token: int, pk: int) -> int:
        return (ct1 << (LO_TOKEN_BITS + PK_BITS)) | (token << PK_BITS) | pk

    def unpack_zero_output(self, y: int) -> tuple[int, int, int]:
        pk = y & ((1 << PK_BITS) - 1)
        token = (y >> PK_BITS) & ((1 << LO_TOKEN_BITS) - 1)
        ct1 = y >> (LO_TOKEN_BITS + PK_BITS)
        return ct1, token, pk

    def to_json(self) -> dict:
        return {"lambda_bits": self.lambda_bits, "nonce_bits": self.nonce_bits,
                "tag_bits": self.tag_bits, "n": self.n, "m": self.m}


@dataclass(frozen=True)
class DequantumizableCircuit:
    a: int
    b: int
    r: int
    pk: int
    lo: LockableObfHandle
    layout: FamilyLayout
    ct1: int

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def m(self) -> int:
        return self.layout.m

    def __call__(self, x: int) -> int:
        x = int(x)
        if x == 0:
            return self.layout.pack_zero_output(self.ct1, int(self.lo.token, 16), self.pk)
        if x == self.a:
            return self.b
        return 0

    def params(self) -> tuple:
        return (self.a, self.b, self.r, self.pk, self.lo.token)

    def to_json(self) -> dict:
        return {"kind": "dequantumizable", "layout": self.layout.to_json(), "lo_token": self.lo.token,
                "pk": format(self.pk, "016x")}


def build_family_circuit(a: int, b: int, r: int, pk: int, lo: LockableObfHandle, layout: FamilyLayout,
                         oracle: FheOracle = DEFAULT_FHE) -> DequantumizableCircuit:
    ct1 = oracle.encrypt(pk, a, r, layout.fhe)
    return DequantumizableCircuit(a, b, r, pk, lo, layout, ct1)


def sample_family(lambda_bits: int, n: int | None, rng: np.random.Generator,
                  oracle: FheOracle = DEFAULT_FHE) -> DequantumizableCircuit:
    """Uniform a != 0, b, r, a fresh keypair, and O = LO[Dec(sk, .), 1|b, sk|r]."""
    layout = FamilyLayout.default(lambda_bits, n)
    a = 0
    while a == 0:
        a = draw_bits(rng, lambda_bits)
    b = draw_bits(rng, lambda_bits)
    r = draw_bits(rng, R_BITS)
    keys = oracle.keygen(rng)
    dec = FheDecryptCircuit(keys.sk, layout.fhe)
    lock = (1 << lambda_bits) | b
    lo = lo_obf(dec, lock, (keys.sk << R_BITS) | r, rng, beta_bits=KEY_BITS + R_BITS)
    return build_family_circuit(a, b, r, keys.pk, lo, layout, oracle)


# --- implementations ---------------------------------------------------------

class AccessLog:
    """Append-only, thread-safe record of how an implementation was used."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: list[tuple[str, int | None]] = []

    def append(self, kind: str, x: int | None) -> None:
        with self._lock:
            self._entries.append((kind, x))

    @property
    def entries(self) -> list[tuple[str, int | None]]:
        with self._lock:
            return list(self._entries)

    def direct_inputs(self) -> list[int]:
        return [x for k, x in self.entries if k == "direct"]

    def homomorphic_calls(self) -> int:
        return sum(1 for k, _ in self.entries if k == "homomorphic")


class QuantumImplementation:
    """Stand-in for (U_C, rho_C): a program plus optional errors at the point a.

    Direct calls are logged with their input; calls made inside the FHE
    boundary are logged only as ``homomorphic``.
    """

    def __init__(self, program: Callable[[int], int], n: int, epsilon: float = 0.0,
                 error_point: int | None = None, rng: np.random.Generator | None = None):
        self.program = program
        self.n = n
        self.epsilon = float(epsilon)
        self.error_point = error_point
        self.rng = rng
        self.log = AccessLog()

    def _compute(self, x: int) -> int:
        y = self.program(x)
        if self.epsilon and x == self.error_point and self.rng.random() < self.epsilon:
            y ^= 1
        return y

    def evaluate(self, x: int) -> int:
        self.log.append("direct", int(x))
        return self._compute(int(x))

    def sealed(self, x: int) -> int:
        self.log.append("homomorphic", None)
        return self._compute(int(x))

    def state_ok(self) -> bool:
        return True


class LeaseImplementation(QuantumImplementation):
    """Runs a leased program through ``run_reusable``; ⊥ reads as 0."""

    def __init__(self, crs, lease, rng: np.random.Generator):
        from .states import trace_distance
        self._trace_distance = trace_distance
        self.crs, self.lease = crs, lease
        self._initial = lease.quantum
        self.max_disturbance = 0.0
        super().__init__(self._run, lease.c_obf.n, rng=rng)

    def _run(self, x: int) -> int:
        from .scheme import run_reusable
        res = run_reusable(self.crs, self.lease, x, self.rng)
        self.max_disturbance = max(self.max_disturbance, res.details["disturbance"])
        return 0 if res.output is None else int(res.output)

    def disturbance(self) -> float:
        return self._trace_distance(self._initial, self.lease.quantum)

    def state_ok(self, atol: float = 1e-9) -> bool:
        return self.disturbance() <= atol


@dataclass
class ExtractionResult:
    circuit: DequantumizableCircuit
    recovered_state_ok: bool
    trace: dict


def attack_extract(impl: QuantumImplementation, layout: FamilyLayout,
                   oracle: FheOracle = DEFAULT_FHE) -> ExtractionResult:
    """Rebuild the circuit from one query at 0...0 and one homomorphic run."""
    trace: dict = {"queries": [0]}
    y0 = impl.evaluate(0)
    ct1, token, pk = layout.unpack_zero_output(y0)
    trace.update(ct1=ct1, lo_token=format(token, "016x"), pk=format(pk, "016x"))
    lo = lo_resolve(format(token, "016x"))
    if lo is None:
        raise ExtractionError("zero-input output carries no lockable obfuscation")
    low = (1 << layout.lambda_bits) - 1
    try:
        ct2 = oracle.eval(pk, lambda x: impl.sealed(x) & low, ct1, layout.fhe)
    except (KeyError, FheTagError) as exc:
        raise ExtractionError(f"homomorphic evaluation failed: {exc}") from exc
    trace["ct2"] = ct2
    payload = lo_eval(lo, ct2)
    if payload is None:
        raise ExtractionError("lock miss: the evaluated ciphertext does not open the obfuscation")
    sk, r = payload >> R_BITS, payload & ((1 << R_BITS) - 1)
    a, b = fhe_decrypt(sk, ct1, layout.fhe), fhe_decrypt(sk, ct2, layout.fhe)
    rebuilt = build_family_circuit(a, b, r, pk, lo, layout, oracle)
    trace["homomorphic_calls"] = impl.log.homomorphic_calls()
    return ExtractionResult(rebuilt, impl.state_ok(), trace)


@dataclass
class PirateResult:
    returned: object
    fresh: object
    fresh_sk: object
    extraction: ExtractionResult


def ssl_breaking_pirate(crs, lease, layout: FamilyLayout, rng: np.random.Generator,
                        oracle: FheOracle = DEFAULT_FHE) -> PirateResult:
    """Extract the leased family circuit, then lease it again under an own key."""
    from .scheme import gen, lessor
    impl = LeaseImplementation(crs, lease, rng)
    extraction = attack_extract(impl, layout, oracle)
    sk2 = gen(crs, rng)
    fresh = lessor(crs, sk2, extraction.circuit, rng)
    return PirateResult(lease, fresh, sk2, extraction)


# --- oracle-only baseline ------------------------------------------------------

@dataclass(frozen=True)
class LearnedCircuit:
    zero_output: int
    point: int | None
    value: int
    n: int

    def __call__(self, x: int) -> int:
        if x == 0:
            return self.zero_output
        if self.point is not None and x == self.point:
            return self.value
        return 0


@dataclass
class LearnerResult:
    success: bool
    queries: int
    circuit: LearnedCircuit


def oracle_learner_baseline(oracle: Callable[[int], int], layout: FamilyLayout, budget: int,
                            rng: np.random.Generator, planted: tuple[int, ...] = ()) -> LearnerResult:
    """Classical queries only: 0...0, any planted points, then uniform guesses.

    The learner's hypothesis is correct only if some query hit a; success is
    judged by exhaustive equality when n <= 20 and otherwise by agreement on
    every queried point plus a fresh sample.
    """
    queries = [0, *planted]
    while len(queries) < budget:
        queries.append(draw_bits(rng, layout.lambda_bits))
    queries = queries[:max(budget, 1)]
    answers = {}
    for x in queries:
        answers[x] = oracle(x)
    hits = [x for x, y in answers.items() if x != 0 and y != 0]
    point = hits[0] if hits else None
    guess = LearnedCircuit(answers[0], point, answers.get(point, 0) if point is not None else 0, layout.n)
    if layout.n <= EXHAUSTIVE_LIMIT:
        ok = is_functionally_equal(guess, oracle, layout.n)
    else:
        ok = point is not None and all(guess(x) == oracle(x) for x in queries)
    return LearnerResult(bool(ok), len(queries), guess)


def implementation_of(circuit: DequantumizableCircuit, epsilon: float = 0.0,
                      rng: np.random.Generator | None = None) -> QuantumImplementation:
    """Honest implementation of a family member, erring at a with probability epsilon."""
    return QuantumImplementation(circuit, circuit.n, epsilon, circuit.a, rng)
