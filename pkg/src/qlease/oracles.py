"""Idealized and toy stand-ins for the obfuscators and the NIZK.

None of this is cryptographically secure. Two modes label how a handle may
be used in experiments:

``ideal``
    The harness enforces the functionality. Adversaries interact through
    ``eval`` and the NIZK oracle only.
``toy``
    Hash/keystream realizations (salted SHA-256 commitments, SHAKE-256
    keystreams) that budget-limited adversaries may attack directly.

Every obfuscation call is deterministic given its seed, so the recorded
seeds let a relation re-derive a handle bit for bit.
"""
from __future__ import annotations

import base64
import hashlib
import hmac
import json
import secrets
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .circuits import CncCircuit, to_hex
from .field import FieldParams, Subspace, random_subspace, random_superspace
from .rng import draw_seed

DIGEST_NAME = "sha256"
SALT_BYTES = 16
MODES = ("ideal", "toy")
BOTTOM = None


class OracleError(ValueError):
    pass


class UnknownRelation(OracleError):
    pass


class RelationNotSatisfied(OracleError):
    pass


class ExtractionRefused(OracleError):
    pass


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def _int_bytes(x: int, nbits: int) -> bytes:
    return int(x).to_bytes(max(1, (nbits + 7) // 8), "big")


def _h(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(len(p).to_bytes(4, "big"))
        h.update(p)
    return h.digest()


def _seed_bytes(seed: int) -> bytes:
    return int(seed).to_bytes(8, "big")


def keystream(key: bytes, nbits: int) -> int:
    if nbits <= 0:
        return 0
    nbytes = (nbits + 7) // 8
    raw = int.from_bytes(hashlib.shake_256(key).digest(nbytes), "big")
    return raw >> (8 * nbytes - nbits)


def lock_digest(salt: bytes, value: int, nbits: int) -> bytes:
    return _h(b"lock", salt, _int_bytes(value, nbits))


def _b64(b: bytes) -> str:
    return base64.b64encode(b).decode()


# --- subspace-hiding obfuscation ---------------------------------------------

@dataclass(frozen=True)
class SubspaceObfHandle:
    token: str
    mode: str
    sealed: Subspace = field(repr=False)

    def __call__(self, v) -> int:
        return int(self.sealed.contains(v))

    def mask(self, params: FieldParams | None = None) -> np.ndarray:
        return self.sealed.mask()

    @property
    def params(self) -> FieldParams:
        return self.sealed.params

    def to_json(self) -> dict:
        return {"kind": "shO", "token": self.token, "mode": self.mode,
                "q": self.params.q, "lambda": self.params.lam, "registry_key": self.token}

    def sealed_json(self) -> dict:
        return self.sealed.to_json()


def sho_obf(A: Subspace, rng: np.random.Generator | None = None, *, seed: int | None = None,
            mode: str = "ideal") -> SubspaceObfHandle:
    """Membership oracle for ``A``; fresh token per seed."""
    _check_mode(mode)
    if seed is None:
        seed = draw_seed(rng) if rng is not None else secrets.randbits(63)
    basis = json.dumps(A.to_json(), sort_keys=True).encode()
    token = _h(b"shO", _seed_bytes(seed), basis).hex()[:32]
    return SubspaceObfHandle(token, mode, A)


def sho_eval(h: SubspaceObfHandle, v) -> int:
    return h(v)


def sho_security_game(choose: Callable[[FieldParams, np.random.Generator], Subspace],
                      guess: Callable[[SubspaceObfHandle], int],
                      params: FieldParams, d0: int, d1: int,
                      rng: np.random.Generator) -> tuple[int, int]:
    """One round of the d0-vs-d1 hiding game; returns (challenge bit, guess).

    Documents the interface only; the ideal handle offers no hiding guarantee
    beyond what its membership oracle reveals.
    """
    A = choose(params, rng)
    if A.dim != d0:
        raise ValueError(f"adversary must choose a {d0}-dimensional subspace")
    S = random_superspace(A, d1, rng)
    b = int(rng.integers(0, 2))
    handle = sho_obf(S if b else A, rng)
    return b, int(guess(handle))


def random_challenge_subspace(params: FieldParams, rng: np.random.Generator, dim: int) -> Subspace:
    return random_subspace(params, dim, rng)


# --- q-input-hiding obfuscation for compute-and-compare circuits ---------------

@dataclass(frozen=True)
class InputHidingObfHandle:
    token: str
    mode: str
    inner: object
    salt: bytes
    digest: bytes
    sealed_msg: int | None = None
    msg_bits: int = 1

    @property
    def n(self) -> int:
        return self.inner.n

    @property
    def m(self) -> int:
        return self.inner.m

    def __call__(self, x: int) -> int:
        return qiho_eval(self, x)

    def to_json(self) -> dict:
        out = {"kind": "qIHO", "token": self.token, "mode": self.mode, "n": self.n, "m": self.m,
               "inner": self.inner.to_json(), "salt": _b64(self.salt), "digest": _b64(self.digest),
               "digest_alg": DIGEST_NAME}
        if self.sealed_msg is not None:
            out["sealed_msg"] = to_hex(self.sealed_msg, self.msg_bits)
            out["msg_bits"] = self.msg_bits
        return out

    @classmethod
    def from_json(cls, data: dict) -> InputHidingObfHandle:
        from .circuits import inner_from_json
        sealed = int(data["sealed_msg"], 16) if data.get("sealed_msg") is not None else None
        return cls(data["token"], data["mode"], inner_from_json(data["inner"]),
                   base64.b64decode(data["salt"]), base64.b64decode(data["digest"]),
                   sealed, int(data.get("msg_bits", 1)))


def qiho_obf(c: CncCircuit, rng: np.random.Generator | None = None, *, seed: int | None = None,
             mode: str = "ideal") -> InputHidingObfHandle:
    """(C, point-obfuscation of the lock); the lock survives only as a salted digest."""
    _check_mode(mode)
    if seed is None:
        seed = draw_seed(rng) if rng is not None else secrets.randbits(63)
    sb = _seed_bytes(seed)
    salt = _h(b"qIHO-salt", sb)[:SALT_BYTES]
    token = _h(b"qIHO-token", sb).hex()[:32]
    digest = lock_digest(salt, c.lock, c.m)
    sealed = None
    if c.msg is not None:
        sealed = c.msg ^ keystream(_h(b"msg", salt, _int_bytes(c.lock, c.m)), c.msg_bits)
    return InputHidingObfHandle(token, mode, c.inner, salt, digest, sealed, c.msg_bits)


def qiho_eval(h: InputHidingObfHandle, x: int) -> int:
    alpha = h.inner(int(x))
    if not hmac.compare_digest(lock_digest(h.salt, alpha, h.m), h.digest):
        return 0
    if h.sealed_msg is None:
        return 1
    return h.sealed_msg ^ keystream(_h(b"msg", h.salt, _int_bytes(alpha, h.m)), h.msg_bits)


@dataclass(frozen=True)
class ProgramHandle:
    """Unhidden wrapper for programs outside the compute-and-compare class."""
    token: str
    program: object

    @property
    def n(self) -> int:
        return self.program.n

    def __call__(self, x: int) -> int:
        return self.program(x)

    def to_json(self) -> dict:
        return {"kind": "program", "token": self.token, "n": self.program.n, "m": self.program.m}


def program_obf(program, rng: np.random.Generator | None = None, *, seed: int | None = None) -> ProgramHandle:
    if seed is None:
        seed = draw_seed(rng) if rng is not None else secrets.randbits(63)
    return ProgramHandle(_h(b"program", _seed_bytes(seed)).hex()[:32], program)


def obfuscate_circuit(circuit, seed: int, mode: str = "ideal"):
    if isinstance(circuit, CncCircuit):
        return qiho_obf(circuit, seed=seed, mode=mode)
    return program_obf(circuit, seed=seed)


# --- lockable obfuscation ------------------------------------------------------

@dataclass(frozen=True)
class LockableObfHandle:
    token: str
    inner: object = field(repr=False)
    salt: bytes = field(repr=False)
    digest: bytes = field(repr=False)
    sealed_payload: int = field(repr=False)
    payload_bits: int = 1
    tag: bytes = field(default=b"", repr=False)

    def __call__(self, x: int):
        return lo_eval(self, x)

    def to_json(self) -> dict:
        return {"kind": "LO", "token": self.token, "salt": _b64(self.salt),
                "digest": _b64(self.digest), "payload_bits": self.payload_bits,
                "sealed_payload": _b64(_int_bytes(self.sealed_payload, self.payload_bits)),
                "tag": _b64(self.tag), "inner": "registry:" + self.token}


class _Registry:
    def __init__(self):
        self._lock = threading.Lock()
        self._items: dict = {}

    def put(self, key, value):
        with self._lock:
            self._items[key] = value

    def get(self, key):
        with self._lock:
            return self._items.get(key)


LO_REGISTRY = _Registry()
LO_TOKEN_BITS = 64


def _lo_keys(salt: bytes, alpha: int, alpha_bits: int) -> tuple[bytes, bytes]:
    a = _int_bytes(alpha, alpha_bits)
    return _h(b"lo-stream", salt, a), _h(b"lo-mac", salt, a)


def lo_obf(C, alpha: int, beta: int, rng: np.random.Generator | None = None, *,
           beta_bits: int, seed: int | None = None) -> LockableObfHandle:
    """Obfuscate "output beta iff C(x) = alpha"; the handle is published in the registry."""
    if not 0 <= alpha < (1 << C.m):
        raise ValueError("|alpha| must equal the output length of C")
    if seed is None:
        seed = draw_seed(rng) if rng is not None else secrets.randbits(63)
    sb = _seed_bytes(seed)
    salt = _h(b"lo-salt", sb)[:SALT_BYTES]
    token = int.from_bytes(_h(b"lo-token", sb)[:LO_TOKEN_BITS // 8], "big")
    stream_key, mac_key = _lo_keys(salt, alpha, C.m)
    sealed = beta ^ keystream(stream_key, beta_bits)
    tag = hmac.new(mac_key, _int_bytes(sealed, beta_bits), hashlib.sha256).digest()[:16]
    handle = LockableObfHandle(format(token, "016x"), C, salt, lock_digest(salt, alpha, C.m),
                               sealed, beta_bits, tag)
    LO_REGISTRY.put(handle.token, handle)
    return handle


def lo_unseal(h: LockableObfHandle, alpha: int):
    """Open the payload under a candidate lock; the integrity tag rejects wrong locks."""
    stream_key, mac_key = _lo_keys(h.salt, alpha, h.inner.m)
    tag = hmac.new(mac_key, _int_bytes(h.sealed_payload, h.payload_bits), hashlib.sha256).digest()[:16]
    if not hmac.compare_digest(tag, h.tag):
        return BOTTOM
    return h.sealed_payload ^ keystream(stream_key, h.payload_bits)


def lo_eval(h: LockableObfHandle, x: int):
    alpha = h.inner(int(x))
    if not hmac.compare_digest(lock_digest(h.salt, alpha, h.inner.m), h.digest):
        return BOTTOM
    return lo_unseal(h, alpha)


def lo_resolve(token: str) -> LockableObfHandle | None:
    return LO_REGISTRY.get(token)


# --- simulation-extractable NIZK (ideal functionality) ---------------------------

def _canonical(obj):
    if hasattr(obj, "to_json"):
        return obj.to_json()
    if isinstance(obj, (list, tuple)):
        return [_canonical(o) for o in obj]
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, bytes):
        return _b64(obj)
    return obj


def statement_digest(statement) -> str:
    blob = json.dumps(_canonical(statement), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class NizkCrs:
    crs_id: str
    relation_id: str
    oracle: NizkOracle = field(compare=False, repr=False)

    def to_json(self) -> dict:
        return {"crs_id": self.crs_id, "relation_id": self.relation_id}


@dataclass(frozen=True)
class NizkTrapdoor:
    crs_id: str
    key: bytes = field(repr=False)


@dataclass(frozen=True)
class NizkProof:
    statement_digest: str
    witness_ref: str | None
    simulated: bool
    tag: str

    def to_json(self) -> dict:
        return {"statement_digest": self.statement_digest, "witness_ref": self.witness_ref,
                "simulated": self.simulated, "tag": self.tag}

    @classmethod
    def from_json(cls, data: dict) -> NizkProof:
        return cls(data["statement_digest"], data.get("witness_ref"), bool(data["simulated"]), data["tag"])


class NizkOracle:
    """Registry backing the ideal proof system.

    Verification is a MAC check under a per-CRS key only the oracle holds,
    so it is deterministic in (crs, statement, proof). Witnesses are kept in
    a sealed table reachable only with the CRS trapdoor.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._relations: dict[str, Callable] = {}
        self._keys: dict[str, tuple[bytes, bytes]] = {}
        self._witnesses: dict[str, tuple[str, object]] = {}

    def register_relation(self, relation_id: str, predicate: Callable[[object, object], bool]) -> None:
        with self._lock:
            self._relations[relation_id] = predicate

    def relation(self, relation_id: str) -> Callable:
        with self._lock:
            if relation_id not in self._relations:
                raise UnknownRelation(f"relation {relation_id!r} is not registered")
            return self._relations[relation_id]

    def _new_crs(self, relation_id: str, rng) -> tuple[NizkCrs, bytes]:
        self.relation(relation_id)
        raw = rng.bytes(64) if rng is not None else secrets.token_bytes(64)
        mac_key, td_key = raw[:32], raw[32:]
        crs_id = hashlib.sha256(b"crs" + mac_key).hexdigest()[:32]
        with self._lock:
            self._keys[crs_id] = (mac_key, td_key)
        return NizkCrs(crs_id, relation_id, self), td_key

    def crsgen(self, relation_id: str, rng=None) -> NizkCrs:
        return self._new_crs(relation_id, rng)[0]

    def fkgen(self, relation_id: str, rng=None) -> tuple[NizkCrs, NizkTrapdoor]:
        crs, td = self._new_crs(relation_id, rng)
        return crs, NizkTrapdoor(crs.crs_id, td)

    def _mac_key(self, crs_id: str) -> bytes | None:
        with self._lock:
            k = self._keys.get(crs_id)
        return k[0] if k else None

    def _tag(self, key: bytes, digest: str, ref: str | None, simulated: bool) -> str:
        msg = f"{digest}|{ref}|{int(simulated)}".encode()
        return hmac.new(key, msg, hashlib.sha256).hexdigest()

    def prove(self, crs: NizkCrs, statement, witness, rng=None) -> NizkProof:
        if not self.relation(crs.relation_id)(statement, witness):
            raise RelationNotSatisfied("witness does not satisfy the registered relation")
        key = self._mac_key(crs.crs_id)
        if key is None:
            raise OracleError("unknown CRS")
        digest = statement_digest(statement)
        ref = (rng.bytes(16) if rng is not None else secrets.token_bytes(16)).hex()
        with self._lock:
            self._witnesses[ref] = (crs.crs_id, witness)
        return NizkProof(digest, ref, False, self._tag(key, digest, ref, False))

    def simulate(self, crs: NizkCrs, trapdoor: NizkTrapdoor, statement) -> NizkProof:
        """Accepting proof without a witness; needs the trapdoor and is marked simulated."""
        self._check_trapdoor(crs, trapdoor)
        key = self._mac_key(crs.crs_id)
        digest = statement_digest(statement)
        return NizkProof(digest, None, True, self._tag(key, digest, None, True))

    def verify(self, crs: NizkCrs, statement, proof) -> bool:
        if not isinstance(proof, NizkProof):
            return False
        key = self._mac_key(crs.crs_id)
        if key is None:
            return False
        digest = statement_digest(statement)
        if proof.statement_digest != digest:
            return False
        expected = self._tag(key, digest, proof.witness_ref, proof.simulated)
        return hmac.compare_digest(expected, str(proof.tag))

    def _check_trapdoor(self, crs: NizkCrs, trapdoor: NizkTrapdoor) -> None:
        with self._lock:
            k = self._keys.get(crs.crs_id)
        if k is None or trapdoor.crs_id != crs.crs_id or not hmac.compare_digest(k[1], trapdoor.key):
            raise ExtractionRefused("trapdoor does not match this CRS")

    def extract(self, crs: NizkCrs, trapdoor: NizkTrapdoor, statement, proof: NizkProof):
        self._check_trapdoor(crs, trapdoor)
        if not self.verify(crs, statement, proof):
            raise ExtractionRefused("cannot extract from a rejecting proof")
        if proof.simulated:
            raise ExtractionRefused("cannot extract from a simulated proof")
        with self._lock:
            entry = self._witnesses.get(proof.witness_ref)
        if entry is None or entry[0] != crs.crs_id:
            raise ExtractionRefused("sealed witness unavailable")
        witness = entry[1]
        if not self.relation(crs.relation_id)(statement, witness):
            raise ExtractionRefused("sealed witness does not satisfy the relation")
        return witness

    def export_crs(self, crs: NizkCrs) -> dict:
        """Serialize the CRS with its oracle-held keys (for reloading in another process)."""
        with self._lock:
            mac_key, td_key = self._keys[crs.crs_id]
        return {**crs.to_json(), "ideal_oracle": {"mac_key": _b64(mac_key), "trapdoor_key": _b64(td_key)}}

    def import_crs(self, data: dict) -> NizkCrs:
        self.relation(data["relation_id"])
        keys = data["ideal_oracle"]
        with self._lock:
            self._keys[data["crs_id"]] = (base64.b64decode(keys["mac_key"]),
                                          base64.b64decode(keys["trapdoor_key"]))
        return NizkCrs(data["crs_id"], data["relation_id"], self)


DEFAULT_NIZK = NizkOracle()


def nizk_crsgen(relation_id: str, rng=None, oracle: NizkOracle = DEFAULT_NIZK) -> NizkCrs:
    return oracle.crsgen(relation_id, rng)


def nizk_fkgen(relation_id: str, rng=None, oracle: NizkOracle = DEFAULT_NIZK) -> tuple[NizkCrs, NizkTrapdoor]:
    return oracle.fkgen(relation_id, rng)


def nizk_prove(crs: NizkCrs, statement, witness, rng=None) -> NizkProof:
    return crs.oracle.prove(crs, statement, witness, rng)


def nizk_verify(crs: NizkCrs, statement, proof) -> int:
    return int(crs.oracle.verify(crs, statement, proof))


def nizk_simulate(crs: NizkCrs, trapdoor: NizkTrapdoor, statement) -> NizkProof:
    return crs.oracle.simulate(crs, trapdoor, statement)


def nizk_extract(crs: NizkCrs, trapdoor: NizkTrapdoor, statement, proof: NizkProof):
    return crs.oracle.extract(crs, trapdoor, statement, proof)
