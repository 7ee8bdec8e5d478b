"""Compute-and-compare circuits, their search algorithms, and samplers.

Bit strings are Python ints paired with an explicit length. Position ``i``
of an ``n``-bit string is the ``i``-th character of its MSB-first rendering,
so ``"1010"`` has bits 0 and 2 set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .field import solve_affine
from .rng import draw_bits, make_rng


class UnsatisfiableCircuit(ValueError):
    """The circuit has no accepting input reachable by its search algorithm."""


def to_bits(x: int, n: int) -> str:
    return format(x, f"0{n}b") if n else ""


def from_bits(s: str) -> int:
    return int(s, 2) if s else 0


def get_bit(x: int, i: int, n: int) -> int:
    return (x >> (n - 1 - i)) & 1


def to_hex(x: int, nbits: int) -> str:
    return format(x, f"0{max(1, (nbits + 3) // 4)}x")


def _coerce_input(x, n: int) -> int:
    if isinstance(x, str):
        if len(x) != n or set(x) - {"0", "1"}:
            raise ValueError(f"expected a {n}-bit string, got {x!r}")
        return from_bits(x)
    x = int(x)
    if not 0 <= x < (1 << n):
        raise ValueError(f"input {x} does not fit in {n} bits")
    return x


# --- inner circuits ----------------------------------------------------------

@dataclass(frozen=True)
class Identity:
    """C(x) = x."""
    n: int

    @property
    def m(self) -> int:
        return self.n

    def __call__(self, x: int) -> int:
        return x

    def to_json(self) -> dict:
        return {"type": "identity", "n": self.n}


@dataclass(frozen=True)
class Projection:
    """y_i = x_i for i in S and 0 elsewhere (conjunction with wildcards)."""
    n: int
    S: tuple[int, ...]

    @property
    def m(self) -> int:
        return self.n

    @property
    def keep_mask(self) -> int:
        return sum(1 << (self.n - 1 - i) for i in self.S)

    def __call__(self, x: int) -> int:
        return x & self.keep_mask

    def to_json(self) -> dict:
        return {"type": "projection", "n": self.n, "S": list(self.S)}


def _field_width(q: int) -> int:
    return max(1, math.ceil(math.log2(q)))


@dataclass(frozen=True)
class AffineMap:
    """x |-> M x over Z_q, each coordinate encoded in ceil(log2 q) bits.

    Codes >= q are reduced mod q, keeping the map total on {0,1}^n.
    """
    matrix: tuple[tuple[int, ...], ...]
    q: int

    @property
    def k(self) -> int:
        return len(self.matrix[0])

    @property
    def rows(self) -> int:
        return len(self.matrix)

    @property
    def width(self) -> int:
        return _field_width(self.q)

    @property
    def n(self) -> int:
        return self.k * self.width

    @property
    def m(self) -> int:
        return self.rows * self.width

    def decode(self, x: int, count: int) -> np.ndarray:
        w = self.width
        mask = (1 << w) - 1
        return np.array([((x >> (w * (count - 1 - i))) & mask) % self.q for i in range(count)],
                        dtype=np.int64)

    def encode(self, v) -> int:
        out = 0
        for c in np.asarray(v, dtype=np.int64).reshape(-1):
            out = (out << self.width) | int(c)
        return out

    def __call__(self, x: int) -> int:
        v = self.decode(x, self.k)
        return self.encode((np.array(self.matrix, dtype=np.int64) @ v) % self.q)

    def to_json(self) -> dict:
        return {"type": "affine", "q": self.q, "matrix": [list(r) for r in self.matrix]}


@lru_cache(maxsize=64)
def _keyed_permutation(key: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    perm = make_rng(key, stream=0x5EC).permutation(1 << n)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(1 << n)
    perm.setflags(write=False)
    inv.setflags(write=False)
    return perm, inv


@dataclass(frozen=True)
class PermutationCipherDecrypt:
    """Decryption under a toy keyed permutation of {0,1}^n (not secure)."""
    n: int
    key: int

    MAX_N = 16

    def __post_init__(self):
        if not 1 <= self.n <= self.MAX_N:
            raise ValueError(f"permutation cipher supports 1 <= n <= {self.MAX_N}")

    @property
    def m(self) -> int:
        return self.n

    def __call__(self, ct: int) -> int:
        return int(_keyed_permutation(self.key, self.n)[0][ct])

    def encrypt(self, msg: int) -> int:
        return int(_keyed_permutation(self.key, self.n)[1][msg])

    def to_json(self) -> dict:
        return {"type": "permutation_cipher", "n": self.n, "key": self.key}


@dataclass(frozen=True, eq=False)
class TruthTable:
    n: int
    m: int
    table: tuple[int, ...]

    MAX_N = 16

    def __post_init__(self):
        if self.n > self.MAX_N:
            raise ValueError(f"truth tables are limited to n <= {self.MAX_N}")
        if len(self.table) != 1 << self.n:
            raise ValueError("truth table length must be 2**n")

    def __eq__(self, other):
        return isinstance(other, TruthTable) and (self.n, self.m, self.table) == (other.n, other.m, other.table)

    def __hash__(self):
        return hash((self.n, self.m, self.table))

    def __call__(self, x: int) -> int:
        return self.table[x]

    def to_json(self) -> dict:
        width = max(1, (self.m + 3) // 4)
        return {"type": "truth_table", "n": self.n, "m": self.m,
                "table": "".join(format(v, f"0{width}x") for v in self.table)}


def inner_from_json(data: dict):
    t = data["type"]
    if t == "identity":
        return Identity(int(data["n"]))
    if t == "projection":
        return Projection(int(data["n"]), tuple(sorted(int(i) for i in data["S"])))
    if t == "affine":
        return AffineMap(tuple(tuple(int(c) for c in r) for r in data["matrix"]), int(data["q"]))
    if t == "permutation_cipher":
        return PermutationCipherDecrypt(int(data["n"]), int(data["key"]))
    if t == "truth_table":
        n, m = int(data["n"]), int(data["m"])
        width = max(1, (m + 3) // 4)
        s = data["table"]
        return TruthTable(n, m, tuple(int(s[i:i + width], 16) for i in range(0, len(s), width)))
    raise ValueError(f"unknown inner circuit type {t!r}")


# --- compute-and-compare ------------------------------------------------------

SEARCH_KINDS = ("point", "wildcard", "affine", "plaintext_eq", "custom", "none")


@dataclass(frozen=True)
class SearchTag:
    kind: str
    search_fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in SEARCH_KINDS:
            raise ValueError(f"unknown search kind {self.kind!r}")


@dataclass(frozen=True)
class CncCircuit:
    """C[C, alpha] (or C[C, alpha, msg] when ``msg`` is set)."""
    inner: object
    lock: int
    msg: int | None = None
    msg_bits: int = 1
    tag: SearchTag = SearchTag("none")

    def __post_init__(self):
        if not 0 <= self.lock < (1 << self.inner.m):
            raise ValueError("lock length must equal the inner circuit's output length")

    @property
    def n(self) -> int:
        return self.inner.n

    @property
    def m(self) -> int:
        return self.inner.m

    @property
    def out_bits(self) -> int:
        return self.msg_bits if self.msg is not None else 1

    def __call__(self, x) -> int:
        return eval_circuit(self, x)

    def to_json(self) -> dict:
        out = {"kind": self.tag.kind, "n": self.n, "m": self.m,
               "lock": to_hex(self.lock, self.m), "inner": self.inner.to_json()}
        if self.msg is not None:
            out["msg"] = to_hex(self.msg, self.msg_bits)
            out["msg_bits"] = self.msg_bits
        return out

    @classmethod
    def from_json(cls, data: dict) -> CncCircuit:
        inner = inner_from_json(data["inner"])
        if int(data.get("n", inner.n)) != inner.n or int(data.get("m", inner.m)) != inner.m:
            raise ValueError("declared n/m do not match the inner circuit")
        msg = int(data["msg"], 16) if data.get("msg") is not None else None
        return cls(inner, int(data["lock"], 16), msg, int(data.get("msg_bits", 1)),
                   SearchTag(data.get("kind", "none")))


def eval_circuit(c: CncCircuit, x) -> int:
    x = _coerce_input(x, c.n)
    if c.inner(x) == c.lock:
        return c.msg if c.msg is not None else 1
    return 0


def accepts(c: CncCircuit, x) -> bool:
    return c.inner(_coerce_input(x, c.n)) == c.lock


def search(c: CncCircuit) -> int:
    """Read an accepting input off the circuit description."""
    kind = c.tag.kind
    inner = c.inner
    if kind == "point":
        x = c.lock
    elif kind == "wildcard":
        if c.lock & ~inner.keep_mask:
            raise UnsatisfiableCircuit("wildcard lock is nonzero outside S")
        x = c.lock
    elif kind == "affine":
        alpha = inner.decode(c.lock, inner.rows)
        sol = solve_affine(np.array(inner.matrix), alpha, inner.q)
        if sol is None:
            raise UnsatisfiableCircuit("affine system is inconsistent")
        x = inner.encode(sol)
    elif kind == "plaintext_eq":
        x = inner.encrypt(c.lock)
    elif kind == "custom" and c.tag.search_fn is not None:
        x = int(c.tag.search_fn(c))
    else:
        raise UnsatisfiableCircuit(f"no search algorithm for kind {kind!r}")
    if c.inner(x) != c.lock:
        raise UnsatisfiableCircuit("search produced a non-accepting input")
    return x


# --- constructors ------------------------------------------------------------

def point_circuit(alpha: int, n: int) -> CncCircuit:
    return CncCircuit(Identity(n), alpha, tag=SearchTag("point"))


def wildcard_circuit(S, alpha: int, n: int) -> CncCircuit:
    return CncCircuit(Projection(n, tuple(sorted(S))), alpha, tag=SearchTag("wildcard"))


def affine_tester(matrix, alpha, q: int = 2) -> CncCircuit:
    inner = AffineMap(tuple(tuple(int(v) % q for v in r) for r in np.asarray(matrix)), q)
    lock = inner.encode(np.asarray(alpha) % q) if not isinstance(alpha, int) else alpha
    return CncCircuit(inner, lock, tag=SearchTag("affine"))


def plaintext_equality_checker(key: int, alpha: int, n: int) -> CncCircuit:
    return CncCircuit(PermutationCipherDecrypt(n, key), alpha, tag=SearchTag("plaintext_eq"))


# --- sampling ----------------------------------------------------------------

@dataclass(frozen=True)
class CircuitSample:
    circuit: CncCircuit
    aux: bytes = b""
    entropy_bits: float = 0.0
    distribution: str = "unpredictable"


FAMILIES = ("truth_table", "point", "wildcard", "affine", "plaintext_eq")


def sample_unpredictable(n: int, m: int | None, rng: np.random.Generator,
                         family: str = "truth_table", q: int = 2) -> CircuitSample:
    """Draw C[C, alpha] with the lock independent of (C, aux).

    ``truth_table`` draws a random inner function and an independent uniform
    lock in {0,1}^m. The searchable families fix ``m`` by their structure
    (``m`` may be passed as ``None``); their locks are drawn so that the
    circuit stays satisfiable.
    """
    if family == "truth_table":
        if m is None or m < 1:
            raise ValueError("m must be >= 1")
        table = tuple(int(v) for v in rng.integers(0, 1 << m, size=1 << n, dtype=np.uint64))
        c = CncCircuit(TruthTable(n, m, table), draw_bits(rng, m), tag=SearchTag("none"))
        return CircuitSample(c, b"", float(m))
    if family == "point":
        return CircuitSample(point_circuit(draw_bits(rng, n), n), b"", float(n))
    if family == "wildcard":
        size = int(rng.integers(1, n + 1))
        S = tuple(sorted(int(i) for i in rng.choice(n, size=size, replace=False)))
        proj = Projection(n, S)
        lock = draw_bits(rng, n) & proj.keep_mask
        return CircuitSample(wildcard_circuit(S, lock, n), b"", float(size))
    if family == "affine":
        w = _field_width(q)
        k = max(1, n // w)
        rows = int(rng.integers(1, k)) if k > 1 else 1
        M = rng.integers(0, q, size=(rows, k))
        x = rng.integers(0, q, size=k)
        alpha = (M @ x) % q
        c = affine_tester(M, alpha, q)
        rank = np.linalg.matrix_rank(M) if q == 2 else rows
        return CircuitSample(c, b"", float(rank * math.log2(q)))
    if family == "plaintext_eq":
        key = int(rng.integers(0, 1 << 62))
        return CircuitSample(plaintext_equality_checker(key, draw_bits(rng, n), n), b"", float(n))
    raise ValueError(f"unknown family {family!r}")


def sample_pseudoentropic(n: int, m: int | None, rng: np.random.Generator,
                          family: str = "truth_table", q: int = 2) -> CircuitSample:
    """Same draw as :func:`sample_unpredictable`; only the label differs."""
    s = sample_unpredictable(n, m, rng, family, q)
    return CircuitSample(s.circuit, s.aux, s.entropy_bits, "pseudoentropic")


EXHAUSTIVE_LIMIT = 20


def is_functionally_equal(a: Callable[[int], int], b: Callable[[int], int], n: int) -> bool:
    """Exhaustive comparison over {0,1}^n."""
    if n > EXHAUSTIVE_LIMIT:
        raise ValueError(f"exhaustive comparison limited to n <= {EXHAUSTIVE_LIMIT}")
    return all(a(x) == b(x) for x in range(1 << n))
