"""Linear algebra over the prime field Z_q.

Matrices are plain integer numpy arrays with entries in ``[0, q)``. Subspaces
are stored by their reduced row echelon basis, which is the unique canonical
representative, so two :class:`Subspace` values compare equal exactly when
they span the same space.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

SUPPORTED_PRIMES = (2, 3, 5, 7)


class NonCanonicalBasisWarning(UserWarning):
    """A serialized basis was not in reduced row echelon form."""


@dataclass(frozen=True)
class FieldParams:
    q: int
    lam: int

    def __post_init__(self):
        if self.q not in SUPPORTED_PRIMES:
            raise ValueError(f"q must be one of {SUPPORTED_PRIMES}, got {self.q}")
        if self.lam < 1:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")

    @property
    def dim(self) -> int:
        """Hilbert-space dimension q**lam."""
        return self.q ** self.lam


def as_field_array(matrix, q: int) -> np.ndarray:
    arr = np.asarray(matrix, dtype=np.int64)
    return np.mod(arr, q)


def rref(matrix, q: int) -> tuple[np.ndarray, int]:
    """Reduced row echelon form mod ``q``.

    Returns the full-height RREF matrix (zero rows at the bottom) and its rank.
    """
    m = as_field_array(matrix, q).copy()
    if m.ndim != 2:
        raise ValueError("rref expects a 2-d matrix")
    rows, cols = m.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(m[r:, c])[0]
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            m[[r, p]] = m[[p, r]]
        inv = pow(int(m[r, c]), -1, q)
        m[r] = (m[r] * inv) % q
        others = np.nonzero(m[:, c])[0]
        for i in others:
            if i != r:
                m[i] = (m[i] - m[i, c] * m[r]) % q
        r += 1
    return m, r


def pivot_columns(reduced: np.ndarray) -> list[int]:
    pivots = []
    for row in reduced:
        nz = np.nonzero(row)[0]
        if nz.size == 0:
            break
        pivots.append(int(nz[0]))
    return pivots


def is_rref(matrix, q: int) -> bool:
    m = as_field_array(matrix, q)
    if m.size == 0:
        return True
    reduced, rank = rref(m, q)
    return rank == m.shape[0] and np.array_equal(reduced, m)


def nullspace(matrix, q: int, ncols: int | None = None) -> np.ndarray:
    """Basis (rows) of ``{v : matrix @ v = 0 mod q}``."""
    m = as_field_array(matrix, q)
    if m.size == 0:
        n = ncols if ncols is not None else m.shape[1]
        return np.eye(n, dtype=np.int64)
    reduced, rank = rref(m, q)
    n = m.shape[1]
    pivots = pivot_columns(reduced[:rank])
    free = [c for c in range(n) if c not in pivots]
    basis = np.zeros((len(free), n), dtype=np.int64)
    for k, f in enumerate(free):
        basis[k, f] = 1
        for i, p in enumerate(pivots):
            basis[k, p] = (-reduced[i, f]) % q
    return basis


def solve_affine(M, alpha, q: int) -> np.ndarray | None:
    """Solve ``M @ x = alpha`` over Z_q; free variables are set to zero.

    Returns ``None`` when the system is inconsistent.
    """
    M = as_field_array(M, q)
    alpha = as_field_array(alpha, q).reshape(-1)
    if M.ndim != 2 or M.shape[0] != alpha.shape[0]:
        raise ValueError("alpha length must equal the row count of M")
    rows, cols = M.shape
    aug = np.concatenate([M, alpha[:, None]], axis=1)
    reduced, rank = rref(aug, q)
    x = np.zeros(cols, dtype=np.int64)
    for row in reduced[:rank]:
        nz = np.nonzero(row)[0]
        if nz[0] == cols:
            return None
        x[nz[0]] = row[cols]
    return x


@lru_cache(maxsize=32)
def all_vectors(params: FieldParams) -> np.ndarray:
    """Every vector of Z_q^lam, row ``i`` being the vector with lexicographic index ``i``."""
    grids = np.indices((params.q,) * params.lam, dtype=np.uint8)
    out = grids.reshape(params.lam, -1).T.copy()
    out.setflags(write=False)
    return out


def vector_index(params: FieldParams, v) -> int:
    idx = 0
    for c in np.asarray(v, dtype=np.int64).reshape(-1):
        idx = idx * params.q + int(c)
    return idx


@dataclass(frozen=True, eq=False)
class Subspace:
    params: FieldParams
    basis: tuple[tuple[int, ...], ...]

    @classmethod
    def from_generators(cls, params: FieldParams, generators) -> Subspace:
        gens = as_field_array(generators, params.q)
        if gens.size == 0:
            return cls.zero(params)
        gens = gens.reshape(-1, params.lam)
        reduced, rank = rref(gens, params.q)
        return cls(params, tuple(tuple(int(c) for c in row) for row in reduced[:rank]))

    @classmethod
    def zero(cls, params: FieldParams) -> Subspace:
        return cls(params, ())

    @classmethod
    def full(cls, params: FieldParams) -> Subspace:
        return cls.from_generators(params, np.eye(params.lam, dtype=np.int64))

    def __post_init__(self):
        for row in self.basis:
            if len(row) != self.params.lam:
                raise ValueError("basis rows must have length lambda")
        if self.basis and not is_rref(np.array(self.basis), self.params.q):
            raise ValueError("Subspace basis must be in reduced row echelon form")

    def __eq__(self, other):
        if not isinstance(other, Subspace):
            return NotImplemented
        return self.params == other.params and self.basis == other.basis

    def __hash__(self):
        return hash((self.params, self.basis))

    def __repr__(self):
        return f"Subspace(q={self.params.q}, lam={self.params.lam}, basis={list(map(list, self.basis))})"

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def size(self) -> int:
        return self.params.q ** self.dim

    @cached_property
    def matrix(self) -> np.ndarray:
        m = np.array(self.basis, dtype=np.int64).reshape(self.dim, self.params.lam)
        m.setflags(write=False)
        return m

    @cached_property
    def parity_check(self) -> np.ndarray:
        """Rows spanning the dual; ``v`` is in the subspace iff ``parity_check @ v == 0``."""
        h = nullspace(self.matrix, self.params.q, ncols=self.params.lam)
        h.setflags(write=False)
        return h

    def dual(self) -> Subspace:
        return Subspace.from_generators(self.params, self.parity_check)

    def contains(self, v) -> bool:
        v = as_field_array(v, self.params.q).reshape(-1)
        if v.shape[0] != self.params.lam:
            raise ValueError(f"vector has length {v.shape[0]}, expected {self.params.lam}")
        return not np.any((self.parity_check @ v) % self.params.q)

    def contains_all(self, vectors) -> np.ndarray:
        """Vectorised membership test over the rows of ``vectors``."""
        vecs = np.asarray(vectors, dtype=np.int64)
        if vecs.shape[-1] != self.params.lam:
            raise ValueError("vector length mismatch")
        if self.parity_check.shape[0] == 0:
            return np.ones(vecs.shape[0], dtype=bool)
        return ~np.any((vecs @ self.parity_check.T) % self.params.q, axis=1)

    def mask(self) -> np.ndarray:
        """Membership indicator over all of Z_q^lam in lexicographic order."""
        return self.contains_all(all_vectors(self.params))

    def elements(self) -> np.ndarray:
        q, d = self.params.q, self.dim
        if d == 0:
            return np.zeros((1, self.params.lam), dtype=np.int64)
        coeffs = np.array(list(itertools.product(range(q), repeat=d)), dtype=np.int64)
        return (coeffs @ self.matrix) % q

    def to_json(self) -> dict:
        return {"q": self.params.q, "lambda": self.params.lam,
                "basis": [list(row) for row in self.basis]}

    @classmethod
    def from_json(cls, data: dict, strict: bool = False) -> Subspace:
        """Parse ``{q, lambda, basis}``.

        A basis that is not already canonical is re-canonicalised with a
        :class:`NonCanonicalBasisWarning`, or rejected when ``strict``.
        """
        params = FieldParams(int(data["q"]), int(data["lambda"]))
        basis = data.get("basis") or []
        arr = np.array(basis, dtype=np.int64).reshape(-1, params.lam)
        if arr.size and (np.any(arr < 0) or np.any(arr >= params.q) or not is_rref(arr, params.q)):
            if strict:
                raise ValueError("basis is not in reduced row echelon form")
            warnings.warn("subspace basis was not canonical; re-canonicalised",
                          NonCanonicalBasisWarning, stacklevel=2)
        return cls.from_generators(params, arr)


def random_subspace(params: FieldParams, dim: int, rng: np.random.Generator) -> Subspace:
    """Uniformly random subspace of the given dimension."""
    if not 0 <= dim <= params.lam:
        raise ValueError(f"dim must be in [0, {params.lam}], got {dim}")
    if dim == 0:
        return Subspace.zero(params)
    while True:
        gens = rng.integers(0, params.q, size=(dim, params.lam))
        reduced, rank = rref(gens, params.q)
        if rank == dim:
            return Subspace(params, tuple(tuple(int(c) for c in row) for row in reduced))


def random_superspace(A: Subspace, dim: int, rng: np.random.Generator) -> Subspace:
    """Uniformly random subspace of dimension ``dim`` containing ``A``."""
    if not A.dim <= dim <= A.params.lam:
        raise ValueError("superspace dimension out of range")
    S = A
    while S.dim < dim:
        v = rng.integers(0, A.params.q, size=A.params.lam)
        if not S.contains(v):
            S = Subspace.from_generators(A.params, np.vstack([S.matrix, v[None, :]]) if S.dim else v[None, :])
    return S


def gaussian_binomial(n: int, k: int, q: int) -> int:
    """Number of k-dimensional subspaces of F_q^n."""
    if not 0 <= k <= n:
        return 0
    num = den = 1
    for i in range(k):
        num *= q ** (n - i) - 1
        den *= q ** (i + 1) - 1
    return num // den
