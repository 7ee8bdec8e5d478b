"""Dense pure-state simulation over the computational basis of Z_q^lam.

A register holds ``q**lam`` amplitudes indexed by vectors in lexicographic
order (first coordinate most significant). Bipartite states are stored as a
``(N, N)`` amplitude matrix whose first axis is register 1.

Most routines come in two layers: array-level helpers that act on one axis
of an amplitude array (shared by single- and two-register code), and the
value types used by the protocol.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .field import FieldParams, Subspace, all_vectors

ATOL = 1e-9
SINGLE_REGISTER_CAP = 2 ** 20
BIPARTITE_CAP = 2 ** 24


class SimulationCapError(ValueError):
    """The requested Hilbert space exceeds the dense-simulation budget."""


class ZeroProbabilityBranch(ValueError):
    """A measurement branch of (numerically) zero probability was forced."""


def check_cap(params: FieldParams, registers: int = 1) -> None:
    size = params.q ** (params.lam * registers)
    cap = SINGLE_REGISTER_CAP if registers == 1 else BIPARTITE_CAP
    if size > cap:
        raise SimulationCapError(
            f"q^(lam*{registers}) = {size} exceeds simulation cap {cap}")


@dataclass(frozen=True, eq=False)
class PureState:
    params: FieldParams
    amplitudes: np.ndarray

    def __post_init__(self):
        check_cap(self.params)
        amps = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != self.params.dim:
            raise ValueError(f"expected {self.params.dim} amplitudes, got {amps.shape[0]}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > ATOL:
            raise ValueError(f"state is not normalised (norm {norm})")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, params: FieldParams, v) -> PureState:
        from .field import vector_index
        amps = np.zeros(params.dim, dtype=np.complex128)
        amps[vector_index(params, v)] = 1.0
        return cls(params, amps)

    @classmethod
    def from_unnormalized(cls, params: FieldParams, amps) -> PureState:
        amps = np.asarray(amps, dtype=np.complex128)
        norm = np.linalg.norm(amps)
        if norm < 1e-12:
            raise ZeroProbabilityBranch("cannot normalise a zero vector")
        return cls(params, amps / norm)

    def inner(self, other: PureState) -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density(self) -> DensityOperator:
        return DensityOperator(self.params, np.outer(self.amplitudes, self.amplitudes.conj()))

    def tensor(self, other: PureState) -> BipartiteState:
        return BipartiteState(self.params, np.outer(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class BipartiteState:
    params: FieldParams
    amplitudes: np.ndarray  # shape (N, N); axis 0 is register 1

    def __post_init__(self):
        check_cap(self.params, registers=2)
        n = self.params.dim
        amps = np.asarray(self.amplitudes, dtype=np.complex128).reshape(n, n)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > ATOL:
            raise ValueError(f"bipartite state is not normalised (norm {norm})")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_unnormalized(cls, params: FieldParams, amps) -> BipartiteState:
        amps = np.asarray(amps, dtype=np.complex128)
        norm = np.linalg.norm(amps)
        if norm < 1e-12:
            raise ZeroProbabilityBranch("cannot normalise a zero vector")
        return cls(params, amps / norm)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    params: FieldParams
    matrix: np.ndarray

    def __post_init__(self):
        n = self.params.dim
        mat = np.asarray(self.matrix, dtype=np.complex128)
        if mat.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got {mat.shape}")
        if not np.allclose(mat, mat.conj().T, atol=ATOL):
            raise ValueError("density operator is not Hermitian")
        tr = np.trace(mat).real
        if abs(tr - 1.0) > ATOL:
            raise ValueError(f"density operator has trace {tr}")
        if np.linalg.eigvalsh(mat).min() < -1e-8:
            raise ValueError("density operator is not positive semidefinite")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)


@dataclass(frozen=True)
class MeasurementOutcome:
    outcome: object
    probability: float
    post_state: PureState | BipartiteState | DensityOperator | None = None
    details: dict = field(default_factory=dict)


# --- array-level helpers ---------------------------------------------------

def _on_axis(arr: np.ndarray, axis: int, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    moved = np.moveaxis(arr, axis, 0)
    return np.moveaxis(fn(moved), 0, axis)


def qft_array(arr: np.ndarray, params: FieldParams, axis: int = 0, inverse: bool = False) -> np.ndarray:
    """Fourier transform over Z_q^lam applied to one register axis.

    Forward maps |x> to q^(-lam/2) sum_y w^<x,y> |y> with w = exp(2 pi i / q).
    """
    q, lam = params.q, params.lam

    def fn(a):
        rest = a.shape[1:]
        cube = a.reshape((q,) * lam + rest)
        axes = tuple(range(lam))
        if inverse:
            out = np.fft.fftn(cube, axes=axes, norm="ortho")
        else:
            out = np.fft.ifftn(cube, axes=axes, norm="ortho")
        return out.reshape((params.dim,) + rest)

    return _on_axis(np.asarray(arr, dtype=np.complex128), axis, fn)


def mask_array(arr: np.ndarray, mask: np.ndarray, axis: int = 0) -> np.ndarray:
    shape = [1] * arr.ndim
    shape[axis] = -1
    return arr * np.asarray(mask, dtype=bool).reshape(shape)


def _sample(rng: np.random.Generator | None, p_one: float, force: int | None) -> int:
    p_one = min(max(p_one, 0.0), 1.0)
    if force is not None:
        p = p_one if force else 1.0 - p_one
        if p < 1e-12:
            raise ZeroProbabilityBranch(f"forced outcome {force} has probability {p}")
        return int(force)
    if p_one >= 1.0:
        return 1
    if p_one <= 0.0:
        return 0
    if rng is None:
        raise ValueError("an rng is required to sample a non-deterministic outcome")
    return int(rng.random() < p_one)


def measure_mask_array(arr: np.ndarray, mask: np.ndarray, rng, axis: int = 0,
                       force: int | None = None) -> tuple[int, float, np.ndarray]:
    """Measure the indicator ``mask`` on one register; returns (bit, prob, normalised post array)."""
    inside = mask_array(arr, mask, axis)
    p_one = float(np.vdot(inside, inside).real)
    bit = _sample(rng, p_one, force)
    post = inside if bit else arr - inside
    prob = p_one if bit else 1.0 - p_one
    return bit, prob, post / math.sqrt(max(prob, 1e-300))


def two_step_projection_array(arr: np.ndarray, params: FieldParams, mask: np.ndarray,
                              dual_mask: np.ndarray, rng, axis: int = 0,
                              force: tuple[int, int] | None = None) -> tuple[int, int, float, np.ndarray]:
    """Membership of ``mask`` in the computational basis, then of ``dual_mask``
    in the Fourier basis, then the inverse transform.

    With ``mask``/``dual_mask`` the indicators of A and its dual, the joint
    outcome (1, 1) is the projection onto |A>.
    """
    fa, fb = force if force is not None else (None, None)
    a, pa, post = measure_mask_array(arr, mask, rng, axis, fa)
    post = qft_array(post, params, axis)
    b, pb, post = measure_mask_array(post, dual_mask, rng, axis, fb)
    post = qft_array(post, params, axis, inverse=True)
    return a, b, pa * pb, post


def two_step_acceptance(arr: np.ndarray, params: FieldParams, mask: np.ndarray,
                        dual_mask: np.ndarray, axis: int = 0) -> float:
    """Probability of the joint (1, 1) outcome, without sampling."""
    v = mask_array(arr, mask, axis)
    v = mask_array(qft_array(v, params, axis), dual_mask, axis)
    return float(np.vdot(v, v).real)


def rank_one_measure_array(arr: np.ndarray, target: np.ndarray, rng, axis: int = 0,
                           force: int | None = None) -> tuple[int, float, np.ndarray]:
    """Measure {|t><t|, I - |t><t|} on one register."""
    t = np.asarray(target, dtype=np.complex128)
    moved = np.moveaxis(arr, axis, 0)
    coeff = np.tensordot(t.conj(), moved, axes=(0, 0))
    proj = np.multiply.outer(t, coeff)
    inside = np.moveaxis(proj, 0, axis)
    p_one = float(np.vdot(inside, inside).real)
    bit = _sample(rng, p_one, force)
    post = inside if bit else arr - inside
    prob = p_one if bit else 1.0 - p_one
    return bit, prob, post / math.sqrt(max(prob, 1e-300))


# --- state-level operations ------------------------------------------------

def subspace_state(A: Subspace) -> PureState:
    check_cap(A.params)
    mask = A.mask()
    amps = mask.astype(np.complex128) / math.sqrt(A.size)
    return PureState(A.params, amps)


def qft(s: PureState, inverse: bool = False) -> PureState:
    return PureState(s.params, qft_array(s.amplitudes, s.params, inverse=inverse))


def _predicate_mask(params: FieldParams, predicate) -> np.ndarray:
    if isinstance(predicate, Subspace):
        return predicate.mask()
    if hasattr(predicate, "mask"):
        return np.asarray(predicate.mask(params) if callable(predicate.mask) else predicate.mask, dtype=bool)
    if isinstance(predicate, np.ndarray):
        if predicate.shape != (params.dim,):
            raise ValueError("predicate mask has the wrong length")
        return predicate.astype(bool)
    vecs = all_vectors(params)
    return np.fromiter((bool(predicate(v)) for v in vecs), dtype=bool, count=params.dim)


def measure_membership(s: PureState, predicate, rng=None, force: int | None = None) -> MeasurementOutcome:
    """Compute the predicate into an ancilla and measure it.

    ``predicate`` may be a :class:`Subspace`, a boolean mask over
    Z_q^lam, an object with a ``mask(params)`` method, or a per-vector callable.
    """
    mask = _predicate_mask(s.params, predicate)
    bit, prob, post = measure_mask_array(s.amplitudes, mask, rng, force=force)
    return MeasurementOutcome(bit, prob, PureState.from_unnormalized(s.params, post))


def project_onto_subspace_state(s: PureState, A: Subspace, rng=None,
                                force: tuple[int, int] | None = None) -> MeasurementOutcome:
    """Run-style projection: Pi_A, then Pi_{A-dual} in the Fourier basis.

    ``outcome`` is True iff both membership bits are 1; ``details`` carries
    the bits and the analytic acceptance probability.
    """
    mask, dual_mask = A.mask(), A.dual().mask()
    p_acc = two_step_acceptance(s.amplitudes, s.params, mask, dual_mask)
    a, b, prob, post = two_step_projection_array(s.amplitudes, s.params, mask, dual_mask, rng, force=force)
    return MeasurementOutcome(bool(a and b), prob, PureState.from_unnormalized(s.params, post),
                              {"a": a, "b": b, "accept_probability": p_acc})


def acceptance_probability(s: PureState, A: Subspace) -> float:
    """|<A|s>|^2."""
    return abs(subspace_state(A).inner(s)) ** 2


def _as_density(x) -> np.ndarray:
    if isinstance(x, PureState):
        return np.outer(x.amplitudes, x.amplitudes.conj())
    if isinstance(x, DensityOperator):
        return x.matrix
    return np.asarray(x, dtype=np.complex128)


def trace_distance(x, y) -> float:
    """Half the trace norm of ``x - y``; accepts pure states or density operators."""
    dx, dy = _as_density(x), _as_density(y)
    if dx.shape != dy.shape:
        raise ValueError(f"dimension mismatch: {dx.shape} vs {dy.shape}")
    diff = dx - dy
    diff = (diff + diff.conj().T) / 2
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


def pure_trace_distance(u: PureState, v: PureState) -> float:
    """Closed form sqrt(1 - |<u|v>|^2) for pure states."""
    return math.sqrt(max(0.0, 1.0 - abs(u.inner(v)) ** 2))


def partial_trace_second(s: BipartiteState) -> DensityOperator:
    m = s.amplitudes
    return DensityOperator(s.params, m @ m.conj().T)


def partial_trace_first(s: BipartiteState) -> DensityOperator:
    m = s.amplitudes
    return DensityOperator(s.params, m.T @ m.conj())


def conditional_second_register(s: BipartiteState, A: Subspace, rng=None,
                                force: bool | None = None) -> tuple[bool, DensityOperator, float]:
    """Measure {|A><A|, I - |A><A|} on register 1; return register 2's state.

    Returns ``(accept, post, probability)`` where ``post`` is the reduced
    state of register 2 conditioned on the sampled outcome and
    ``probability`` is that outcome's Born probability.
    """
    target = subspace_state(A).amplitudes
    f = None if force is None else int(force)
    bit, prob, post = rank_one_measure_array(s.amplitudes, target, rng, axis=0, force=f)
    m = post
    reduced = m.T @ m.conj()
    reduced = (reduced + reduced.conj().T) / 2
    reduced /= np.trace(reduced).real
    return bool(bit), DensityOperator(s.params, reduced), prob


def global_phase_aligned(amps: np.ndarray) -> np.ndarray:
    """Rotate so that the largest-magnitude amplitude is positive real."""
    amps = np.asarray(amps, dtype=np.complex128)
    k = int(np.argmax(np.abs(amps)))
    if abs(amps[k]) == 0:
        return amps
    return amps * (abs(amps[k]) / amps[k])


def states_equal(u: PureState, v: PureState, atol: float = ATOL) -> bool:
    """Equality up to global phase."""
    return bool(np.allclose(global_phase_aligned(u.amplitudes),
                            global_phase_aligned(v.amplitudes), atol=atol))


# --- gentle measurement ------------------------------------------------------

@dataclass(frozen=True)
class BinaryMeasurement:
    """A two-outcome measurement (U, Pi_0, Pi_1 = 1 - Pi_0).

    ``project`` applies Pi_0 to an amplitude vector; ``rotate``/``unrotate``
    apply U and its adjoint (identity when omitted).
    """
    project: Callable[[np.ndarray], np.ndarray]
    rotate: Callable[[np.ndarray], np.ndarray] | None = None
    unrotate: Callable[[np.ndarray], np.ndarray] | None = None

    @classmethod
    def computational(cls, mask: np.ndarray) -> BinaryMeasurement:
        mask = np.asarray(mask, dtype=bool)
        return cls(lambda a: a * mask)

    @classmethod
    def fourier(cls, mask: np.ndarray, params: FieldParams) -> BinaryMeasurement:
        mask = np.asarray(mask, dtype=bool)
        return cls(lambda a: a * mask,
                   lambda a: qft_array(a, params),
                   lambda a: qft_array(a, params, inverse=True))

    @classmethod
    def subspace_state(cls, A: Subspace) -> BinaryMeasurement:
        t = subspace_state(A).amplitudes
        return cls(lambda a: t * np.vdot(t, a))


def gentle_measurement_bound_check(s: PureState, measurement: BinaryMeasurement,
                                   atol: float = ATOL) -> tuple[float, float]:
    """Measure, uncompute, and compare against the sqrt(eps) disturbance bound.

    The recovered state is the non-selective mixture
    sum_i U^dag Pi_i U rho U^dag Pi_i U. Returns ``(tdist, bound)`` and raises
    ``AssertionError`` if the bound is violated beyond ``atol``.
    """
    psi = s.amplitudes
    rotated = measurement.rotate(psi) if measurement.rotate else psi
    acc = measurement.project(rotated)
    rej = rotated - acc
    if measurement.unrotate:
        acc, rej = measurement.unrotate(acc), measurement.unrotate(rej)
    eps = max(0.0, 1.0 - float(np.vdot(acc, acc).real))
    # everything lives in span{acc, rej}; compute the distance in that 2-d frame
    u, sv, _ = np.linalg.svd(np.stack([acc, rej], axis=1), full_matrices=False)
    frame = u[:, :max(int(np.sum(sv > 1e-14)), 1)]
    c_psi, c_acc, c_rej = frame.conj().T @ psi, frame.conj().T @ acc, frame.conj().T @ rej
    rho = np.outer(c_psi, c_psi.conj())
    rho_tilde = np.outer(c_acc, c_acc.conj()) + np.outer(c_rej, c_rej.conj())
    tdist = trace_distance(rho, rho_tilde)
    bound = math.sqrt(eps)
    if tdist > bound + atol:
        raise AssertionError(f"gentle-measurement bound violated: {tdist} > {bound}")
    return tdist, bound


# --- binary state dump -------------------------------------------------------

STATE_MAGIC = b"QLSV"


def dump_state(s: PureState) -> bytes:
    """16-byte header then little-endian (re, im) float64 pairs."""
    header = STATE_MAGIC + struct.pack("<III", s.params.q, s.params.lam, 0)
    body = np.empty(2 * s.params.dim, dtype="<f8")
    body[0::2] = s.amplitudes.real
    body[1::2] = s.amplitudes.imag
    return header + body.tobytes()


def load_state(data: bytes) -> PureState:
    if len(data) < 16 or data[:4] != STATE_MAGIC:
        raise ValueError("not a QLSV state dump")
    q, lam, _ = struct.unpack("<III", data[4:16])
    params = FieldParams(q, lam)
    body = np.frombuffer(data[16:], dtype="<f8")
    if body.shape[0] != 2 * params.dim:
        raise ValueError("state dump length does not match header")
    return PureState(params, body[0::2] + 1j * body[1::2])
