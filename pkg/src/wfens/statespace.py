"""Finite-dimensional Hilbert space in the real (x, p) representation.

A state ``c = x + i p`` is a point on the unit sphere of R^{2N}; the energy
expectation ``h(x, p; lam) = (x - ip)^T H(lam) (x + ip)`` is the generator of
the Schroedinger flow.  Batched helpers work on complex arrays of shape
``(M, N)`` and are what the samplers and propagators use internally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError

NORM_TOL = 1e-12
IMAG_TOL = 1e-12

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class StateVector:
    """Normalized state stored as real and imaginary amplitude vectors."""

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        p = np.array(self.p, dtype=float).reshape(-1)
        if x.shape != p.shape:
            raise DimensionError(f"x and p differ in length: {x.size} vs {p.size}")
        if x.size < 2:
            raise DimensionError(f"state dimension must be >= 2, got {x.size}")
        norm2 = float(x @ x + p @ p)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise DomainError(f"state not normalized: |c|^2 = {norm2!r}")
        x.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_complex(cls, c, normalize: bool = True) -> "StateVector":
        c = np.asarray(c, dtype=complex).reshape(-1)
        if normalize:
            c = c / np.linalg.norm(c)
        return cls(c.real, c.imag)

    @property
    def c(self) -> np.ndarray:
        return self.x + 1j * self.p

    @property
    def dim(self) -> int:
        return self.x.size

    @property
    def norm2(self) -> float:
        return float(self.x @ self.x + self.p @ self.p)


@dataclass(frozen=True)
class HermitianOperator:
    """``H = A + iB`` with ``A`` symmetric and ``B`` antisymmetric.

    Inputs are symmetrized, so any square real pair yields a Hermitian result.
    """

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
            raise DimensionError(f"need two equal square matrices, got {A.shape} and {B.shape}")
        A = 0.5 * (A + A.T)
        B = 0.5 * (B - B.T)
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @classmethod
    def from_matrix(cls, H) -> "HermitianOperator":
        H = np.asarray(H, dtype=complex)
        return cls(H.real, H.imag)

    @property
    def matrix(self) -> np.ndarray:
        return self.A + 1j * self.B

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.any(self.B)

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        return HermitianOperator(self.A + other.A, self.B + other.B)

    def __mul__(self, a: float) -> "HermitianOperator":
        return HermitianOperator(a * self.A, a * self.B)

    __rmul__ = __mul__


def _as_matrix(O) -> np.ndarray:
    if isinstance(O, HermitianOperator):
        return O.matrix
    return np.asarray(O, dtype=complex)


def expectation(s: StateVector, O) -> float:
    """Expectation ``(x - ip)^T O (x + ip)`` of a Hermitian operator."""
    H = _as_matrix(O)
    if H.shape != (s.dim, s.dim):
        raise DimensionError(f"operator {H.shape} does not act on dimension {s.dim}")
    c = s.c
    q = np.vdot(c, H @ c)
    scale = max(1.0, float(np.abs(H).max()))
    assert abs(q.imag) < IMAG_TOL * scale, f"non-real expectation {q!r}"
    return float(q.real)


def expectations(C: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Row-wise expectations for a batch of states ``C`` of shape ``(M, N)``."""
    C = np.atleast_2d(C)
    H = _as_matrix(H)
    if H.shape != (C.shape[1], C.shape[1]):
        raise DimensionError(f"operator {H.shape} does not act on dimension {C.shape[1]}")
    return np.einsum("mi,mi->m", C.conj(), C @ H.T).real


def normalize_rows(C: np.ndarray) -> np.ndarray:
    return C / np.linalg.norm(C, axis=1, keepdims=True)


@dataclass(frozen=True)
class ParameterizedHamiltonian:
    """Hermitian-matrix-valued function of a parameter vector.

    ``builder(lam)`` returns the complex ``N x N`` matrix and
    ``gradient_builder(lam)`` the list of partial derivatives.  ``bounds`` is
    an optional ``(n_params, 2)`` array of closed intervals.
    ``batch_builder``, when given, maps a ``(K, n_params)`` array to a
    ``(K, N, N)`` stack and is used by the propagator.
    """

    builder: Callable[[np.ndarray], np.ndarray]
    gradient_builder: Callable[[np.ndarray], Sequence[np.ndarray]]
    dim: int
    n_params: int = 1
    bounds: np.ndarray | None = None
    batch_builder: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    label: str = ""

    def coerce(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam.shape != (self.n_params,):
            raise DimensionError(f"expected {self.n_params} parameter(s), got shape {lam.shape}")
        return lam

    def check_domain(self, lam) -> np.ndarray:
        lam = self.coerce(lam)
        if not np.all(np.isfinite(lam)):
            raise DomainError(f"non-finite parameter {lam}")
        if self.bounds is not None:
            lo, hi = np.asarray(self.bounds, dtype=float).T
            if np.any(lam < lo) or np.any(lam > hi):
                raise DomainError(f"parameter {lam} outside domain {self.bounds.tolist()}")
        return lam

    def matrix(self, lam) -> np.ndarray:
        return np.asarray(self.builder(self.check_domain(lam)), dtype=complex)

    def matrices(self, lams) -> np.ndarray:
        lams = np.asarray(lams, dtype=float).reshape(-1, self.n_params)
        if self.batch_builder is not None:
            return np.asarray(self.batch_builder(lams), dtype=complex)
        return np.stack([self.matrix(lam) for lam in lams])

    def operator(self, lam) -> HermitianOperator:
        return HermitianOperator.from_matrix(self.matrix(lam))

    def gradient(self, lam) -> list[HermitianOperator]:
        lam = self.check_domain(lam)
        return [HermitianOperator.from_matrix(G) for G in self.gradient_builder(lam)]

    def gradient_stack(self, lams) -> np.ndarray:
        """Partial derivatives at each row of ``lams``, shape ``(K, n_params, N, N)``."""
        lams = np.asarray(lams, dtype=float).reshape(-1, self.n_params)
        terms = getattr(self.builder, "terms", None)
        if terms is not None:  # linear family: derivatives do not depend on lam
            return np.broadcast_to(terms, (lams.shape[0],) + terms.shape)
        return np.array([np.asarray(self.gradient_builder(lam), dtype=complex) for lam in lams])

    def spectrum(self, lam) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix(lam))

    def eigh(self, lam) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix(lam))

    @property
    def is_real(self) -> bool:
        """True when every building block is real symmetric (complex conjugation reverses time)."""
        return bool(getattr(self.builder, "is_real", False))


class _LinearBuilder:
    def __init__(self, H0: np.ndarray, terms: np.ndarray):
        self.H0 = H0
        self.terms = terms
        self.is_real = not (np.any(H0.imag) or np.any(terms.imag))

    def __call__(self, lam):
        return self.H0 + np.tensordot(lam, self.terms, axes=1)

    def batch(self, lams):
        return self.H0[None] + np.tensordot(lams, self.terms, axes=1)

    def gradient(self, lam):
        return list(self.terms)


def linear_hamiltonian(H0, terms, bounds=None, label: str = "") -> ParameterizedHamiltonian:
    """``H(lam) = H0 + sum_i lam_i * terms[i]``; every input is made Hermitian."""
    H0 = HermitianOperator.from_matrix(H0).matrix
    terms = np.stack([HermitianOperator.from_matrix(T).matrix for T in terms])
    if terms.shape[1:] != H0.shape:
        raise DimensionError(f"terms {terms.shape[1:]} do not match H0 {H0.shape}")
    b = _LinearBuilder(H0, terms)
    return ParameterizedHamiltonian(
        builder=b,
        gradient_builder=b.gradient,
        dim=H0.shape[0],
        n_params=terms.shape[0],
        bounds=None if bounds is None else np.asarray(bounds, dtype=float).reshape(-1, 2),
        batch_builder=b.batch,
        label=label,
    )


def generalized_force_expectation(s: StateVector, Hp: ParameterizedHamiltonian, lam) -> np.ndarray:
    """``-<dH/dlam_i>`` for each parameter."""
    return np.array([-expectation(s, G) for G in Hp.gradient(lam)])


def gradient_fd_error(Hp: ParameterizedHamiltonian, lam, delta: float = 1e-4) -> float:
    """Max entrywise gap between central differences of ``H`` and the declared gradient."""
    lam = Hp.check_domain(lam)
    worst = 0.0
    for i, G in enumerate(Hp.gradient(lam)):
        e = np.zeros_like(lam)
        e[i] = delta
        fd = (Hp.builder(lam + e) - Hp.builder(lam - e)) / (2 * delta)
        worst = max(worst, float(np.abs(fd - G.matrix).max()))
    return worst


# Bloch chart, N = 2.  Convention: c = (cos(g/2), e^{i d} sin(g/2)) up to a
# global phase, so <sigma_x, sigma_y, sigma_z> = (sin g cos d, sin g sin d, cos g).

@dataclass(frozen=True)
class BlochPoint:
    gamma: float
    delta: float

    @property
    def vector(self) -> np.ndarray:
        g, d = self.gamma, self.delta
        return np.array([np.sin(g) * np.cos(d), np.sin(g) * np.sin(d), np.cos(g)])


def _require_qubit(n: int) -> None:
    if n != 2:
        raise DimensionError(f"Bloch chart needs N = 2, got N = {n}")


def bloch_from_state(s: StateVector) -> BlochPoint:
    _require_qubit(s.dim)
    a, b = s.c
    gamma = 2.0 * np.arctan2(abs(b), abs(a))
    if abs(a) < 1e-15 or abs(b) < 1e-15:
        delta = 0.0
    else:
        delta = float(np.mod(np.angle(b) - np.angle(a), 2 * np.pi))
    return BlochPoint(float(gamma), delta)


def state_from_bloch(bp: BlochPoint, phase: float = 0.0) -> StateVector:
    c = np.exp(1j * phase) * np.array(
        [np.cos(bp.gamma / 2), np.exp(1j * bp.delta) * np.sin(bp.gamma / 2)]
    )
    return StateVector.from_complex(c)


def bloch_vectors(C: np.ndarray) -> np.ndarray:
    """Bloch vectors ``(M, 3)`` of a batch of qubit states."""
    C = np.atleast_2d(C)
    _require_qubit(C.shape[1])
    a, b = C[:, 0], C[:, 1]
    ab = a.conj() * b
    return np.column_stack([2 * ab.real, 2 * ab.imag, abs(a) ** 2 - abs(b) ** 2])


def states_from_bloch_vectors(r: np.ndarray, phases: np.ndarray | None = None) -> np.ndarray:
    """Qubit states (one per row) with the given unit Bloch vectors."""
    r = np.atleast_2d(r)
    z = np.clip(r[:, 2], -1.0, 1.0)
    a = np.sqrt(0.5 * (1 + z))
    b = np.sqrt(0.5 * (1 - z)) * np.exp(1j * np.arctan2(r[:, 1], r[:, 0]))
    C = np.column_stack([a.astype(complex), b])
    if phases is not None:
        C = C * np.exp(1j * phases)[:, None]
    return C


def fidelity(s1: StateVector, s2: StateVector) -> float:
    return float(abs(np.vdot(s1.c, s2.c)) ** 2)
