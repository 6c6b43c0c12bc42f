"""Wave-function ensembles: samplers, partition function, density of states.

All samplers work in the eigenbasis of ``H(lam)``.  The uniform measure on
the unit sphere factorizes into populations ``q_k = |c_k|^2`` (uniform on the
simplex) and independent uniform phases, and both the canonical weight and
the microcanonical constraint act on the populations only.

Monte Carlo estimates of ``Z``, ``Phi`` and ``Omega`` are reported per unit
total volume; multiply by ``volume_constant(N) = pi^N / (N-1)!`` to recover
the absolute integrals over ``delta(1 - |x + ip|^2) dx dp``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import mcmc
from .errors import ConvergenceWarning, DimensionError, DomainError
from .mcmc import ChainReport
from .rng import BLOCK_SIZE, as_generator, block_sizes, map_blocks, substream
from .statespace import (
    ParameterizedHamiltonian,
    StateVector,
    expectations,
    normalize_rows,
)

Kind = Literal["uniform", "canonical", "microcanonical", "standard_gibbs"]

REJECTION_MIN_ACCEPTANCE = 1e-3
RHAT_MAX = 1.1


def volume_constant(N: int) -> float:
    """``int delta(1 - |c|^2) d^{2N}c``, i.e. half the area of the unit sphere in R^{2N}."""
    return math.pi**N / math.factorial(N - 1)


@dataclass(frozen=True)
class EnsembleSpec:
    kind: Kind
    hamiltonian: ParameterizedHamiltonian | None = None
    lam: np.ndarray | None = None
    beta: float | None = None
    energy: float | None = None
    dim: int | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "canonical", "microcanonical", "standard_gibbs"):
            raise DomainError(f"unknown ensemble kind {self.kind!r}")
        if self.hamiltonian is None:
            if self.kind != "uniform":
                raise DomainError(f"{self.kind} ensemble needs a Hamiltonian")
            if self.dim is None or self.dim < 2:
                raise DimensionError("uniform ensemble needs dim >= 2")
            return
        object.__setattr__(self, "dim", self.hamiltonian.dim)
        if self.kind != "uniform" or self.lam is not None:
            lam = self.hamiltonian.check_domain(self.lam if self.lam is not None else 0.0)
            object.__setattr__(self, "lam", lam)
        if self.kind in ("canonical", "standard_gibbs"):
            if self.beta is None or not self.beta > 0 or not math.isfinite(self.beta):
                raise DomainError(f"beta must be positive and finite, got {self.beta}")
        if self.kind == "microcanonical":
            if self.energy is None:
                raise DomainError("microcanonical ensemble needs an energy")
            ev = self.hamiltonian.spectrum(self.lam)
            if not ev[0] < self.energy < ev[-1]:
                raise DomainError(
                    f"energy {self.energy} outside open spectral interval ({ev[0]}, {ev[-1]})"
                )

    @classmethod
    def uniform(cls, dim: int) -> "EnsembleSpec":
        return cls("uniform", dim=dim)

    @classmethod
    def canonical(cls, hamiltonian, beta, lam) -> "EnsembleSpec":
        return cls("canonical", hamiltonian, lam=lam, beta=float(beta))

    @classmethod
    def microcanonical(cls, hamiltonian, energy, lam) -> "EnsembleSpec":
        return cls("microcanonical", hamiltonian, lam=lam, energy=float(energy))

    @classmethod
    def standard_gibbs(cls, hamiltonian, beta, lam) -> "EnsembleSpec":
        return cls("standard_gibbs", hamiltonian, lam=lam, beta=float(beta))

    @property
    def is_wave_function(self) -> bool:
        return self.kind != "standard_gibbs"

    def matrix(self) -> np.ndarray:
        return self.hamiltonian.matrix(self.lam)


@dataclass
class SampleSet:
    """States drawn from an ensemble, one per row, with sampler diagnostics."""

    states: np.ndarray
    spec: EnsembleSpec
    seed: int | None
    reports: list[ChainReport] = field(default_factory=list)

    @property
    def warnings(self) -> list[str]:
        return [w for r in self.reports for w in r.warnings]

    @property
    def method(self) -> str:
        return self.reports[0].method if self.reports else "exact"

    @property
    def max_rhat(self) -> float:
        vals = [r.rhat for r in self.reports if not math.isnan(r.rhat)]
        return max(vals) if vals else float("nan")


# ----------------------------------------------------------------- samplers

def _random_phases(rng, shape) -> np.ndarray:
    return np.exp(2j * np.pi * rng.random(shape))


def _from_populations(q: np.ndarray, V: np.ndarray, rng) -> np.ndarray:
    amps = np.sqrt(q) * _random_phases(rng, q.shape)
    return amps @ V.T


def uniform_sphere_batch(N: int, M: int, rng) -> np.ndarray:
    rng = as_generator(rng)
    if N < 2:
        raise DimensionError(f"N must be >= 2, got {N}")
    return normalize_rows(rng.normal(size=(M, N)) + 1j * rng.normal(size=(M, N)))


def sample_uniform_sphere(N: int, rng) -> StateVector:
    """One state uniformly distributed on the unit sphere of C^N."""
    return StateVector.from_complex(uniform_sphere_batch(N, 1, rng)[0])


def _tilted_qubit_populations(a: float, M: int, rng) -> np.ndarray:
    """Upper-level population ``y/2``, ``y`` on [0, 2] with density prop. to exp(-a y).

    For a qubit ``h = eps (y - 1)``, so the canonical weight is ``a = beta * eps``.
    """
    U = rng.random(M)
    if a < 1e-12:
        y = 2.0 * U
    else:
        y = -np.log1p(U * np.expm1(-2.0 * a)) / a
    return 0.5 * y


def canonical_batch(
    spec: EnsembleSpec,
    M: int,
    rng,
    min_acceptance: float = REJECTION_MIN_ACCEPTANCE,
    mcmc_options: dict | None = None,
) -> tuple[np.ndarray, ChainReport]:
    rng = as_generator(rng)
    ev, V = spec.hamiltonian.eigh(spec.lam)
    beta = spec.beta
    N = ev.size
    if N == 2:
        eps = 0.5 * (ev[1] - ev[0])
        q_hi = _tilted_qubit_populations(beta * eps, M, rng)
        q = np.column_stack([1.0 - q_hi, q_hi])
        return _from_populations(q, V, rng), ChainReport(method="exact")

    def proposals(m):
        q = rng.standard_exponential(size=(m, N))
        q /= q.sum(axis=1, keepdims=True)
        return q

    pilot = proposals(2000)
    acc_rate = float(np.exp(-beta * (pilot @ ev - ev[0])).mean())
    if acc_rate < min_acceptance:
        H = spec.matrix()
        C, report, _ = mcmc.metropolis_sphere(H, beta, M, rng, **(mcmc_options or {}))
        if not report.rhat < RHAT_MAX:
            msg = f"metropolis R-hat {report.rhat:.3f} exceeds {RHAT_MAX}"
            report.warnings.append(msg)
            warnings.warn(msg, ConvergenceWarning, stacklevel=2)
        return C, report

    kept = []
    n_kept = 0
    tried = 0
    accepted = 0
    batch = max(256, int(1.2 * M / acc_rate))
    while n_kept < M:
        q = proposals(batch)
        keep = rng.random(batch) < np.exp(-beta * (q @ ev - ev[0]))
        tried += batch
        accepted += int(keep.sum())
        kept.append(q[keep])
        n_kept += int(keep.sum())
    q = np.concatenate(kept)[:M]
    return _from_populations(q, V, rng), ChainReport(method="rejection", acceptance=accepted / tried)


def sample_canonical(spec: EnsembleSpec, rng) -> StateVector:
    """One draw from ``exp(-beta h) delta(1 - |c|^2) / Z``."""
    if spec.kind != "canonical":
        raise DomainError(f"expected a canonical spec, got {spec.kind}")
    C, _ = canonical_batch(spec, 1, rng)
    return StateVector.from_complex(C[0])


def microcanonical_batch(spec: EnsembleSpec, M: int, rng, **hit_and_run) -> tuple[np.ndarray, ChainReport]:
    rng = as_generator(rng)
    ev, V = spec.hamiltonian.eigh(spec.lam)
    E = spec.energy
    if ev.size == 2:
        q_hi = (E - ev[0]) / (ev[1] - ev[0])
        q = np.tile([1.0 - q_hi, q_hi], (M, 1))
        return _from_populations(q, V, rng), ChainReport(method="exact")
    q, report = mcmc.hit_and_run_slice(ev, E, M, rng, **hit_and_run)
    return _from_populations(q, V, rng), report


def sample_microcanonical(spec: EnsembleSpec, rng) -> StateVector:
    """One draw from the uniform measure on the shell ``h = E``."""
    if spec.kind != "microcanonical":
        raise DomainError(f"expected a microcanonical spec, got {spec.kind}")
    C, _ = microcanonical_batch(spec, 1, rng)
    return StateVector.from_complex(C[0])


def standard_gibbs_batch(spec: EnsembleSpec, M: int, rng) -> tuple[np.ndarray, ChainReport]:
    """Energy eigenstates with Gibbs probabilities (random global phase)."""
    rng = as_generator(rng)
    ev, V = spec.hamiltonian.eigh(spec.lam)
    w = np.exp(-spec.beta * (ev - ev[0]))
    k = rng.choice(ev.size, size=M, p=w / w.sum())
    return V.T[k] * _random_phases(rng, M)[:, None], ChainReport(method="exact")


def sample_batch(spec: EnsembleSpec, M: int, rng, **options) -> tuple[np.ndarray, ChainReport]:
    if spec.kind == "uniform":
        return uniform_sphere_batch(spec.dim, M, rng), ChainReport(method="exact")
    if spec.kind == "canonical":
        return canonical_batch(spec, M, rng, **options)
    if spec.kind == "microcanonical":
        return microcanonical_batch(spec, M, rng, **options)
    return standard_gibbs_batch(spec, M, rng)


def draw_states(
    spec: EnsembleSpec,
    M: int,
    seed: int,
    workers: int = 1,
    block: int = BLOCK_SIZE,
    stream_offset: int = 0,
    **options,
) -> SampleSet:
    """Draw ``M`` states in fixed-size blocks, block ``k`` on substream ``stream_offset + k``."""

    def one(k, n):
        return sample_batch(spec, n, substream(seed, stream_offset + k), **options)

    parts = map_blocks(one, block_sizes(M, block), workers)
    states = np.concatenate([p[0] for p in parts]) if parts else np.empty((0, spec.dim), complex)
    return SampleSet(states, spec, seed, [p[1] for p in parts])


# --------------------------------------------------------------- estimators

@dataclass(frozen=True)
class PartitionEstimate:
    value: float
    stderr: float
    samples: int
    volume_constant: float

    @property
    def absolute(self) -> float:
        return self.value * self.volume_constant

    @property
    def absolute_stderr(self) -> float:
        return self.stderr * self.volume_constant


def estimate_partition(
    hamiltonian: ParameterizedHamiltonian, beta: float, lam, M: int, rng
) -> PartitionEstimate:
    """Mean of ``exp(-beta h)`` over ``M`` uniform draws (``Z`` per unit total volume)."""
    if M < 1000:
        raise DomainError(f"need M >= 1000 draws, got {M}")
    H = hamiltonian.matrix(lam)
    C = uniform_sphere_batch(hamiltonian.dim, M, rng)
    if beta == 0:
        return PartitionEstimate(1.0, 0.0, M, volume_constant(hamiltonian.dim))
    f = np.exp(-beta * expectations(C, H))
    return PartitionEstimate(
        float(f.mean()), float(f.std(ddof=1) / math.sqrt(M)), M, volume_constant(hamiltonian.dim)
    )


def freedman_diaconis_width(values: np.ndarray) -> float:
    q75, q25 = np.percentile(values, [75, 25])
    iqr = q75 - q25
    if iqr <= 0:
        iqr = np.ptp(values) or 1.0
    return float(2.0 * iqr * len(values) ** (-1.0 / 3.0))


@dataclass(frozen=True)
class DosEstimate:
    """``Phi(E)`` and ``Omega(E)`` on a grid, per unit total volume."""

    energies: np.ndarray
    phi: np.ndarray
    phi_stderr: np.ndarray
    omega: np.ndarray
    omega_stderr: np.ndarray
    width: float
    ground_energy: float
    volume_constant: float

    def integrated_omega(self) -> np.ndarray:
        """``int_{E0}^{E} Omega`` by the trapezoid rule, starting from the ground energy."""
        E = np.concatenate([[self.ground_energy], self.energies])
        om = np.concatenate([[self.omega[0]], self.omega])
        return np.concatenate([[0.0], np.cumsum(0.5 * (om[1:] + om[:-1]) * np.diff(E))])[1:]


def dos_from_energies(h: np.ndarray, energies, ground_energy: float, N: int, width: float | None = None) -> DosEstimate:
    h = np.sort(np.asarray(h))
    M = h.size
    E = np.atleast_1d(np.asarray(energies, dtype=float))
    width = freedman_diaconis_width(h) if width is None else float(width)
    phi = np.searchsorted(h, E, side="right") / M
    lo = np.searchsorted(h, E - width / 2, side="right")
    hi = np.searchsorted(h, E + width / 2, side="right")
    frac = (hi - lo) / M
    omega = frac / width
    return DosEstimate(
        energies=E,
        phi=phi,
        phi_stderr=np.sqrt(phi * (1 - phi) / M),
        omega=omega,
        omega_stderr=np.sqrt(frac * (1 - frac) / M) / width,
        width=width,
        ground_energy=float(ground_energy),
        volume_constant=volume_constant(N),
    )


def estimate_dos_and_volume(
    hamiltonian: ParameterizedHamiltonian, energies, lam, M: int, rng, width: float | None = None
) -> DosEstimate:
    """``Phi`` as the fraction of uniform draws with ``h <= E``; ``Omega`` as its centered difference.

    The difference step defaults to the Freedman-Diaconis width of the ``h`` sample.
    """
    H = hamiltonian.matrix(lam)
    h = expectations(uniform_sphere_batch(hamiltonian.dim, M, rng), H)
    return dos_from_energies(h, energies, np.linalg.eigvalsh(H)[0], hamiltonian.dim, width)


def density_matrix_from_samples(states: np.ndarray, return_stderr: bool = False):
    """Average projector ``c c^dagger`` over sampled states (rows of ``states``)."""
    C = np.atleast_2d(states)
    M = C.shape[0]
    outer = C[:, :, None] * C[:, None, :].conj()
    rho = outer.mean(axis=0)
    rho = 0.5 * (rho + rho.conj().T)
    if not return_stderr:
        return rho
    err = (outer.real.std(axis=0, ddof=1) + 1j * outer.imag.std(axis=0, ddof=1)) / math.sqrt(M)
    return rho, err
