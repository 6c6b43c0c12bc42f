"""Landau-Zener two-level system: ``H(lam) = lam sigma_z + Delta sigma_x``.

Closed forms for the wave-function ensemble (``Z = pi^2 sinh(x)/x`` with
``x = beta * sqrt(lam^2 + Delta^2)``) and for the standard Gibbs ensemble
(``Z_st = 2 cosh(x)``), plus the two reference experiments: free energies
versus ``lam`` and work statistics for a half sweep from ``t = -T`` to 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .dynamics import Protocol
from .errors import DomainError
from .statespace import SIGMA_X, SIGMA_Z, ParameterizedHamiltonian, linear_hamiltonian

if TYPE_CHECKING:
    from .workstats import AtomicWorkPdf, JarzynskiEstimate, WorkHistogram

PI2 = math.pi**2
SERIES_CUTOFF = 1e-4


@dataclass(frozen=True)
class LZParams:
    delta: float = 1.0
    v: float = 1.0
    T: float = 5.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("delta", "v", "T", "beta"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise DomainError(f"{name} must be positive and finite, got {val}")

    @property
    def lam0(self) -> float:
        return -self.v * self.T / 2

    @property
    def eps0(self) -> float:
        return math.hypot(self.lam0, self.delta)

    @property
    def eps_tau(self) -> float:
        return self.delta


def lz_hamiltonian(delta: float) -> ParameterizedHamiltonian:
    return linear_hamiltonian(delta * SIGMA_X, [SIGMA_Z], label=f"LZ(Delta={delta})")


def lz_two_parameter_hamiltonian() -> ParameterizedHamiltonian:
    """Both ``lam`` and ``Delta`` as external parameters: ``H = lam sigma_z + Delta sigma_x``."""
    return linear_hamiltonian(np.zeros((2, 2)), [SIGMA_Z, SIGMA_X], label="LZ(lam, Delta)")


class _HalfSweep:
    def __init__(self, v: float, T: float):
        self.v = v
        self.T = T

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return (0.5 * self.v * (s - self.T))[..., None]


def lz_protocol(params: LZParams) -> tuple[ParameterizedHamiltonian, Protocol]:
    """Half sweep: experiment time ``s in [0, T]`` is physical time ``s - T``, so lam goes from -vT/2 to 0."""
    H = lz_hamiltonian(params.delta)
    return H, Protocol(H, _HalfSweep(params.v, params.T), params.T, label="LZ half sweep")


def splitting(lam, delta):
    return np.hypot(lam, delta)


def _log_sinhc(x):
    """``ln(sinh(x)/x)`` for ``x >= 0``, stable at both ends."""
    x = np.asarray(x, dtype=float)
    small = x < SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    big = xs + np.log1p(-np.exp(-2 * xs)) - np.log(2 * xs)
    return np.where(small, x * x / 6.0, big)


def log_z_analytic(beta, lam, delta):
    return math.log(PI2) + _log_sinhc(beta * splitting(lam, delta))


def z_analytic(beta, lam, delta):
    """``pi^2 sinh(beta eps) / (beta eps)``; the series ``1 + x^2/6 + x^4/120`` below 1e-4."""
    x = np.asarray(beta * splitting(lam, delta), dtype=float)
    xs = np.where(x < SERIES_CUTOFF, 1.0, x)
    return PI2 * np.where(x < SERIES_CUTOFF, 1 + x * x / 6 + x**4 / 120, np.sinh(xs) / xs)


def f_analytic(beta, lam, delta):
    return -log_z_analytic(beta, lam, delta) / beta


def log_z_standard(beta, lam, delta):
    x = beta * splitting(lam, delta)
    return np.logaddexp(x, -x)


def z_standard(beta, lam, delta):
    return 2 * np.cosh(beta * splitting(lam, delta))


def f_standard(beta, lam, delta):
    return -log_z_standard(beta, lam, delta) / beta


def langevin(x):
    """``coth(x) - 1/x``, with its series near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    return np.where(small, x / 3 - x**3 / 45, 1 / np.tanh(xs) - 1 / xs)


def energy_analytic(beta, lam, delta):
    """``E = -d ln Z / d beta = 1/beta - eps coth(beta eps)``."""
    eps = splitting(lam, delta)
    return -eps * langevin(beta * eps)


def bloch_polarization(beta, lam, delta) -> np.ndarray:
    """Canonical ensemble average of ``(sigma_x, sigma_y, sigma_z)``: ``-L(beta eps) n``."""
    eps = splitting(lam, delta)
    L = langevin(beta * eps)
    n = np.array([delta, 0.0, lam]) / eps if eps > 0 else np.zeros(3)
    return -L * n


def rho_canonical_analytic_delta0(beta: float, lam: float) -> np.ndarray:
    """Canonical wave-function density matrix for ``Delta = 0`` in the ``sigma_z`` basis."""
    L = float(langevin(beta * lam))
    return np.diag([0.5 * (1 - L), 0.5 * (1 + L)]).astype(complex)


def rho_canonical_analytic(beta: float, lam: float, delta: float) -> np.ndarray:
    """General ``Delta``: the ``Delta = 0`` form with ``lam -> eps`` in the energy eigenbasis, rotated back."""
    eps = float(splitting(lam, delta))
    diag = rho_canonical_analytic_delta0(beta, eps)
    ev, V = np.linalg.eigh(lam * SIGMA_Z + delta * SIGMA_X)
    V = V[:, ::-1]  # upper level first, matching the diag ordering
    return V @ diag @ V.conj().T


def rho_standard(beta: float, lam: float, delta: float) -> np.ndarray:
    ev, V = np.linalg.eigh(lam * SIGMA_Z + delta * SIGMA_X)
    w = np.exp(-beta * (ev - ev[0]))
    return (V * (w / w.sum())) @ V.conj().T


def fig1a_experiment(beta: float, delta: float, lams) -> np.ndarray:
    """Rows ``(lam, F_wf, F_std)`` over a sorted grid."""
    lams = np.sort(np.asarray(lams, dtype=float))
    return np.column_stack([lams, f_analytic(beta, lams, delta), f_standard(beta, lams, delta)])


@dataclass
class Fig1bResult:
    bars: WorkHistogram
    density: WorkHistogram
    atoms: AtomicWorkPdf
    jarzynski: JarzynskiEstimate
    tms_exp_average: float
    predicted_wf: float
    predicted_std: float
    renormalized: int


def fig1b_experiment(params: LZParams, M: int, steps: int = 4096, seed: int = 0, workers: int = 1,
                     bar_width: float = 0.25, bins: float | None = None) -> Fig1bResult:
    """Work statistics of the half sweep from a canonical start.

    The wave-function work samples are binned twice: bars of ``bar_width``
    centered on its multiples, and a density histogram (Freedman-Diaconis by
    default).  The two-measurement side is exact: four atoms.
    """
    from .ensembles import EnsembleSpec
    from .workstats import jarzynski_estimate, sample_work_distribution, tms_work_distribution_exact, work_histogram

    H, protocol = lz_protocol(params)
    spec = EnsembleSpec.canonical(H, params.beta, protocol.start)
    ws = sample_work_distribution(spec, protocol, M, steps, seed, workers, min_samples=1)
    atoms = tms_work_distribution_exact(params.beta, protocol, steps)
    b, d = params.beta, params.delta
    return Fig1bResult(
        bars=work_histogram(ws.values, width=bar_width),
        density=work_histogram(ws.values, width=bins),
        atoms=atoms,
        jarzynski=jarzynski_estimate(ws, b, min_samples=1),
        tms_exp_average=atoms.exp_average(b),
        predicted_wf=float(math.exp(log_z_analytic(b, 0.0, d) - log_z_analytic(b, params.lam0, d))),
        predicted_std=float(math.exp(log_z_standard(b, 0.0, d) - log_z_standard(b, params.lam0, d))),
        renormalized=ws.renormalized,
    )
