"""Work statistics: expectation-work samples, exact two-measurement atoms,
Jarzynski and Crooks-type checks for both wave-function ensembles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Protocol, _propagate_raw, evolve_batch, reverse_protocol
from .ensembles import (
    EnsembleSpec,
    dos_from_energies,
    freedman_diaconis_width,
    sample_batch,
    uniform_sphere_batch,
)
from .errors import DomainError, InsufficientOverlapError, WfensError
from .mcmc import ChainReport
from .rng import BLOCK_SIZE, block_sizes, map_blocks, substream
from .statespace import expectations
from .stats import jackknife, weighted_linear_fit

# stream offsets keep the independent sample sets of one experiment apart
REVERSE_STREAM_BASE = 1 << 24
DOS_STREAM_BASE = 1 << 30


class SamplingAborted(WfensError):
    """A sampler or propagation failure stopped a work run; ``diagnostics`` holds what finished."""

    def __init__(self, msg: str, diagnostics: dict):
        super().__init__(msg)
        self.diagnostics = diagnostics


@dataclass
class WorkSampleSet:
    values: np.ndarray
    spec: EnsembleSpec
    protocol_label: str
    seed: int
    streams: np.ndarray
    steps: int
    renormalized: int = 0
    reports: list[ChainReport] = field(default_factory=list)

    def __len__(self):
        return self.values.size


def _check_start(spec: EnsembleSpec, protocol: Protocol) -> None:
    if spec.lam is not None and not np.allclose(spec.lam, protocol.start, rtol=0, atol=1e-12):
        raise DomainError(f"ensemble prepared at lam={spec.lam} but protocol starts at {protocol.start}")


def sample_work_distribution(
    spec: EnsembleSpec,
    protocol: Protocol,
    M: int,
    steps: int,
    seed: int,
    workers: int = 1,
    block: int = BLOCK_SIZE,
    stream_offset: int = 0,
    min_samples: int = 1000,
) -> WorkSampleSet:
    """``M`` draws of ``w``: sample a state, evolve it, take the expectation difference.

    Block ``k`` of draws uses substream ``stream_offset + k``; the propagator is
    computed once and shared.
    """
    if not spec.is_wave_function:
        raise DomainError("expectation work needs a wave-function ensemble, not standard_gibbs")
    if M < min_samples:
        raise DomainError(f"need M >= {min_samples}, got {M}")
    _check_start(spec, protocol)
    U = _propagate_raw(protocol, steps)
    H0 = protocol.hamiltonian.matrix(protocol.start)
    H1 = protocol.hamiltonian.matrix(protocol.end)
    done: list[int] = []

    def one(k, n):
        C, report = sample_batch(spec, n, substream(seed, stream_offset + k))
        Ct, renorm = evolve_batch(C, U)
        w = expectations(Ct, H1) - expectations(C, H0)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(f"non-finite work in block {k}")
        done.append(k)
        return w, renorm, report

    sizes = block_sizes(M, block)
    try:
        parts = map_blocks(one, sizes, workers)
    except Exception as exc:
        raise SamplingAborted(
            f"work sampling failed: {exc}", {"completed_blocks": sorted(done), "blocks": len(sizes)}
        ) from exc
    streams = np.concatenate([np.full(n, stream_offset + k) for k, n in enumerate(sizes)])
    return WorkSampleSet(
        values=np.concatenate([p[0] for p in parts]),
        spec=spec,
        protocol_label=protocol.label,
        seed=seed,
        streams=streams,
        steps=steps,
        renormalized=sum(p[1] for p in parts),
        reports=[p[2] for p in parts],
    )


def work_support_bound(protocol: Protocol) -> tuple[float, float]:
    """Interval spanned by all differences of endpoint eigenvalues."""
    e0 = protocol.hamiltonian.spectrum(protocol.start)
    e1 = protocol.hamiltonian.spectrum(protocol.end)
    return float(e1[0] - e0[-1]), float(e1[-1] - e0[0])


# ------------------------------------------------------- two-measurement work

@dataclass(frozen=True)
class AtomicWorkPdf:
    """Atoms ``(W, probability)`` of the two-measurement work distribution."""

    atoms: np.ndarray  # (K, 2)

    @property
    def values(self) -> np.ndarray:
        return self.atoms[:, 0]

    @property
    def probabilities(self) -> np.ndarray:
        return self.atoms[:, 1]

    def exp_average(self, beta: float) -> float:
        return float(np.sum(self.probabilities * np.exp(-beta * self.values)))

    def mean(self) -> float:
        return float(np.sum(self.probabilities * self.values))

    def merged(self, tol: float = 1e-12, min_prob: float = 1e-15) -> "AtomicWorkPdf":
        """Combine coincident atoms and drop those with negligible weight."""
        order = np.argsort(self.values, kind="stable")
        out: list[list[float]] = []
        for W, p in self.atoms[order]:
            if out and abs(W - out[-1][0]) <= tol:
                out[-1][1] += p
            else:
                out.append([W, p])
        arr = np.array([a for a in out if a[1] > min_prob])
        return AtomicWorkPdf(arr.reshape(-1, 2))


def tms_work_distribution_exact(beta: float, protocol: Protocol, steps: int) -> AtomicWorkPdf:
    """``W = E_m(tau) - E_n(0)`` with weight ``exp(-beta E_n(0)) / Z_st |<m_tau|U|n_0>|^2``."""
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    Hp = protocol.hamiltonian
    e0, V0 = Hp.eigh(protocol.start)
    e1, V1 = Hp.eigh(protocol.end)
    U = _propagate_raw(protocol, steps)
    trans = np.abs(V1.conj().T @ U @ V0) ** 2  # [m, n]
    g = np.exp(-beta * (e0 - e0[0]))
    pn = g / g.sum()
    W = (e1[:, None] - e0[None, :]).ravel()
    P = (trans * pn[None, :]).ravel()
    return AtomicWorkPdf(np.column_stack([W, P]))


def z_standard(hamiltonian, beta: float, lam) -> float:
    return float(np.sum(np.exp(-beta * hamiltonian.spectrum(lam))))


# ------------------------------------------------------------------ histograms

@dataclass(frozen=True)
class WorkHistogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def probabilities(self) -> np.ndarray:
        """Probability mass per bin (the bar heights of a discrete histogram)."""
        return self.counts / self.total

    @property
    def densities(self) -> np.ndarray:
        return self.probabilities / self.widths

    @property
    def stderr(self) -> np.ndarray:
        p = self.probabilities
        return np.sqrt(p * (1 - p) / self.total) / self.widths

    @property
    def nonempty(self) -> int:
        return int(np.count_nonzero(self.counts))


def histogram_edges(values: np.ndarray, width: float | None = None, origin: float = 0.0) -> np.ndarray:
    """Uniform edges covering ``values``; bars centered on ``origin + k * width``.

    ``width=None`` applies the Freedman-Diaconis rule.
    """
    values = np.asarray(values)
    if width is None:
        width = freedman_diaconis_width(values)
    lo = math.floor((values.min() - origin) / width + 0.5)
    hi = math.ceil((values.max() - origin) / width - 0.5)
    if hi < lo:
        hi = lo
    ks = np.arange(lo, hi + 2)
    return origin + (ks - 0.5) * width


def work_histogram(values, edges=None, width: float | None = None) -> WorkHistogram:
    values = np.asarray(values)
    if edges is None:
        edges = histogram_edges(values, width)
    counts, _ = np.histogram(values, bins=edges)
    if counts.sum() != values.size:
        raise DomainError("histogram edges do not cover every sample")
    return WorkHistogram(np.asarray(edges, dtype=float), counts, int(values.size))


# -------------------------------------------------------------------- Jarzynski

@dataclass(frozen=True)
class JarzynskiEstimate:
    estimate: float
    stderr: float
    delta_f: float
    delta_f_stderr: float
    samples: int


def jarzynski_estimate(ws: WorkSampleSet | np.ndarray, beta: float, min_samples: int = 1000,
                       n_blocks: int = 100) -> JarzynskiEstimate:
    """Mean of ``exp(-beta w)`` and the implied ``Delta F``, both with jackknife errors."""
    w = np.asarray(ws.values if isinstance(ws, WorkSampleSet) else ws, dtype=float)
    if w.size < min_samples:
        raise DomainError(f"need >= {min_samples} work samples, got {w.size}")
    f = np.exp(-beta * w)
    est, err = jackknife(f, np.mean, n_blocks)
    df, df_err = jackknife(f, lambda a: -math.log(a.mean()) / beta, n_blocks)
    return JarzynskiEstimate(est, err, df, df_err, int(w.size))


# ------------------------------------------------------------------------ Crooks

@dataclass(frozen=True)
class CrooksReport:
    slope: float
    intercept: float
    covariance: np.ndarray
    chi2: float
    centers: np.ndarray
    log_ratio: np.ndarray
    variance: np.ndarray
    edges: np.ndarray

    @property
    def slope_stderr(self) -> float:
        return float(math.sqrt(self.covariance[0, 0]))

    @property
    def intercept_stderr(self) -> float:
        return float(math.sqrt(self.covariance[1, 1]))

    @property
    def bins_used(self) -> int:
        return int(self.centers.size)

    @property
    def dof(self) -> int:
        return self.bins_used - 2


def crooks_canonical_check(
    fwd: WorkSampleSet | np.ndarray,
    rev: WorkSampleSet | np.ndarray,
    beta: float | None = None,
    edges=None,
    width: float | None = None,
    min_count: int = 25,
    min_bins: int = 5,
) -> CrooksReport:
    """Weighted fit of ``ln[p(w) / p_rev(-w)]`` against ``w`` on a shared grid.

    Only bins with at least ``min_count`` draws on both sides enter; the
    variance of each log ratio is ``1/n_f - 1/M_f + 1/n_r - 1/M_r``.  Expect
    ``slope = beta`` and ``intercept = -beta Delta F``.
    """
    wf = np.asarray(getattr(fwd, "values", fwd), dtype=float)
    wr = -np.asarray(getattr(rev, "values", rev), dtype=float)
    if edges is None:
        edges = histogram_edges(np.concatenate([wf, wr]), width)
    nf, _ = np.histogram(wf, edges)
    nr, _ = np.histogram(wr, edges)
    use = (nf >= min_count) & (nr >= min_count)
    if use.sum() < min_bins:
        raise InsufficientOverlapError(
            f"insufficient overlap: {int(use.sum())} shared bins with >= {min_count} counts, need {min_bins}"
        )
    Mf, Mr = wf.size, wr.size
    centers = 0.5 * (edges[1:] + edges[:-1])[use]
    y = np.log(nf[use] / Mf) - np.log(nr[use] / Mr)
    var = 1 / nf[use] - 1 / Mf + 1 / nr[use] - 1 / Mr
    slope, intercept, cov, chi2 = weighted_linear_fit(centers, y, var)
    return CrooksReport(slope, intercept, cov, chi2, centers, y, var, np.asarray(edges))


# ------------------------------------------------- microcanonical relation

@dataclass(frozen=True)
class MicroFRRow:
    target: float
    forward_count: int
    reverse_count: int
    ratio: float
    ratio_stderr: float
    predicted: float
    predicted_stderr: float
    excluded: bool

    @property
    def combined_stderr(self) -> float:
        return math.hypot(self.ratio_stderr, self.predicted_stderr)

    @property
    def z_score(self) -> float:
        return (self.ratio - self.predicted) / self.combined_stderr if not self.excluded else float("nan")


@dataclass
class MicroFRReport:
    energy: float
    width: float
    rows: list[MicroFRRow]
    forward: WorkSampleSet

    def usable(self) -> list[MicroFRRow]:
        return [r for r in self.rows if not r.excluded]


def microcanonical_fr_check(
    E: float,
    protocol: Protocol,
    w_targets,
    M: int,
    steps: int,
    seed: int,
    width: float = 0.05,
    dos_samples: int | None = None,
    workers: int = 1,
) -> MicroFRReport:
    """Compare ``p_E(w) / p_rev_{E+w}(-w)`` with ``Omega(E+w, lam_tau) / Omega(E, lam_0)``.

    Each target gets its own reverse run from the shell ``E + w`` at
    ``lam_tau``.  Densities are bin averages over ``[w - width/2, w + width/2]``;
    the prediction uses the density-of-states estimator on independent uniform
    draws (``dos_samples``, default ``M``).
    """
    Hp = protocol.hamiltonian
    targets = np.atleast_1d(np.asarray(w_targets, dtype=float))
    e_end = Hp.spectrum(protocol.end)
    for w in targets:
        if not e_end[0] < E + w < e_end[-1]:
            raise DomainError(f"E + w = {E + w} outside the open spectrum of H(lam_tau)")
    fwd = sample_work_distribution(
        EnsembleSpec.microcanonical(Hp, E, protocol.start), protocol, M, steps, seed, workers
    )
    rev_protocol = reverse_protocol(protocol)

    dos_M = dos_samples or M
    dos_rng = substream(seed, DOS_STREAM_BASE)
    h0 = expectations(uniform_sphere_batch(Hp.dim, dos_M, dos_rng), Hp.matrix(protocol.start))
    dos_rng = substream(seed, DOS_STREAM_BASE + 1)
    h1 = expectations(uniform_sphere_batch(Hp.dim, dos_M, dos_rng), Hp.matrix(protocol.end))
    e_start = Hp.spectrum(protocol.start)
    om0 = dos_from_energies(h0, [E], e_start[0], Hp.dim, width)
    om1 = dos_from_energies(h1, E + targets, e_end[0], Hp.dim, width)

    rows = []
    for i, w in enumerate(targets):
        rev = sample_work_distribution(
            EnsembleSpec.microcanonical(Hp, E + w, protocol.end),
            rev_protocol, M, steps, seed, workers,
            stream_offset=REVERSE_STREAM_BASE * (i + 1),
        )
        nf = int(np.sum(np.abs(fwd.values - w) < width / 2))
        nr = int(np.sum(np.abs(rev.values + w) < width / 2))
        pred = om1.omega[i] / om0.omega[0]
        pred_err = pred * math.hypot(om1.omega_stderr[i] / om1.omega[i], om0.omega_stderr[0] / om0.omega[0])
        if nf == 0 or nr == 0:
            rows.append(MicroFRRow(float(w), nf, nr, float("nan"), float("nan"), pred, pred_err, True))
            continue
        ratio = (nf / fwd.values.size) / (nr / rev.values.size)
        rel = math.sqrt(max(1 / nf - 1 / fwd.values.size + 1 / nr - 1 / rev.values.size, 0.0))
        rows.append(MicroFRRow(float(w), nf, nr, ratio, ratio * rel, pred, pred_err, False))
    return MicroFRReport(float(E), float(width), rows, fwd)
