"""Equilibrium thermodynamics of the wave-function ensembles and heat-theorem checks.

Canonical: ``beta`` integrates ``dQ = dE + F . dlam`` with entropy
``S_c = beta E + ln Z``.  Microcanonical: ``Omega / Phi`` integrates ``dQ``
with entropy ``S_mu = ln Phi``.  For ``N = 2`` every quantity has a closed
form, ``H = h0 + eps n.sigma`` giving ``<sigma> = -L(beta eps) n`` (canonical)
and ``<sigma> . n = (E - h0) / eps`` (microcanonical shell); those are used
when ``analytic`` is requested.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensembles import (
    EnsembleSpec,
    draw_states,
    estimate_partition,
    freedman_diaconis_width,
    uniform_sphere_batch,
    volume_constant,
)
from .errors import DomainError
from .lzmodel import _log_sinhc, langevin
from .rng import substream
from .statespace import ParameterizedHamiltonian, expectations


def _pauli_components(O: np.ndarray) -> tuple[float, np.ndarray]:
    """``O = o0 I + o . sigma`` for a 2x2 Hermitian matrix."""
    o0 = 0.5 * float((O[0, 0] + O[1, 1]).real)
    o = np.array([O[1, 0].real, O[1, 0].imag, 0.5 * float((O[0, 0] - O[1, 1]).real)])
    return o0, o


def _qubit_axis(H: np.ndarray) -> tuple[float, float, np.ndarray]:
    h0, vec = _pauli_components(H)
    eps = float(np.linalg.norm(vec))
    n = vec / eps if eps > 0 else np.array([0.0, 0.0, 1.0])
    return h0, eps, n


@dataclass
class ThermoPoint:
    lam: np.ndarray
    E_mean: float
    force: np.ndarray
    entropy: float
    beta: float | None = None
    energy: float | None = None
    log_z: float | None = None
    log_phi: float | None = None
    omega: float | None = None
    integrating_factor: float | None = None
    E_stderr: float = 0.0
    force_stderr: np.ndarray | None = None
    method: str = "analytic"
    diagnostics: dict = field(default_factory=dict)


# ------------------------------------------------------------------ canonical

def canonical_analytic(hamiltonian: ParameterizedHamiltonian, beta: float, lam) -> tuple[float, float, np.ndarray]:
    """(absolute ln Z, E, F) for a two-level Hamiltonian."""
    if hamiltonian.dim != 2:
        raise DomainError("closed forms exist only for N = 2")
    H = hamiltonian.matrix(lam)
    h0, eps, n = _qubit_axis(H)
    pol = -float(langevin(beta * eps)) * n
    log_z = math.log(volume_constant(2)) - beta * h0 + float(_log_sinhc(beta * eps))
    E = h0 + eps * float(n @ pol)
    F = []
    for G in hamiltonian.gradient(lam):
        g0, g = _pauli_components(G.matrix)
        F.append(-(g0 + float(g @ pol)))
    return log_z, E, np.array(F)


def canonical_state_functions(
    hamiltonian: ParameterizedHamiltonian,
    beta: float,
    lam,
    M: int | None = None,
    seed: int = 0,
    analytic: bool | None = None,
) -> ThermoPoint:
    """Energy, generalized force and entropy in the canonical wave-function ensemble.

    ``analytic=None`` picks the closed form when ``N = 2`` and no ``M`` is given.
    """
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta}")
    lam = hamiltonian.check_domain(lam)
    if analytic is None:
        analytic = hamiltonian.dim == 2 and M is None
    if analytic:
        log_z, E, F = canonical_analytic(hamiltonian, beta, lam)
        return ThermoPoint(lam, E, F, beta * E + log_z, beta=beta, log_z=log_z)
    if M is None:
        raise DomainError("Monte Carlo evaluation needs a sample size M")
    spec = EnsembleSpec.canonical(hamiltonian, beta, lam)
    S = draw_states(spec, M, seed)
    h = expectations(S.states, hamiltonian.matrix(lam))
    forces = np.array([-expectations(S.states, G.matrix) for G in hamiltonian.gradient(lam)])
    Z = estimate_partition(hamiltonian, beta, lam, M, substream(seed, 1 << 28))
    log_z = math.log(Z.absolute)
    E = float(h.mean())
    return ThermoPoint(
        lam, E, forces.mean(axis=1), beta * E + log_z, beta=beta, log_z=log_z,
        E_stderr=float(h.std(ddof=1) / math.sqrt(M)),
        force_stderr=forces.std(axis=1, ddof=1) / math.sqrt(M),
        method=S.method,
        diagnostics={"log_z_stderr": Z.stderr / Z.value, "warnings": S.warnings},
    )


@dataclass
class HeatCheck:
    max_residual: float
    refined_residual: float
    step: float
    status: str

    @property
    def order_ratio(self) -> float:
        return self.max_residual / self.refined_residual if self.refined_residual > 0 else float("inf")


def _canonical_residual(hamiltonian, points: np.ndarray, axes: list[int], step: float) -> float:
    """Max over points and axes of ``|D_a S - beta (D_a E + F . D_a lam)|`` by central differences."""
    def funcs(pt):
        beta, lam = pt[0], pt[1:]
        log_z, E, F = canonical_analytic(hamiltonian, beta, lam)
        return beta * E + log_z, E, F

    worst = 0.0
    for pt in points:
        _, _, F = funcs(pt)
        for a in axes:
            e = np.zeros_like(pt)
            e[a] = step
            Sp, Ep, _ = funcs(pt + e)
            Sm, Em, _ = funcs(pt - e)
            dS = (Sp - Sm) / (2 * step)
            dE = (Ep - Em) / (2 * step)
            work = F[a - 1] if a > 0 else 0.0
            worst = max(worst, abs(dS - pt[0] * (dE + work)))
    return worst


def heat_theorem_canonical_check(
    hamiltonian: ParameterizedHamiltonian, beta_grid, lam_grids
) -> HeatCheck:
    """Pointwise heat theorem ``dS_c = beta dQ`` on a tensor grid, with one refinement.

    ``lam_grids`` has one 1-D grid per parameter; axes with a single value
    are held fixed.  The differencing step is the smallest grid spacing and
    is halved for the refinement run; a second-order scheme should shrink the
    residual about fourfold.
    """
    grids = [np.atleast_1d(np.asarray(beta_grid, dtype=float))]
    if hamiltonian.n_params == 1 and np.ndim(lam_grids[0] if len(lam_grids) else 0) == 0:
        lam_grids = [lam_grids]
    grids += [np.atleast_1d(np.asarray(g, dtype=float)) for g in lam_grids]
    if len(grids) != 1 + hamiltonian.n_params:
        raise DomainError("need one grid per Hamiltonian parameter")
    if np.any(grids[0] <= 0):
        raise DomainError("beta grid must be positive")
    axes = [i for i, g in enumerate(grids) if g.size > 1]
    if not axes:
        raise DomainError("at least one grid must vary")
    step = min(float(np.min(np.diff(np.sort(grids[a])))) for a in axes)
    points = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, len(grids))
    r1 = _canonical_residual(hamiltonian, points, axes, step)
    r2 = _canonical_residual(hamiltonian, points, axes, step / 2)
    status = "ok" if (r1 < 1e-12 or r1 / max(r2, 1e-300) > 3.0) else "grid too coarse"
    return HeatCheck(r1, r2, step, status)


def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def canonical_loop_integral(
    hamiltonian: ParameterizedHamiltonian, vertices, nodes: int = 64, fd_step: float = 1e-5
) -> float:
    """``oint beta (dE + F . dlam)`` around the closed polygon through ``vertices``.

    Vertices are points ``(beta, lam_1, ..., lam_P)``.  Along each straight
    segment ``dE/ds`` comes from central differences and the integral from
    Gauss-Legendre quadrature.
    """
    V = np.asarray(vertices, dtype=float)
    V = np.vstack([V, V[:1]])
    s, w = _gauss_legendre(nodes)
    total = 0.0
    for a, b in zip(V[:-1], V[1:]):
        d = b - a
        for si, wi in zip(s, w):
            p = a + si * d
            _, E_plus, _ = canonical_analytic(hamiltonian, *_split(p + fd_step * d))
            _, E_minus, _ = canonical_analytic(hamiltonian, *_split(p - fd_step * d))
            _, _, F = canonical_analytic(hamiltonian, *_split(p))
            dE = (E_plus - E_minus) / (2 * fd_step)
            total += wi * p[0] * (dE + float(F @ d[1:]))
    return total


def _split(p):
    return p[0], p[1:]


# ------------------------------------------------------------- microcanonical

def microcanonical_analytic(hamiltonian: ParameterizedHamiltonian, E: float, lam):
    """(Phi, Omega, F) per unit total volume for a two-level Hamiltonian."""
    if hamiltonian.dim != 2:
        raise DomainError("closed forms exist only for N = 2")
    h0, eps, n = _qubit_axis(hamiltonian.matrix(lam))
    u = (E - h0) / eps
    phi = float(np.clip(0.5 * (1 + u), 0.0, 1.0))
    omega = 1.0 / (2 * eps) if abs(u) < 1 else 0.0
    pol = np.clip(u, -1, 1) * n
    F = []
    for G in hamiltonian.gradient(lam):
        g0, g = _pauli_components(G.matrix)
        F.append(-(g0 + float(g @ pol)))
    return phi, omega, np.array(F)


def _check_inside(hamiltonian, E, lam):
    ev = hamiltonian.spectrum(lam)
    if not ev[0] < E < ev[-1]:
        raise DomainError(f"E = {E} outside the open spectrum ({ev[0]}, {ev[-1]})")


def microcanonical_state_functions(
    hamiltonian: ParameterizedHamiltonian,
    E: float,
    lam,
    M: int | None = None,
    seed: int = 0,
    analytic: bool | None = None,
    width: float | None = None,
) -> ThermoPoint:
    """Force on the shell, ``Phi``, ``Omega`` and the integrating factor ``Omega / Phi``.

    ``S_mu = ln Phi`` uses the absolute volume (``Phi`` times ``pi^N / (N-1)!``).
    """
    lam = hamiltonian.check_domain(lam)
    _check_inside(hamiltonian, E, lam)
    V = volume_constant(hamiltonian.dim)
    if analytic is None:
        analytic = hamiltonian.dim == 2 and M is None
    if analytic:
        phi, omega, F = microcanonical_analytic(hamiltonian, E, lam)
        return ThermoPoint(lam, E, F, math.log(phi * V), energy=E, log_phi=math.log(phi * V),
                           omega=omega * V, integrating_factor=omega / phi)
    if M is None:
        raise DomainError("Monte Carlo evaluation needs a sample size M")
    spec = EnsembleSpec.microcanonical(hamiltonian, E, lam)
    S = draw_states(spec, M, seed)
    forces = np.array([-expectations(S.states, G.matrix) for G in hamiltonian.gradient(lam)])
    h = np.sort(expectations(uniform_sphere_batch(hamiltonian.dim, M, substream(seed, 1 << 28)),
                             hamiltonian.matrix(lam)))
    width = freedman_diaconis_width(h) if width is None else width
    phi = np.searchsorted(h, E, side="right") / M
    omega = (np.searchsorted(h, E + width / 2) - np.searchsorted(h, E - width / 2)) / (M * width)
    return ThermoPoint(
        lam, E, forces.mean(axis=1), math.log(phi * V), energy=E, log_phi=math.log(phi * V),
        omega=omega * V, integrating_factor=omega / phi,
        force_stderr=forces.std(axis=1, ddof=1) / math.sqrt(M), method=S.method,
        diagnostics={"width": width, "phi_stderr": math.sqrt(phi * (1 - phi) / M)},
    )


@dataclass
class MicroHeatCheck:
    residuals: np.ndarray  # (n_points, n_params)
    stderr: np.ndarray
    points: np.ndarray
    status: str
    required_samples: int | None = None

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.residuals) / self.stderr))


def heat_theorem_microcanonical_check(
    hamiltonian: ParameterizedHamiltonian,
    E_grid,
    lam_grid,
    M: int,
    seed: int = 0,
    lam_step: float = 0.05,
    E_step: float = 0.05,
    n_blocks: int = 50,
) -> MicroHeatCheck:
    """Monte Carlo test of ``d ln Phi = (Omega / Phi)(dE + F . dlam)``.

    At every grid point the ``lam`` components of the residual
    ``D_lam ln Phi - (Omega/Phi) F`` are formed from ``M`` common uniform
    draws (``Phi`` and ``Omega`` at all shifted arguments) and ``M``
    microcanonical draws (``F``).  Errors come from a blocked jackknife over
    both sample sets.  The ``E`` component vanishes identically because
    ``Omega`` is defined as the ``E``-difference of ``Phi``.
    """
    E_grid = np.atleast_1d(np.asarray(E_grid, dtype=float))
    lam_grid = np.atleast_2d(np.asarray(lam_grid, dtype=float).reshape(-1, hamiltonian.n_params))
    C = uniform_sphere_batch(hamiltonian.dim, M, substream(seed, 1 << 28))
    P = hamiltonian.n_params
    residuals, errors, points, scales = [], [], [], []
    bounds = np.linspace(0, M, n_blocks + 1).astype(int)
    blk = np.repeat(np.arange(n_blocks), np.diff(bounds))

    for j, lam in enumerate(lam_grid):
        for i, E in enumerate(E_grid):
            _check_inside(hamiltonian, E, lam)
            spec = EnsembleSpec.microcanonical(hamiltonian, E, lam)
            S = draw_states(spec, M, seed, stream_offset=(j * E_grid.size + i + 1) << 12)
            grads = hamiltonian.gradient(lam)
            Fs = np.array([-expectations(S.states, G.matrix) for G in grads])  # (P, M)
            h0 = expectations(C, hamiltonian.matrix(lam))
            below = [h0 <= E + E_step, h0 <= E - E_step, h0 <= E]
            shifted = []
            for k in range(P):
                e = np.zeros(P)
                e[k] = lam_step
                hp = expectations(C, hamiltonian.matrix(lam + e))
                hm = expectations(C, hamiltonian.matrix(lam - e))
                shifted.append((hp <= E, hm <= E))

            # per-block sums make the jackknife cheap
            def sums(mask):
                return np.bincount(blk, weights=mask.astype(float), minlength=n_blocks)

            phi_up, phi_dn, phi0 = (sums(m) for m in below)
            sh = [(sums(a), sums(b)) for a, b in shifted]
            F_blk = np.array([np.bincount(blk, weights=f, minlength=n_blocks) for f in Fs])

            def statistic(keep):
                n = bounds[1:][keep].sum() - bounds[:-1][keep].sum()
                phi = phi0[keep].sum() / n
                omega = (phi_up[keep].sum() - phi_dn[keep].sum()) / (n * 2 * E_step)
                F = F_blk[:, keep].sum(axis=1) / n
                out = []
                for k in range(P):
                    d_ln_phi = (np.log(sh[k][0][keep].sum()) - np.log(sh[k][1][keep].sum())) / (2 * lam_step)
                    out.append(d_ln_phi - omega / phi * F[k])
                return np.array(out), np.abs(omega / phi * F)

            full, scale = statistic(np.ones(n_blocks, bool))
            reps = []
            for b in range(n_blocks):
                keep = np.ones(n_blocks, bool)
                keep[b] = False
                reps.append(statistic(keep)[0])
            reps = np.array(reps)
            err = np.sqrt((n_blocks - 1) / n_blocks * ((reps - reps.mean(axis=0)) ** 2).sum(axis=0))
            scales.append(scale)
            residuals.append(full)
            errors.append(err)
            points.append(np.concatenate([[E], lam]))

    residuals, errors = np.array(residuals), np.array(errors)
    # noise comparable to the terms being balanced makes the test meaningless
    signal = float(np.max(scales))
    status = "ok" if np.all(np.abs(residuals) <= 4 * errors) else "violated"
    required = None
    if signal == 0 or errors.max() > 0.25 * signal:
        status = "inconclusive"
        target = 0.05 * signal if signal > 0 else 1e-3
        required = int(math.ceil(M * (errors.max() / target) ** 2))
    return MicroHeatCheck(residuals, errors, np.array(points), status, required)


# ------------------------------------------------ surface vs volume entropy

@dataclass
class EntropyFormReport:
    """Proportionality defects of ``d ln Omega`` and ``d ln Phi`` against ``dQ``.

    For a 1-form ``a = a_E dE + sum_i a_i dlam_i`` to equal ``g dQ`` for some
    scalar ``g``, every ``a_i - a_E F_i`` must vanish; the defect is the
    largest such component (zero when no parameter varies).
    """

    points: np.ndarray
    surface_defect: np.ndarray
    volume_defect: np.ndarray
    surface_stderr: np.ndarray | None = None
    volume_stderr: np.ndarray | None = None
    flagged: list[int] = field(default_factory=list)


def _defect(a_E, a_lam, F):
    if a_lam.size == 0:
        return 0.0
    return float(np.max(np.abs(a_lam - a_E * F)))


def surface_vs_volume_entropy_report(
    hamiltonian: ParameterizedHamiltonian,
    E_grid,
    lam_grid,
    step: float = 1e-4,
    vary_lambda: bool = True,
) -> EntropyFormReport:
    """Closed-form (N = 2) proportionality test of ``d ln Omega`` and ``d ln Phi`` with ``dQ``.

    ``vary_lambda=False`` restricts to the ``E``-only slice, where any 1-form
    is exact and the defect is zero by construction.
    """
    E_grid = np.atleast_1d(np.asarray(E_grid, dtype=float))
    lam_grid = np.atleast_2d(np.asarray(lam_grid, dtype=float).reshape(-1, hamiltonian.n_params))
    pts, surf, vol, flagged = [], [], [], []
    for lam in lam_grid:
        for E in E_grid:
            _check_inside(hamiltonian, E, lam)
            phi, omega, F = microcanonical_analytic(hamiltonian, E, lam)
            lnO = lambda e, l: math.log(microcanonical_analytic(hamiltonian, e, l)[1])
            lnP = lambda e, l: math.log(microcanonical_analytic(hamiltonian, e, l)[0])
            derivs = {}
            for name, fn in (("surf", lnO), ("vol", lnP)):
                aE = (fn(E + step, lam) - fn(E - step, lam)) / (2 * step)
                if vary_lambda:
                    al = []
                    for k in range(lam.size):
                        e = np.zeros(lam.size)
                        e[k] = step
                        al.append((fn(E, lam + e) - fn(E, lam - e)) / (2 * step))
                    al = np.array(al)
                else:
                    al = np.array([])
                if abs(aE) < 1e-14 and np.all(np.abs(al) < 1e-14):
                    flagged.append(len(pts))
                derivs[name] = _defect(aE, al, F)
            pts.append(np.concatenate([[E], lam]))
            surf.append(derivs["surf"])
            vol.append(derivs["vol"])
    return EntropyFormReport(np.array(pts), np.array(surf), np.array(vol), flagged=flagged)


def surface_vs_volume_entropy_mc(
    hamiltonian: ParameterizedHamiltonian,
    E: float,
    lam,
    M: int,
    seed: int = 0,
    E_step: float = 0.1,
    lam_step: float = 0.1,
    n_blocks: int = 50,
) -> tuple[float, float, float, float]:
    """Monte Carlo defects at one point: (surface, surface stderr, volume, volume stderr).

    ``Phi`` and ``Omega`` at shifted arguments share one set of uniform draws;
    the force comes from microcanonical draws; errors by blocked jackknife.
    Single-parameter Hamiltonians only.
    """
    if hamiltonian.n_params != 1:
        raise DomainError("Monte Carlo entropy report supports one parameter")
    lam = hamiltonian.check_domain(lam)
    _check_inside(hamiltonian, E, lam)
    C = uniform_sphere_batch(hamiltonian.dim, M, substream(seed, 1 << 28))
    S = draw_states(EnsembleSpec.microcanonical(hamiltonian, E, lam), M, seed)
    f = -expectations(S.states, hamiltonian.gradient(lam)[0].matrix)
    e = np.array([lam_step])
    h = {k: expectations(C, hamiltonian.matrix(lam + s * e)) for k, s in (("0", 0), ("+", 1), ("-", -1))}
    bounds = np.linspace(0, M, n_blocks + 1).astype(int)
    blk = np.repeat(np.arange(n_blocks), np.diff(bounds))

    def cnt(mask):
        return np.bincount(blk, weights=mask.astype(float), minlength=n_blocks)

    w = E_step / 2
    win = lambda hh, e0: cnt((hh > e0 - w) & (hh <= e0 + w))
    table = {
        "phi0": cnt(h["0"] <= E), "phiEp": cnt(h["0"] <= E + E_step), "phiEm": cnt(h["0"] <= E - E_step),
        "phiLp": cnt(h["+"] <= E), "phiLm": cnt(h["-"] <= E),
        "om0": win(h["0"], E), "omEp": win(h["0"], E + E_step), "omEm": win(h["0"], E - E_step),
        "omLp": win(h["+"], E), "omLm": win(h["-"], E),
    }
    F_blk = np.bincount(blk, weights=f, minlength=n_blocks)
    sizes = np.diff(bounds)

    def stat(keep):
        t = {k: v[keep].sum() for k, v in table.items()}
        F = F_blk[keep].sum() / sizes[keep].sum()
        a_E = (math.log(t["omEp"]) - math.log(t["omEm"])) / (2 * E_step)
        a_l = (math.log(t["omLp"]) - math.log(t["omLm"])) / (2 * lam_step)
        b_E = (math.log(t["phiEp"]) - math.log(t["phiEm"])) / (2 * E_step)
        b_l = (math.log(t["phiLp"]) - math.log(t["phiLm"])) / (2 * lam_step)
        return np.array([a_l - a_E * F, b_l - b_E * F])

    full = stat(np.ones(n_blocks, bool))
    reps = []
    for b in range(n_blocks):
        keep = np.ones(n_blocks, bool)
        keep[b] = False
        reps.append(stat(keep))
    reps = np.array(reps)
    err = np.sqrt((n_blocks - 1) / n_blocks * ((reps - reps.mean(axis=0)) ** 2).sum(axis=0))
    return float(full[0]), float(err[0]), float(full[1]), float(err[1])
