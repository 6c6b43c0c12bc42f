"""Markov-chain helpers: sphere random walk, hit-and-run on polytopes, diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .statespace import expectations, normalize_rows


def autocorr_time(trace: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's adaptive window.

    ``trace`` may be 1-D or ``(n_chains, n_steps)``; the autocorrelation
    function is averaged over chains before windowing.
    """
    x = np.atleast_2d(np.asarray(trace, dtype=float))
    n = x.shape[1]
    if n < 4:
        return 1.0
    x = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, n=size, axis=1)
    acf = np.fft.irfft(f * f.conj(), n=size, axis=1)[:, :n].mean(axis=0)
    if acf[0] <= 0:
        return 1.0
    acf /= acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    window = np.arange(n) < c * taus
    m = int(np.argmin(window)) if not window.all() else n - 1
    return float(max(taus[m], 1.0))


def split_rhat(chains: np.ndarray) -> float:
    """Gelman-Rubin potential scale reduction on split chains ``(n_chains, n)``."""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    n = chains.shape[1] // 2
    if n < 2:
        return float("nan")
    halves = np.concatenate([chains[:, :n], chains[:, n : 2 * n]], axis=0)
    means = halves.mean(axis=1)
    W = halves.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0:
        return 1.0
    var_plus = (n - 1) / n * W + B / n
    return float(math.sqrt(var_plus / W))


def metropolis_accept_prob(h_from, h_to, beta: float):
    return np.minimum(1.0, np.exp(-beta * (np.asarray(h_to) - np.asarray(h_from))))


def detailed_balance_residual(log: list[tuple[np.ndarray, np.ndarray, np.ndarray]], beta: float) -> float:
    """Max relative violation of ``pi(c) a(c->c') = pi(c') a(c'->c)`` over logged proposals.

    Each log entry holds (current energies, proposed energies, acceptance
    probabilities actually used by the sampler).
    """
    worst = 0.0
    for h, hp, a in log:
        ref = np.minimum(h, hp)
        fwd = np.exp(-beta * (h - ref)) * a
        rev = np.exp(-beta * (hp - ref)) * metropolis_accept_prob(hp, h, beta)
        worst = max(worst, float(np.max(np.abs(fwd - rev) / np.maximum(fwd, rev))))
    return worst


@dataclass
class ChainReport:
    method: str
    acceptance: float = 1.0
    burn_in: int = 0
    thin: int = 1
    tau_int: float = 1.0
    rhat: float = float("nan")
    step_size: float = float("nan")
    warnings: list[str] = field(default_factory=list)


def metropolis_sphere(
    H: np.ndarray,
    beta: float,
    n: int,
    rng: np.random.Generator,
    n_chains: int = 4,
    burn_in: int = 2000,
    pilot: int = 2000,
    target_accept: float = 0.3,
    log: list | None = None,
) -> tuple[np.ndarray, ChainReport, np.ndarray]:
    """Random-walk Metropolis for the weight ``exp(-beta h)`` on the unit sphere.

    Proposal ``c' = (c + s xi) / |c + s xi|`` with complex normal ``xi``; its
    density depends only on the angle between ``c`` and ``c'``, hence it is
    symmetric.  Returns states ``(n, N)``, a report, and the thinned energy
    traces ``(n_chains, m)`` used for R-hat.
    """
    N = H.shape[0]
    C = normalize_rows(rng.normal(size=(n_chains, N)) + 1j * rng.normal(size=(n_chains, N)))
    h = expectations(C, H)
    step = 0.5 / math.sqrt(N)

    def sweep(record: bool):
        nonlocal C, h
        xi = rng.normal(size=C.shape) + 1j * rng.normal(size=C.shape)
        Cp = normalize_rows(C + step * xi)
        hp = expectations(Cp, H)
        a = metropolis_accept_prob(h, hp, beta)
        acc = rng.random(n_chains) < a
        if record and log is not None:
            log.append((h.copy(), hp.copy(), a.copy()))
        C = np.where(acc[:, None], Cp, C)
        h = np.where(acc, hp, h)
        return acc

    accepted = 0
    for i in range(burn_in):
        acc = sweep(False)
        accepted += acc.sum()
        if (i + 1) % 100 == 0:
            rate = accepted / (100 * n_chains)
            step = float(np.clip(step * math.exp(rate - target_accept), 1e-4, 2.0))
            accepted = 0

    trace = np.empty((n_chains, pilot))
    accepted = 0
    for i in range(pilot):
        accepted += sweep(True).sum()
        trace[:, i] = h
    tau = autocorr_time(trace)
    thin = max(1, int(math.ceil(2.0 * tau)))

    per_chain = -(-n // n_chains)
    out = np.empty((n_chains, per_chain, N), dtype=complex)
    kept = np.empty((n_chains, per_chain))
    total = pilot
    for j in range(per_chain):
        for _ in range(thin):
            accepted += sweep(True).sum()
            total += 1
        out[:, j] = C
        kept[:, j] = h
    report = ChainReport(
        method="metropolis",
        acceptance=float(accepted / (total * n_chains)),
        burn_in=burn_in + pilot,
        thin=thin,
        tau_int=tau,
        rhat=split_rhat(kept),
        step_size=step,
    )
    return out.reshape(-1, N)[:n], report, kept


def polytope_interior_point(energies: np.ndarray, E: float) -> np.ndarray:
    """Strictly positive populations on the simplex with mean energy ``E``.

    Mixes the uniform point with the extreme level on the side of ``E``;
    requires ``min(energies) < E < max(energies)``.
    """
    n = energies.size
    q = np.full(n, 1.0 / n)
    mean = energies.mean()
    if E == mean:
        return q
    k = int(np.argmax(energies)) if E > mean else int(np.argmin(energies))
    t = (E - mean) / (energies[k] - mean)
    e = np.zeros(n)
    e[k] = 1.0
    return (1 - t) * q + t * e


def hit_and_run_slice(
    energies: np.ndarray,
    E: float,
    n: int,
    rng: np.random.Generator,
    n_chains: int = 64,
    burn_in: int | None = None,
    thin: int | None = None,
) -> tuple[np.ndarray, ChainReport]:
    """Uniform samples from ``{q >= 0, sum q = 1, sum q_k E_k = E}`` by hit-and-run.

    Chains advance in parallel; each emits one point every ``thin`` moves after
    ``burn_in`` moves from a common interior start.
    """
    energies = np.asarray(energies, dtype=float)
    N = energies.size
    A = np.vstack([np.ones(N), energies])
    # orthonormal null-space basis (N, N-2)
    _, _, vt = np.linalg.svd(A)
    basis = vt[2:].T
    dim = basis.shape[1]
    q0 = polytope_interior_point(energies, E)
    burn_in = 100 + 20 * dim * dim if burn_in is None else burn_in
    thin = max(1, 2 * dim) if thin is None else thin
    n_chains = max(1, min(n_chains, n))

    Q = np.tile(q0, (n_chains, 1))

    def move():
        nonlocal Q
        d = rng.normal(size=(n_chains, dim)) @ basis.T
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = -Q / d
        lo = np.where(d > 0, bound, -np.inf).max(axis=1)
        hi = np.where(d < 0, bound, np.inf).min(axis=1)
        t = lo + (hi - lo) * rng.random(n_chains)
        Q = Q + t[:, None] * d
        # project back onto the affine slice to stop round-off drift
        Q = q0 + ((Q - q0) @ basis) @ basis.T
        Q = np.maximum(Q, 0.0)

    for _ in range(burn_in):
        move()
    per_chain = -(-n // n_chains)
    out = np.empty((per_chain, n_chains, N))
    for j in range(per_chain):
        for _ in range(thin):
            move()
        out[j] = Q
    report = ChainReport(method="hit-and-run", burn_in=burn_in, thin=thin)
    return out.reshape(-1, N)[:n], report
