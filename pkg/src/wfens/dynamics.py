"""Driven unitary dynamics and the two expressions for expectation work.

The propagator is an ordered product of midpoint exponentials
``exp(-i H(lam(t + dt/2)) dt)``; each factor is exactly unitary, so norm
errors stay at round-off regardless of step count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, IntegrationError
from .statespace import ParameterizedHamiltonian, StateVector, expectations

NORM_DRIFT_TOL = 1e-12


class _Reversed:
    """``t -> f(tau - t)``; reversing again hands back ``f`` itself."""

    def __init__(self, original: Callable, tau: float):
        self.original = original
        self.tau = tau

    def __call__(self, t):
        return self.original(self.tau - np.asarray(t, dtype=float))


class _Constant:
    def __init__(self, lam):
        self.lam = np.atleast_1d(np.asarray(lam, dtype=float))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.broadcast_to(self.lam, t.shape + self.lam.shape).copy()


class _Linear:
    def __init__(self, lam0, lam1, tau):
        self.lam0 = np.atleast_1d(np.asarray(lam0, dtype=float))
        self.lam1 = np.atleast_1d(np.asarray(lam1, dtype=float))
        self.tau = tau

    def __call__(self, t):
        s = np.asarray(t, dtype=float)[..., None] / self.tau
        return self.lam0 + s * (self.lam1 - self.lam0)


@dataclass(frozen=True)
class Protocol:
    """Parameter schedule ``lam(t)`` on ``[0, tau]`` driving ``hamiltonian``.

    ``schedule`` should accept an array of times and return ``(..., n_params)``;
    scalar-only callables are evaluated point by point.  A sudden quench has
    ``tau = 0`` and explicit ``endpoints``.
    """

    hamiltonian: ParameterizedHamiltonian
    schedule: Callable | None
    tau: float
    label: str = ""
    sudden: bool = False
    endpoints: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.tau < 0 or not math.isfinite(self.tau):
            raise DomainError(f"duration must be finite and >= 0, got {self.tau}")
        if self.sudden:
            if self.endpoints is None:
                raise DomainError("sudden protocol needs explicit endpoints")
            ends = tuple(self.hamiltonian.check_domain(e) for e in self.endpoints)
            object.__setattr__(self, "endpoints", ends)
        elif self.schedule is None:
            raise DomainError("protocol needs a schedule")

    def values(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        P = self.hamiltonian.n_params
        try:
            out = np.asarray(self.schedule(ts), dtype=float)
            if out.shape != (ts.size, P):
                out = out.reshape(ts.size, P)
        except (TypeError, ValueError):
            out = np.array([np.atleast_1d(self.schedule(float(t))) for t in ts], dtype=float)
            out = out.reshape(ts.size, P)
        return out

    def __call__(self, t: float) -> np.ndarray:
        if self.sudden:
            return self.endpoints[0] if t <= 0 else self.endpoints[1]
        return self.values([t])[0]

    @property
    def start(self) -> np.ndarray:
        return self.endpoints[0] if self.sudden else self.values([0.0])[0]

    @property
    def end(self) -> np.ndarray:
        return self.endpoints[1] if self.sudden else self.values([self.tau])[0]

    def is_continuous(self, n: int = 1024) -> bool:
        """Refinement test: for a continuous schedule the largest jump shrinks with the grid."""
        if self.sudden or self.tau == 0:
            return True
        coarse = np.abs(np.diff(self.values(np.linspace(0, self.tau, n + 1)), axis=0)).max()
        fine = np.abs(np.diff(self.values(np.linspace(0, self.tau, 8 * n + 1)), axis=0)).max()
        return not (fine > 0.5 * coarse and fine > 1e-12)

    def is_time_reversal_invariant(self) -> bool:
        return self.hamiltonian.is_real


def constant_protocol(hamiltonian, lam, tau: float, label: str = "constant") -> Protocol:
    return Protocol(hamiltonian, _Constant(hamiltonian.check_domain(lam)), float(tau), label)


def linear_protocol(hamiltonian, lam0, lam1, tau: float, label: str = "linear") -> Protocol:
    if tau <= 0:
        raise DomainError("linear ramp needs tau > 0; use sudden_protocol for a quench")
    return Protocol(hamiltonian, _Linear(hamiltonian.check_domain(lam0), hamiltonian.check_domain(lam1), tau), float(tau), label)


def sudden_protocol(hamiltonian, lam0, lam1, label: str = "sudden") -> Protocol:
    return Protocol(hamiltonian, None, 0.0, label, sudden=True, endpoints=(lam0, lam1))


def reverse_protocol(protocol: Protocol) -> Protocol:
    """Schedule ``t -> lam(tau - t)`` on the same interval."""
    if protocol.sudden:
        return Protocol(protocol.hamiltonian, None, 0.0, _rev_label(protocol.label), True,
                        (protocol.endpoints[1], protocol.endpoints[0]))
    sched = protocol.schedule
    if isinstance(sched, _Constant):
        rev = sched
    elif isinstance(sched, _Reversed) and sched.tau == protocol.tau:
        rev = sched.original
    else:
        rev = _Reversed(sched, protocol.tau)
    return Protocol(protocol.hamiltonian, rev, protocol.tau, _rev_label(protocol.label))


def _rev_label(label: str) -> str:
    return label[: -len(" (reversed)")] if label.endswith(" (reversed)") else f"{label} (reversed)"


# ---------------------------------------------------------------- propagation

def step_exponentials(H: np.ndarray, dt: float) -> np.ndarray:
    """``exp(-i H_k dt)`` for a stack ``(K, N, N)`` of Hermitian matrices."""
    if not np.all(np.isfinite(H)):
        raise IntegrationError("non-finite Hamiltonian entries")
    if H.shape[-1] == 2:
        h0 = 0.5 * (H[:, 0, 0] + H[:, 1, 1]).real
        hz = 0.5 * (H[:, 0, 0] - H[:, 1, 1]).real
        hx = H[:, 1, 0].real
        hy = H[:, 1, 0].imag
        norm = np.sqrt(hx * hx + hy * hy + hz * hz)
        cos = np.cos(norm * dt)
        sinc = dt * np.sinc(norm * dt / np.pi)  # sin(|h| dt) / |h|
        ph = np.exp(-1j * h0 * dt)
        U = np.empty(H.shape, dtype=complex)
        U[:, 0, 0] = ph * (cos - 1j * sinc * hz)
        U[:, 1, 1] = ph * (cos + 1j * sinc * hz)
        U[:, 0, 1] = ph * (-1j * sinc) * (hx - 1j * hy)
        U[:, 1, 0] = ph * (-1j * sinc) * (hx + 1j * hy)
        return U
    E, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * E * dt)[:, None, :]) @ V.conj().transpose(0, 2, 1)


def _midpoint_factors(protocol: Protocol, steps: int) -> tuple[np.ndarray, float]:
    dt = protocol.tau / steps
    lams = protocol.values((np.arange(steps) + 0.5) * dt)
    return step_exponentials(protocol.hamiltonian.matrices(lams), dt), dt


def _ordered_product(factors: np.ndarray) -> np.ndarray:
    U = factors[0].copy()
    for F in factors[1:]:
        U = F @ U
    return U


@dataclass(frozen=True)
class PropagatorResult:
    U: np.ndarray
    steps: int
    error_estimate: float = float("nan")

    @property
    def unitarity_residual(self) -> float:
        N = self.U.shape[0]
        return float(np.linalg.norm(self.U.conj().T @ self.U - np.eye(N)))

    @property
    def volume_residual(self) -> float:
        return abs(abs(np.linalg.det(real_representation(self.U))) - 1.0)


def real_representation(U: np.ndarray) -> np.ndarray:
    """Action of ``U`` on ``(x, p)`` as a ``2N x 2N`` real matrix."""
    return np.block([[U.real, -U.imag], [U.imag, U.real]])


def _propagate_raw(protocol: Protocol, steps: int) -> np.ndarray:
    N = protocol.hamiltonian.dim
    if protocol.sudden or protocol.tau == 0:
        return np.eye(N, dtype=complex)
    U = _ordered_product(_midpoint_factors(protocol, steps)[0])
    if not np.all(np.isfinite(U)):
        raise IntegrationError("propagator has non-finite entries")
    return U


def propagate(protocol: Protocol, steps: int, estimate_error: bool = True) -> PropagatorResult:
    """Time-ordered propagator over ``[0, tau]``.

    The truncation error is estimated from a run at twice the step count,
    ``|U_n - U_2n|_F / 3`` for the second-order midpoint rule.
    """
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}")
    U = _propagate_raw(protocol, steps)
    err = float("nan")
    if estimate_error:
        err = float(np.linalg.norm(U - _propagate_raw(protocol, 2 * steps)) / 3.0)
    return PropagatorResult(U, steps, err)


def evolve_batch(C: np.ndarray, U: np.ndarray) -> tuple[np.ndarray, int]:
    """Apply ``U`` to each row of ``C``; rows drifting off the sphere are renormalized and counted."""
    out = np.atleast_2d(C) @ U.T
    norms = np.linalg.norm(out, axis=1)
    drift = np.abs(norms * norms - 1.0) > NORM_DRIFT_TOL
    if drift.any():
        out[drift] /= norms[drift, None]
    return out, int(drift.sum())


def evolve(state: StateVector, protocol: Protocol, steps: int) -> StateVector:
    U = propagate(protocol, steps, estimate_error=False).U
    out, _ = evolve_batch(state.c[None], U)
    return StateVector.from_complex(out[0], normalize=False)


def endpoint_work_batch(C: np.ndarray, protocol: Protocol, U: np.ndarray) -> np.ndarray:
    H0 = protocol.hamiltonian.matrix(protocol.start)
    H1 = protocol.hamiltonian.matrix(protocol.end)
    Ct, _ = evolve_batch(C, U)
    return expectations(Ct, H1) - expectations(C, H0)


def work_endpoint(state: StateVector, protocol: Protocol, steps: int) -> float:
    """``h(c_tau; lam_tau) - h(c_0; lam_0)``."""
    U = _propagate_raw(protocol, steps)
    return float(endpoint_work_batch(state.c[None], protocol, U)[0])


def schedule_rate(protocol: Protocol, ts) -> np.ndarray:
    """``d lam / dt`` at times ``ts`` by five-point stencils of step ``1e-3 tau``.

    Central where the stencil fits inside ``[0, tau]``, one-sided near the
    ends, so the schedule is never evaluated outside its interval.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    h = 1e-3 * protocol.tau
    central = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12 * h)
    forward = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12 * h)
    out = np.empty((ts.size, protocol.hamiltonian.n_params))
    lo, hi = ts < 2 * h, ts > protocol.tau - 2 * h
    mid = ~(lo | hi)
    offsets = np.arange(-2, 3)
    for mask, coef, offs in ((mid, central, offsets), (lo, forward, offsets + 2), (hi, -forward, -(offsets + 2))):
        if mask.any():
            t = ts[mask]
            vals = protocol.values((t[:, None] + h * offs[None, :]).ravel()).reshape(t.size, 5, -1)
            out[mask] = np.einsum("j,kjp->kp", coef, vals)
    return out


def power_work_batch(C: np.ndarray, protocol: Protocol, steps: int) -> np.ndarray:
    """``int lam_dot . <dH/dlam> dt`` along each trajectory.

    States come from the same midpoint propagator as the endpoint work; the
    time integral uses composite Simpson weights (trapezoid for odd ``steps``).
    """
    if protocol.sudden:
        raise DomainError("integrated power is undefined for a sudden quench")
    C = np.atleast_2d(C).astype(complex)
    if protocol.tau == 0:
        return np.zeros(C.shape[0])
    Hp = protocol.hamiltonian
    factors, dt = _midpoint_factors(protocol, steps)
    ts = np.arange(steps + 1) * dt
    lams = protocol.values(ts)

    # effective operator lam_dot . dH/dlam at each grid time
    G = np.einsum("kp,kpij->kij", schedule_rate(protocol, ts), Hp.gradient_stack(lams))
    if steps % 2 == 0:
        weights = np.full(steps + 1, 2.0)
        weights[1::2] = 4.0
        weights[[0, -1]] = 1.0
        weights *= dt / 3
    else:
        weights = np.full(steps + 1, dt)
        weights[[0, -1]] = 0.5 * dt

    M, N = C.shape
    chunk = max(1, int(4_000_000 // ((steps + 1) * N)))
    total = np.empty(M)
    for lo in range(0, M, chunk):
        traj = np.empty((steps + 1, min(chunk, M - lo), N), dtype=complex)
        traj[0] = C[lo : lo + chunk]
        for k in range(steps):
            traj[k + 1] = traj[k] @ factors[k].T
        power = np.einsum("kmi,kmi->km", traj.conj(), traj @ G.transpose(0, 2, 1)).real
        total[lo : lo + chunk] = weights @ power
    return total


def work_power_integral(state: StateVector, protocol: Protocol, steps: int) -> float:
    return float(power_work_batch(state.c[None], protocol, steps)[0])


def converged_steps(protocol: Protocol, C: np.ndarray, tol: float = 1e-8,
                    start: int = 256, max_steps: int = 1 << 20) -> tuple[int, np.ndarray]:
    """Double the step count until endpoint work changes by less than ``tol`` for every state."""
    C = np.atleast_2d(C)
    steps = start
    w = endpoint_work_batch(C, protocol, _propagate_raw(protocol, steps))
    while steps < max_steps:
        w2 = endpoint_work_batch(C, protocol, _propagate_raw(protocol, 2 * steps))
        steps *= 2
        if np.max(np.abs(w2 - w)) < tol:
            return steps, w2
        w = w2
    raise IntegrationError(f"work not converged to {tol} within {max_steps} steps")
