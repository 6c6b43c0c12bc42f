"""Concrete reference values, each checked against an independent oracle."""
import math

import numpy as np
import pytest
from scipy import integrate, stats

from wfens.dynamics import (
    Protocol,
    constant_protocol,
    linear_protocol,
    propagate,
    sudden_protocol,
    work_endpoint,
    work_power_integral,
)
from wfens.ensembles import (
    EnsembleSpec,
    density_matrix_from_samples,
    draw_states,
    estimate_dos_and_volume,
    estimate_partition,
)
from wfens.lzmodel import (
    LZParams,
    f_analytic,
    f_standard,
    lz_hamiltonian,
    lz_protocol,
    rho_canonical_analytic_delta0,
    z_analytic,
    z_standard,
)
from wfens.rng import substream
from wfens.statespace import SIGMA_Z, StateVector, bloch_vectors, expectation, expectations, linear_hamiltonian
from wfens.stats import jackknife
from wfens.thermo import canonical_analytic, heat_theorem_microcanonical_check, microcanonical_analytic
from wfens.workstats import jarzynski_estimate, sample_work_distribution, tms_work_distribution_exact

M = 100_000
# endpoint work from the ground state of H(lam_0) along the reference half sweep,
# Richardson extrapolation of step-doubled runs up to 65536 steps
HALF_SWEEP_GROUND_WORK = 1.7334577435


def z_field(eps):
    return linear_hamiltonian(np.zeros((2, 2)), [eps * SIGMA_Z])


def bloch_quadrature(beta, eps, power=0):
    """``int (h^power) exp(-beta h) dOmega`` over the Bloch sphere with ``h = eps cos(gamma)``, over 4 pi."""
    f = lambda d, g: (eps * math.cos(g)) ** power * math.exp(-beta * eps * math.cos(g)) * math.sin(g)
    val, _ = integrate.dblquad(f, 0, math.pi, 0, 2 * math.pi, epsabs=1e-12)
    return val / (4 * math.pi)


# ---------------------------------------------------------------- statespace

def test_quadratic_form_example():
    s = StateVector(np.array([0.6, 0.0]), np.array([0.0, 0.8]))
    c = s.x + 1j * s.p
    oracle = sum(np.conj(c[i]) * SIGMA_Z[i, j] * c[j] for i in range(2) for j in range(2)).real
    assert expectation(s, SIGMA_Z) == pytest.approx(-0.28, abs=1e-15)
    assert oracle == pytest.approx(-0.28, abs=1e-15)


def test_lz_expectation_examples():
    H = lz_hamiltonian(1.0)
    assert expectation(StateVector.from_complex([1, 0]), H.matrix(0.7)) == pytest.approx(0.7)
    assert expectation(StateVector.from_complex([1, 1]), H.matrix(0.7)) == pytest.approx(1.0)


# ----------------------------------------------------------------- ensembles

def test_uniform_qubit_bloch_isotropy():
    S = draw_states(EnsembleSpec.uniform(2), M, seed=21)
    r = bloch_vectors(S.states)
    assert np.all(np.abs(r.mean(axis=0)) < 4 / math.sqrt(M))
    assert stats.kstest(r[:, 2], stats.uniform(-1, 2).cdf).pvalue > 1e-3


def test_uniform_three_level_populations():
    S = draw_states(EnsembleSpec.uniform(3), M, seed=22)
    q = np.abs(S.states) ** 2
    assert np.all(np.abs(q.mean(axis=0) - 1 / 3) < 4 * q.std(axis=0) / math.sqrt(M))


def test_canonical_infinite_temperature_is_uniform():
    H = lz_hamiltonian(1.0)
    a = expectations(draw_states(EnsembleSpec.canonical(H, 1e-8, 0.4), 20000, seed=23).states, H.matrix(0.4))
    b = expectations(draw_states(EnsembleSpec.uniform(2), 20000, seed=24).states, H.matrix(0.4))
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_canonical_qubit_mean_energy():
    h = expectations(draw_states(EnsembleSpec.canonical(z_field(1.0), 1.0, 1.0), M, seed=25).states, SIGMA_Z)
    ref = 1 - 1 / math.tanh(1)
    assert ref == pytest.approx(-0.3130, abs=1e-4)
    assert ref == pytest.approx(bloch_quadrature(1, 1, 1) / bloch_quadrature(1, 1, 0), abs=1e-10)
    assert abs(h.mean() - ref) < 4 * h.std() / math.sqrt(M)


def test_canonical_low_temperature_limit():
    # the mean approaches the ground energy as -eps + 1/beta, so beta * eps = 50 sits 2% above it
    h = expectations(draw_states(EnsembleSpec.canonical(z_field(1.0), 50.0, 1.0), M, seed=26).states, SIGMA_Z)
    ref = 1 / 50 - 1 / math.tanh(50)
    assert abs(h.mean() - ref) < 4 * h.std() / math.sqrt(M)
    assert h.mean() == pytest.approx(-1.0, rel=0.03)


def test_microcanonical_qubit_shells():
    H = z_field(1.0)
    C = draw_states(EnsembleSpec.microcanonical(H, 0.0, 1.0), 20000, seed=27).states
    assert np.max(np.abs(expectations(C, SIGMA_Z))) < 1e-10
    azimuth = np.mod(np.angle(C[:, 1]) - np.angle(C[:, 0]), 2 * np.pi)
    assert stats.kstest(azimuth, stats.uniform(0, 2 * np.pi).cdf).pvalue > 1e-3
    C = draw_states(EnsembleSpec.microcanonical(H, 0.5, 1.0), 2000, seed=28).states
    assert np.allclose(expectations(C, SIGMA_Z), 0.5, atol=1e-12)


def test_microcanonical_three_level_populations_against_grid():
    H = linear_hamiltonian(np.diag([-1.0, 0.0, 1.0]), [np.zeros((3, 3))])
    q = np.abs(draw_states(EnsembleSpec.microcanonical(H, 0.0, 0.0), M, seed=29).states) ** 2
    # the slice is q = (t, 1 - 2t, t), t in [0, 1/2], uniform in arc length
    t = np.linspace(0, 0.5, 100001)
    grid = np.column_stack([t, 1 - 2 * t, t])
    oracle = integrate.trapezoid(grid, t, axis=0) / 0.5
    for k in range(3):
        est, err = jackknife(q[:, k], n_blocks=50)  # blocks absorb chain correlation
        assert abs(est - oracle[k]) < 4 * err


@pytest.mark.parametrize("lam,delta,ref", [(0.0, 1.0, 11.5988), (3.0, 4.0, 146.47)])
def test_partition_function_values(lam, delta, ref):
    H = lz_hamiltonian(delta)
    Z = estimate_partition(H, 1.0, lam, M, substream(30, 0))
    eps = math.hypot(lam, delta)
    exact = z_analytic(1.0, lam, delta)
    assert exact == pytest.approx(ref, rel=1e-4)
    assert exact == pytest.approx(math.pi**2 * bloch_quadrature(1, eps, 0), rel=1e-9)
    assert abs(Z.absolute - exact) < 4 * Z.absolute_stderr


def test_volume_and_density_of_states_values():
    dos = estimate_dos_and_volume(z_field(1.0), np.array([-0.5, 0.0, 0.5]), 1.0, M, substream(31, 0))
    assert abs(dos.phi[1] - 0.5) < 4 * dos.phi_stderr[1]
    assert np.all(np.abs(dos.omega - 0.5) < 4 * dos.omega_stderr)
    assert estimate_dos_and_volume(z_field(1.0), [1.0], 1.0, 1000, substream(31, 1)).phi[0] == 1.0


def test_density_matrix_values():
    rho, err = density_matrix_from_samples(draw_states(EnsembleSpec.uniform(2), M, seed=32).states, True)
    assert np.all(np.abs(rho - np.eye(2) / 2) < 4 * np.abs(err) + 1e-12)
    ref = rho_canonical_analytic_delta0(1.0, 1.0)
    assert np.allclose(np.diag(ref).real, [0.3435, 0.6565], atol=1e-4)
    # one-dimensional quadrature oracle: upper population = (1 + <cos gamma>)/2
    mean_cos = bloch_quadrature(1, 1, 1) / bloch_quadrature(1, 1, 0)
    assert ref[0, 0].real == pytest.approx((1 + mean_cos) / 2, abs=1e-10)
    rho, err = density_matrix_from_samples(draw_states(EnsembleSpec.canonical(z_field(1.0), 1.0, 1.0), M, seed=33).states, True)
    assert np.all(np.abs(rho - ref) < 4 * np.abs(err) + 1e-12)
    assert np.allclose(rho_canonical_analytic_delta0(200.0, 1.0), np.diag([0.0, 1.0]), atol=1e-2)


# ------------------------------------------------------------------ dynamics

def test_commuting_family_keeps_populations():
    H = linear_hamiltonian(np.zeros((2, 2)), [SIGMA_Z])
    U = propagate(linear_protocol(H, -2.0, 1.0, 3.0), 256).U
    assert abs(U[0, 1]) < 1e-14 and abs(U[1, 0]) < 1e-14


def test_energy_conserved_at_constant_lambda():
    H = lz_hamiltonian(1.0)
    s = StateVector.from_complex([0.3, 0.4 + 0.5j])
    p = constant_protocol(H, 0.8, 2.7)
    assert abs(work_endpoint(s, p, 64)) < 1e-10
    assert work_power_integral(s, p, 64) == 0.0
    assert np.array_equal(propagate(constant_protocol(H, 0.8, 0.0), 4).U, np.eye(2))


def test_linear_ramp_of_commuting_family():
    H = linear_hamiltonian(np.zeros((2, 2)), [SIGMA_Z])
    p = linear_protocol(H, -1.0, 2.0, 1.5)
    for c, sign in (([1, 0], 1), ([0, 1], -1)):
        s = StateVector.from_complex(c)
        assert work_power_integral(s, p, 128) == pytest.approx(3.0 * sign, abs=1e-12)
        assert work_endpoint(s, p, 128) == pytest.approx(3.0 * sign, abs=1e-12)


def test_half_sweep_ground_state_work():
    H, p = lz_protocol(LZParams())
    ev, V = H.eigh(p.start)
    s = StateVector.from_complex(V[:, 0])
    assert work_endpoint(s, p, 16384) == pytest.approx(HALF_SWEEP_GROUND_WORK, abs=1e-8)
    assert work_power_integral(s, p, 16384) == pytest.approx(HALF_SWEEP_GROUND_WORK, abs=1e-8)


def test_half_sweep_reversal_endpoints():
    H, p = lz_protocol(LZParams())
    assert p.start[0] == -2.5 and p.end[0] == 0.0
    from wfens.dynamics import reverse_protocol

    r = reverse_protocol(p)
    ts = np.linspace(0, p.tau, 11)
    assert np.allclose(r.values(ts), p.values(p.tau - ts), atol=1e-14)
    c = constant_protocol(H, 0.3, 1.0)
    assert reverse_protocol(c).schedule is c.schedule


# ----------------------------------------------------------------- workstats

def test_constant_and_trivial_protocols():
    H = lz_hamiltonian(1.0)
    spec = EnsembleSpec.canonical(H, 1.0, 0.5)
    ws = sample_work_distribution(spec, constant_protocol(H, 0.5, 2.0), 5000, 64, seed=34)
    assert np.max(np.abs(ws.values)) < 1e-10
    assert jarzynski_estimate(ws, 1.0).estimate == pytest.approx(1.0, abs=1e-10)
    ws = sample_work_distribution(spec, sudden_protocol(H, 0.5, 0.5), 5000, 1, seed=35)
    assert jarzynski_estimate(ws, 1.0).estimate == 1.0
    atoms = tms_work_distribution_exact(1.0, constant_protocol(H, 0.5, 0.0), 1).merged()
    assert np.allclose(atoms.atoms, [[0.0, 1.0]])


def test_work_bound_on_reference_sweep():
    H, p = lz_protocol(LZParams())
    ws = sample_work_distribution(EnsembleSpec.canonical(H, 1.0, p.start), p, M, 1024, seed=36)
    assert np.max(np.abs(ws.values)) <= math.sqrt(7.25) + 1 + 1e-9


def test_crooks_symmetric_protocol_has_zero_intercept():
    from wfens.workstats import REVERSE_STREAM_BASE, crooks_canonical_check

    H = lz_hamiltonian(1.0)
    p = Protocol(H, lambda t: (1.5 * np.sin(np.pi * np.asarray(t) / 2.0))[..., None], 2.0)
    fwd = sample_work_distribution(EnsembleSpec.canonical(H, 1.0, 0.0), p, M, 512, seed=37)
    from wfens.dynamics import reverse_protocol

    rev = sample_work_distribution(EnsembleSpec.canonical(H, 1.0, 0.0), reverse_protocol(p), M, 512, seed=37,
                                   stream_offset=REVERSE_STREAM_BASE)
    rep = crooks_canonical_check(fwd, rev, 1.0)
    assert abs(rep.intercept) < 4 * rep.intercept_stderr
    assert abs(rep.slope - 1.0) < 4 * rep.slope_stderr


# -------------------------------------------------------------------- thermo

def test_canonical_energy_values():
    H = z_field(1.0)
    assert canonical_analytic(H, 1.0, 1.0)[1] == pytest.approx(-0.3130, abs=1e-4)
    assert canonical_analytic(H, 1e-9, 1.0)[1] == pytest.approx(0.0, abs=1e-8)
    assert canonical_analytic(H, 50.0, 1.0)[1] == pytest.approx(-0.98, abs=1e-12)
    assert canonical_analytic(H, 1e4, 1.0)[1] == pytest.approx(-1.0, rel=1e-3)


def test_microcanonical_values():
    H = z_field(1.0)
    phi, omega, _ = microcanonical_analytic(H, 0.0, 1.0)
    assert omega / phi == pytest.approx(1.0)
    assert microcanonical_analytic(H, 1.0, 1.0)[0] == 1.0
    assert microcanonical_analytic(H, 0.0, 1.0)[2][0] == 0.0


def test_parameter_free_direction_has_no_residual():
    # H does not depend on lam: the lam residual vanishes identically
    H = linear_hamiltonian(np.diag([-1.0, 1.0]), [np.zeros((2, 2))])
    chk = heat_theorem_microcanonical_check(H, [0.2], [0.0], M=20000, seed=38)
    assert np.all(chk.residuals == 0.0)


# ------------------------------------------------------------------- lzmodel

def test_lz_thermodynamic_values():
    assert z_analytic(1.0, 0.0, 1.0) == pytest.approx(11.5988, abs=1e-4)
    assert f_analytic(1.0, 0.0, 1.0) == pytest.approx(-2.4509, abs=1e-4)
    assert z_standard(1.0, 0.0, 1.0) == pytest.approx(3.0862, abs=1e-4)
    assert f_standard(1.0, 0.0, 1.0) == pytest.approx(-1.1269, abs=1e-4)
    assert z_analytic(1e-12, 0.5, 1.0) == pytest.approx(math.pi**2)
    assert z_standard(1e-12, 0.5, 1.0) == pytest.approx(2.0)
