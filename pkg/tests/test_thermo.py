import math

import numpy as np
import pytest

from wfens.lzmodel import energy_analytic, log_z_analytic, lz_two_parameter_hamiltonian
from wfens.statespace import linear_hamiltonian
from wfens.thermo import (
    canonical_analytic,
    canonical_loop_integral,
    canonical_state_functions,
    heat_theorem_canonical_check,
    heat_theorem_microcanonical_check,
    microcanonical_analytic,
    microcanonical_state_functions,
    surface_vs_volume_entropy_mc,
    surface_vs_volume_entropy_report,
)
from wfens.errors import DomainError

LOOP = [(0.5, -1.0), (2.0, -1.0), (2.0, 1.5), (0.5, 1.5)]


def test_canonical_analytic_matches_lz_closed_form(lz):
    for beta, lam in [(0.5, -2.0), (1.0, 0.3), (3.0, 1.0)]:
        log_z, E, F = canonical_analytic(lz, beta, lam)
        assert log_z == pytest.approx(log_z_analytic(beta, lam, 1.0))
        assert E == pytest.approx(energy_analytic(beta, lam, 1.0))
        h = 1e-6
        dlnz = (log_z_analytic(beta, lam + h, 1.0) - log_z_analytic(beta, lam - h, 1.0)) / (2 * h)
        assert F[0] == pytest.approx(dlnz / beta, rel=1e-6)


def test_canonical_monte_carlo_agrees_with_closed_form(lz):
    exact = canonical_state_functions(lz, 1.2, 0.7)
    mc = canonical_state_functions(lz, 1.2, 0.7, M=50000, seed=3)
    assert abs(mc.E_mean - exact.E_mean) < 4 * mc.E_stderr
    assert abs(mc.force[0] - exact.force[0]) < 4 * mc.force_stderr[0]
    assert mc.log_z == pytest.approx(exact.log_z, abs=4 * mc.diagnostics["log_z_stderr"])


def test_canonical_heat_theorem_second_order(lz):
    chk = heat_theorem_canonical_check(lz, [0.5, 1.0, 2.0], [-1.0, 0.0, 1.0])
    assert chk.status == "ok"
    assert 3.5 < chk.order_ratio < 4.5


def test_canonical_heat_theorem_two_parameters():
    H = lz_two_parameter_hamiltonian()
    chk = heat_theorem_canonical_check(H, [0.7, 1.4], [[-0.5, 0.5], [0.5, 1.0]])
    assert chk.status == "ok"


def test_loop_integral_vanishes(lz):
    assert abs(canonical_loop_integral(lz, LOOP)) < 1e-6
    # dQ alone is not exact: the loop integral of beta * dQ vanishes only with the factor beta
    H2 = lz_two_parameter_hamiltonian()
    assert abs(canonical_loop_integral(H2, [(1.0, -1.0, 0.5), (1.0, 1.0, 0.5), (1.0, 1.0, 1.5), (1.0, -1.0, 1.5)])) < 1e-6


def test_microcanonical_analytic_volume_and_density(lz):
    phi, omega, F = microcanonical_analytic(lz, 0.5, 0.0)
    assert phi == pytest.approx(0.75)
    assert omega == pytest.approx(0.5)
    # on the shell the polarization along the field is -E/eps; force is -<sigma_z>
    assert F[0] == pytest.approx(0.0)
    phi, omega, F = microcanonical_analytic(lz, 0.5, 1.0)
    eps = math.sqrt(2)
    assert F[0] == pytest.approx(-0.5 / eps * (1 / eps))


def test_microcanonical_monte_carlo_agrees(lz):
    exact = microcanonical_state_functions(lz, 0.3, 0.8)
    mc = microcanonical_state_functions(lz, 0.3, 0.8, M=100000, seed=4)
    assert abs(mc.force[0] - exact.force[0]) < 4 * mc.force_stderr[0]
    assert mc.log_phi == pytest.approx(exact.log_phi, abs=0.02)
    assert mc.integrating_factor == pytest.approx(exact.integrating_factor, rel=0.05)
    with pytest.raises(DomainError):
        microcanonical_state_functions(lz, 3.0, 0.0)


def test_microcanonical_heat_theorem(lz):
    chk = heat_theorem_microcanonical_check(lz, [-0.3, 0.2], [0.5, 1.0], M=100000, seed=5)
    assert chk.status == "ok"
    assert chk.max_abs_z < 4


def test_microcanonical_heat_theorem_three_level():
    H = linear_hamiltonian(np.diag([-1.0, 0.0, 1.0]), [np.diag([1.0, 0.0, -1.0]) * 0.5])
    chk = heat_theorem_microcanonical_check(H, [0.1], [0.3], M=100000, seed=6, lam_step=0.1, E_step=0.1)
    assert chk.status in ("ok", "inconclusive")
    assert chk.max_abs_z < 4


def test_surface_entropy_is_not_integrable_when_coupling_vanishes():
    H = linear_hamiltonian(np.zeros((2, 2)), [np.diag([1.0, -1.0])])
    rep = surface_vs_volume_entropy_report(H, [0.2, -0.4], [1.0, 2.0])
    assert np.all(rep.volume_defect < 1e-6)
    assert np.all(rep.surface_defect > 0.1)
    flat = surface_vs_volume_entropy_report(H, [0.2], [1.0], vary_lambda=False)
    assert flat.surface_defect[0] == 0.0


def test_surface_entropy_monte_carlo():
    H = linear_hamiltonian(np.zeros((2, 2)), [np.diag([1.0, -1.0])])
    s, s_err, v, v_err = surface_vs_volume_entropy_mc(H, 0.2, 1.0, M=200000, seed=7)
    assert abs(v) < 4 * v_err + 1e-3
    assert abs(s) > 4 * s_err
