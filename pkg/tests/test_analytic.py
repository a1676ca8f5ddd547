import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from omsim.analytic import (bare_amplitudes, optimal_K, sideband_matrix, stokes_closed_form,
                            stokes_linear_solve, stokes_magnitude, sweep_gamma_K)
from omsim.errors import SingularityError
from omsim.model import DriveConfig, DriveTone, SystemParams, ansatz_drive, cooperativity, preset

BASE = SystemParams()
DRIVE = ansatz_drive()

# frozen oracle values at the default parameters, unit drive amplitudes
A_T0 = complex(-8.381511840314965e-05, -0.009164320683029352)
A_C0_BAR = 8.695652173913043
A_CP_BAR_ABS = 0.993452373169035
C_M = 0.16116142548120221


def test_bare_amplitudes():
    sol = bare_amplitudes(BASE, DRIVE)
    assert sol.a_c0_bar == pytest.approx(1 / 0.115, rel=1e-14)
    assert abs(sol.a_cp_bar) == pytest.approx(A_CP_BAR_ABS, rel=1e-12)
    assert sol.a_tp_bar == pytest.approx(1 / (0.115 - 1j), rel=1e-14)
    assert sol.g_cc_bar == pytest.approx(BASE.g0 * np.conj(sol.a_c0_bar) * sol.a_cp_bar)


def test_stokes_value_frozen():
    sol = stokes_closed_form(BASE, DRIVE)
    assert sol.a_t0 == pytest.approx(A_T0, rel=1e-10)
    assert abs(sol.a_t0) == pytest.approx(9.1647e-3, rel=1e-4)


def test_multiphoton_cooperativity_is_small():
    sol = bare_amplitudes(BASE, DRIVE)
    C, Cm = cooperativity(BASE, abs(sol.a_c0_bar) ** 2)
    assert sol.a_c0_bar.real == pytest.approx(A_C0_BAR)
    assert Cm == pytest.approx(C_M, rel=1e-12)
    assert Cm < 1


def test_zero_coupling_gives_zero():
    assert stokes_closed_form(BASE.with_updates(K=0.0), DRIVE).a_t0 == 0


def test_back_substitution_satisfies_linear_system():
    sol = stokes_closed_form(BASE, DRIVE)
    M, rhs = sideband_matrix(BASE, sol)
    x = np.array([sol.a_cm, sol.a_t0, np.conj(sol.b_c), np.conj(sol.b_t)])
    assert np.abs(M @ x - rhs).max() < 1e-12 * np.abs(rhs).max()


def test_ansatz_tone_check():
    with pytest.raises(ValueError, match="ansatz"):
        stokes_closed_form(BASE, preset("fig3_red").drive)
    # a missing tone is a zero amplitude, not an error
    sol = stokes_closed_form(BASE, preset("fig2_green").drive)
    assert sol.a_t0 == 0


def test_singular_denominator():
    with pytest.raises(SingularityError):
        stokes_closed_form(BASE.with_updates(g0=0.0, gamma=0.0, K=0.0), DRIVE)


regime = dict(
    kappa=st.floats(0.1, 0.5),
    g0=st.floats(1e-5, 1e-3),
    gamma=st.floats(1e-5, 1e-3),
    K=st.floats(1e-5, 1e-3),
    E=st.tuples(st.floats(0.5, 4), st.floats(0.5, 4), st.floats(0.5, 4)),
)


@settings(max_examples=300, deadline=None)
@given(**regime)
def test_closed_form_matches_linear_solve(kappa, g0, gamma, K, E):
    params = SystemParams(g0=g0, kappa=kappa, gamma=gamma, K=K)
    drive = ansatz_drive(*E)
    a = stokes_closed_form(params, drive).a_t0
    b = stokes_linear_solve(params, drive).a_t0
    assert abs(a - b) <= 1e-10 * abs(b)


@settings(max_examples=100, deadline=None)
@given(phi=st.floats(-np.pi, np.pi), chi=st.floats(-np.pi, np.pi), **regime)
def test_stokes_phase_covariance(phi, chi, kappa, g0, gamma, K, E):
    params = SystemParams(g0=g0, kappa=kappa, gamma=gamma, K=K)
    a = stokes_closed_form(params, ansatz_drive(*E)).a_t0
    b = stokes_closed_form(params, ansatz_drive(E[0], E[1] * np.exp(1j * chi),
                                                E[2] * np.exp(1j * phi))).a_t0
    assert abs(b - a * np.exp(1j * (phi - chi))) <= 1e-12 * abs(a)


@pytest.mark.parametrize("ratio", [1.0, 1.5, 2.0])
def test_optimal_K_near_half_gamma(ratio):
    gamma = ratio * BASE.g0
    k = optimal_K(BASE, DRIVE, gamma)
    assert abs(k / (gamma / 2) - 1) < 0.2
    # it is a maximum
    m = stokes_magnitude(BASE.with_updates(gamma=gamma, K=k), DRIVE)
    for f in (0.9, 1.1):
        assert stokes_magnitude(BASE.with_updates(gamma=gamma, K=k * f), DRIVE) <= m


def test_sweep_grid_and_ridge(tmp_path):
    gammas = np.linspace(1e-4, 1e-3, 5)
    Ks = np.linspace(0, 1e-3, 7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        grid = sweep_gamma_K(BASE, DRIVE, gammas, Ks)
    assert grid.magnitude.shape == (5, 7)
    assert np.all(grid.magnitude[:, 0] == 0)
    for g, k, m in grid.ridge:
        assert 0.4 < k / g < 0.6
        assert m >= np.nanmax(grid.magnitude[list(gammas).index(g)]) * (1 - 1e-12)
    path = grid.to_csv(tmp_path / "g.csv")
    rows = path.read_text().splitlines()
    assert rows[0] == "gamma,K,magnitude" and len(rows) == 36
    assert grid.ridge_to_csv(tmp_path / "r.csv").read_text().startswith("gamma,K_star,magnitude_at_star")


def test_sweep_masks_singular_cells():
    grid = sweep_gamma_K(BASE.with_updates(g0=0.0), DriveConfig((DriveTone("target", 1.0, 1),)),
                         [1e-20], [0.0, 1e-4], refine_ridge=False)
    assert grid.mask[0, 0] and np.isnan(grid.magnitude[0, 0])


def test_sweep_rejects_bad_ranges():
    with pytest.raises(ValueError):
        sweep_gamma_K(BASE, DRIVE, [0.0, 1e-4], [0.0])
