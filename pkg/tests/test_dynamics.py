import csv
import math
from types import SimpleNamespace

import numpy as np
import pytest

from omsim.cumulant import N_PACKED, CumulantState, build_moment_ode, vacuum_state
from omsim.dynamics import (CONFIRM_PERIODS, cycle_grid, detect_steady, integrate, polish_cycle,
                            stroboscopic_component)
from omsim.errors import ConvergenceError, IntegrationError
from omsim.model import DriveConfig, DriveTone, SystemParams, preset

BASE = SystemParams()


def linear_oracle(params, drive, cavity, t):
    """Driven damped oscillator from vacuum, frame frequency xi_ref * Omega0."""
    xi = float(drive.frame_detuning) * params.Omega0
    lam = 1j * xi - params.kappa / 2
    out = np.zeros_like(t, dtype=complex)
    for tone in drive.tones:
        if tone.cavity != cavity:
            continue
        w = (float(drive.frame_detuning) - float(tone.detuning)) * params.Omega0
        out += tone.amplitude * (np.exp(1j * w * t) - np.exp(lam * t)) / (1j * w - lam)
    return out


@pytest.mark.parametrize("name", ["fig2_blue", "fig3_yellow"])
def test_uncoupled_means_match_closed_form(name):
    p = preset(name)
    params = p.params.with_updates(g0=0.0)
    ts = np.linspace(0, 60, 241)
    traj = integrate(build_moment_ode(params, p.drive), vacuum_state(), 60.0, tol=1e-11,
                     t_eval=ts)
    m = traj.means()
    for col, cavity in ((0, "controller"), (1, "target")):
        ref = linear_oracle(params, p.drive, cavity, ts)
        err = np.abs(m[:, col] - ref).max()
        assert err <= 1e-6 * np.abs(ref).max()
    assert np.abs(traj.y[:, 8:]).max() == 0.0        # no cumulants without coupling


def test_undriven_vacuum_converges_immediately():
    ss = detect_steady(build_moment_ode(BASE, DriveConfig(())), vacuum_state())
    assert ss.converged_at == pytest.approx(CONFIRM_PERIODS * 2 * math.pi)
    assert ss.residual == 0.0
    assert np.abs(ss.cycle).max() == 0.0


def test_stroboscopic_components_uncoupled():
    p = preset("fig2_red")
    params = p.params.with_updates(g0=0.0)
    ss = detect_steady(build_moment_ode(params, p.drive), vacuum_state())
    expected = 1.0 / (params.kappa / 2 - 1j)
    assert stroboscopic_component(ss, "a_t", 0) == pytest.approx(expected, rel=1e-7)
    assert abs(stroboscopic_component(ss, "a_t", 1)) < 1e-9
    assert abs(stroboscopic_component(ss, "a_c", 0)) == 0.0
    assert ss.fixed_point_residual < 1e-12


def test_cycle_is_periodic():
    p = preset("fig2_red")
    ss = detect_steady(build_moment_ode(p.params.with_updates(g0=0.0), p.drive), vacuum_state())
    assert ss.cycle_times.size == cycle_grid(ss.period) + 1
    assert np.abs(ss.cycle[-1] - ss.cycle[0]).max() < 1e-8 * np.abs(ss.cycle[0]).max()
    assert ss.summary()["period"] == pytest.approx(2 * math.pi)


def test_polish_is_a_no_op_at_a_fixed_point():
    ode = build_moment_ode(BASE, DriveConfig(()))
    y, res = polish_cycle(ode, 0.0, np.zeros(N_PACKED))
    assert res == 0.0 and not y.any()


def test_convergence_error_reports_history():
    p = preset("fig2_blue")
    with pytest.raises(ConvergenceError) as exc:
        detect_steady(build_moment_ode(p.params, p.drive), vacuum_state(), max_periods=3)
    assert len(exc.value.residuals) == 3
    assert exc.value.exit_code == 2


def test_integration_error_on_blow_up():
    ode = SimpleNamespace(rhs=lambda t, y: y * y)
    start = CumulantState(0.0, np.ones(4, dtype=complex), np.zeros((4, 4)), np.zeros((4, 4)))
    with pytest.raises(IntegrationError, match="integration stopped"):
        integrate(ode, start, 10.0)


def test_argument_checks():
    ode = build_moment_ode(BASE, preset("fig2_red").drive)
    with pytest.raises(ValueError):
        integrate(ode, vacuum_state(), 0.0)
    with pytest.raises(ValueError):
        integrate(ode, vacuum_state(), 1.0, tol=0.0)
    with pytest.raises(ValueError):
        detect_steady(ode, vacuum_state(), tol_ss=-1.0)
    with pytest.raises(ValueError, match="dense"):
        integrate(ode, vacuum_state(), 1.0).sample(0.5)


def test_dense_output_matches_grid():
    ode = build_moment_ode(BASE, preset("fig2_blue").drive)
    traj = integrate(ode, vacuum_state(), 20.0, t_eval=[20.0], dense=True)
    assert np.allclose(traj.sample(20.0), traj.y[-1], rtol=1e-12, atol=1e-15)


def test_tolerance_halving_is_stable():
    ode = build_moment_ode(BASE, preset("fig2_blue").drive)
    a = integrate(ode, vacuum_state(), 500.0, tol=1e-9, t_eval=[500.0]).y[-1]
    b = integrate(ode, vacuum_state(), 500.0, tol=5e-10, t_eval=[500.0]).y[-1]
    assert np.linalg.norm(a - b) < 1e-6 * np.linalg.norm(b)


def test_trajectory_csv(tmp_path):
    ode = build_moment_ode(BASE, preset("fig2_blue").drive)
    ts = np.linspace(0, 10, 11)
    traj = integrate(ode, vacuum_state(), 10.0, t_eval=ts)
    path = traj.to_csv(tmp_path / "traj.csv")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "re_a_c", "im_a_c", "re_a_t", "im_a_t", "re_b_c", "im_b_c",
                       "re_b_t", "im_b_t", "n_a_c", "n_a_t", "n_b_c", "n_b_t"]
    assert len(rows) == 12
    last = np.array(rows[-1], dtype=float)
    m = traj.means()[-1]
    assert last[1] == m[0].real and last[4] == m[1].imag        # %.17g round-trips
    assert last[9] == traj.y[-1, 8]
