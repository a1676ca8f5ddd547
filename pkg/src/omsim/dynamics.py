"""Time integration of the moment equations and periodic steady-state detection."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp, trapezoid

from .cumulant import MODES, CumulantState, MomentOde, unpack
from .errors import ConvergenceError, IntegrationError, OmsimWarning

DEFAULT_TOL = 1e-9
DEFAULT_TOL_SS = 1e-7
CONFIRM_PERIODS = 5
NEGATIVE_OCCUPATION = -1e-6
SAMPLES_PER_CYCLE = 128          # per 2*pi/Omega0 of drive period


@dataclass
class Trajectory:
    times: np.ndarray
    y: np.ndarray                  # packed states, shape (n, 44)
    dense: bool = False
    solution: object = None        # scipy OdeSolution when dense
    truncation_warning: bool = False

    @property
    def states(self) -> list[CumulantState]:
        return [CumulantState.unpack(t, row) for t, row in zip(self.times, self.y)]

    def symbols(self) -> np.ndarray:
        return np.array([unpack(row) for row in self.y])

    def means(self) -> np.ndarray:
        return self.y[:, :4] + 1j * self.y[:, 4:8]

    def sample(self, t) -> np.ndarray:
        if self.solution is None:
            raise ValueError("trajectory was integrated without dense output")
        return self.solution(t)

    def to_csv(self, path) -> Path:
        path = Path(path)
        header = ["t"]
        for m in MODES:
            header += [f"re_{m}", f"im_{m}"]
        header += [f"n_{m}" for m in MODES]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, row in zip(self.times, self.y):
                vals = [t]
                for i in range(4):
                    vals += [row[i], row[4 + i]]
                vals += list(row[8:12])
                w.writerow(["%.17g" % v for v in vals])
        return path


def _tolerances(tol: float):
    # cumulants sit many decades below the optical means
    return dict(rtol=tol, atol=tol * 1e-3)


def _check_occupations(y: np.ndarray) -> bool:
    diag = y[..., 8:12]
    if diag.size and diag.min() < NEGATIVE_OCCUPATION:
        warnings.warn(f"negative occupation cumulant {diag.min():.3g}: doublet truncation "
                      "is outside its range of validity", OmsimWarning, stacklevel=3)
        return True
    return False


def _solve(fun, t0, t1, y0, tol, t_eval=None, dense=False, method="DOP853"):
    sol = solve_ivp(fun, (t0, t1), y0, method=method, t_eval=t_eval,
                    dense_output=dense, **_tolerances(tol))
    if sol.status != 0:
        last = sol.t[-1] if sol.t.size else t0
        raise IntegrationError(
            f"integration stopped at t={last:.6g} of [{t0:.6g}, {t1:.6g}]: {sol.message} "
            "(step size underflow usually signals stiffness or a diverging solution)")
    return sol


def integrate(ode: MomentOde, initial: CumulantState, t_end: float, tol: float = DEFAULT_TOL,
              t_eval=None, dense: bool = False, method: str = "DOP853") -> Trajectory:
    """Adaptive embedded Runge-Kutta integration from ``initial.t`` to ``t_end``.

    Without ``t_eval`` only the solver's own steps are stored.
    """
    if not t_end > initial.t:
        raise ValueError("t_end must exceed the initial time")
    if tol <= 0:
        raise ValueError("tol must be positive")
    sol = _solve(ode.rhs, initial.t, t_end, initial.pack(), tol, t_eval, dense, method)
    y = sol.y.T.copy()
    return Trajectory(sol.t.copy(), y, dense, sol.sol if dense else None,
                      _check_occupations(y))


@dataclass
class SteadyState:
    ode: MomentOde
    cycle_times: np.ndarray         # n + 1 uniform samples covering one period
    cycle: np.ndarray               # packed states at cycle_times, shape (n + 1, 44)
    period_mean: np.ndarray         # period-averaged <a_c>, <a_t>, <b_c>, <b_t>
    converged_at: float
    residual: float
    residual_history: list = field(default_factory=list)
    converged: bool = True
    truncation_warning: bool = False
    fixed_point_residual: float | None = None

    @property
    def period(self) -> float:
        return self.ode.period

    @property
    def start(self) -> CumulantState:
        return CumulantState.unpack(self.cycle_times[0], self.cycle[0])

    def cycle_means(self) -> np.ndarray:
        return self.cycle[:, :4] + 1j * self.cycle[:, 4:8]

    def cycle_symbols(self) -> np.ndarray:
        return np.array([unpack(row) for row in self.cycle])

    def summary(self) -> dict:
        return {
            "converged_at": self.converged_at, "residual": self.residual,
            "period": self.period, "periods_integrated": len(self.residual_history),
            "period_mean": {m: [v.real, v.imag] for m, v in zip(MODES, self.period_mean)},
            "fixed_point_residual": self.fixed_point_residual,
            "truncation_warning": self.truncation_warning,
        }


def cycle_grid(period: float, Omega0: float = 1.0, samples_per_cycle: int = SAMPLES_PER_CYCLE) -> int:
    """Number of uniform intervals per drive period."""
    return max(8, int(round(samples_per_cycle * period * Omega0 / (2 * math.pi))))


def _relative_step(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def period_map(ode: MomentOde, t: float, y: np.ndarray, tol: float) -> np.ndarray:
    sol = _solve(ode.rhs, t, t + ode.period, y, tol, t_eval=[t + ode.period])
    return sol.y[:, -1]


def polish_cycle(ode: MomentOde, t: float, y: np.ndarray, tol: float = 1e-12,
                 max_iter: int = 8, step: float = 1e-5) -> tuple[np.ndarray, float]:
    """Newton iteration for the fixed point of the period map.

    Oscillations at harmonics of the drive period are invisible to stroboscopic
    snapshots and decay only at the slowest mechanical rate, so the detected
    cycle is refined here.  The Jacobian is built from central differences.
    """
    y = np.array(y, dtype=float)
    scale = max(1.0, np.abs(y).max())
    h = step * scale
    F = period_map(ode, t, y, tol)
    res = np.linalg.norm(F - y) / max(np.linalg.norm(y), 1e-300)
    if res == 0.0:
        return y, 0.0
    J = np.empty((y.size, y.size))
    for i in range(y.size):
        e = np.zeros(y.size)
        e[i] = h
        J[:, i] = (period_map(ode, t, y + e, tol) - period_map(ode, t, y - e, tol)) / (2 * h)
    A = J - np.eye(y.size)
    for _ in range(max_iter):
        y_new = y - np.linalg.solve(A, F - y)
        F_new = period_map(ode, t, y_new, tol)
        res_new = np.linalg.norm(F_new - y_new) / max(np.linalg.norm(y_new), 1e-300)
        if not res_new < res:
            break
        y, F, res = y_new, F_new, res_new
        if res < 1e-14:
            break
    return y, float(res)


def detect_steady(ode: MomentOde, initial: CumulantState, tol_ss: float = DEFAULT_TOL_SS,
                  max_periods: int = 100_000, tol: float = DEFAULT_TOL,
                  chunk: int = 256, n_cycle: int | None = None,
                  polish: bool = True) -> SteadyState:
    """Integrate period by period until stroboscopic snapshots stop changing.

    Convergence is declared once the relative L2 change between consecutive
    snapshots stays below ``tol_ss`` for five consecutive periods.  With
    ``polish`` the converged snapshot is then refined to the exact periodic
    orbit by :func:`polish_cycle`.
    """
    if tol_ss <= 0:
        raise ValueError("tol_ss must be positive")
    P = ode.period
    t, y = initial.t, initial.pack()
    history: list[float] = []
    streak = 0
    truncation = False
    while len(history) < max_periods:
        k = min(chunk, max_periods - len(history))
        t_eval = t + P * np.arange(1, k + 1)
        sol = _solve(ode.rhs, t, t_eval[-1], y, tol, t_eval=t_eval)
        snaps = sol.y.T
        truncation |= _check_occupations(snaps)
        prev = y
        done = False
        for i, snap in enumerate(snaps):
            r = _relative_step(snap, prev)
            history.append(r)
            prev = snap
            streak = streak + 1 if r < tol_ss else 0
            if streak >= CONFIRM_PERIODS:
                t, y = t_eval[i], snap
                done = True
                break
        if done:
            break
        t, y = t_eval[-1], snaps[-1]
    else:
        raise ConvergenceError(
            f"no periodic steady state within {max_periods} periods "
            f"(last residual {history[-1]:.3g}, tol_ss {tol_ss:g})", history)

    fixed_point_residual = None
    if polish:
        y, fixed_point_residual = polish_cycle(ode, t, y, tol=min(tol, 1e-12))

    n = n_cycle or cycle_grid(P, ode.params.Omega0)
    times = t + P * np.arange(n + 1) / n
    sol = _solve(ode.rhs, t, times[-1], y, tol, t_eval=times)
    cycle = sol.y.T.copy()
    cycle[0] = y
    means = cycle[:, :4] + 1j * cycle[:, 4:8]
    period_mean = means[:-1].mean(axis=0)     # trapezoid on a periodic grid
    return SteadyState(ode, times, cycle, period_mean, float(t), history[-1], history,
                       True, truncation, fixed_point_residual)


def stroboscopic_component(steady: SteadyState, operator, harmonic: int) -> complex:
    """Fourier coefficient ``(1/P) int_0^P <x(t)> exp(-i n 2 pi t / P) dt`` over the cycle."""
    if not steady.converged:
        raise ValueError("steady state has not converged")
    idx = MODES.index(operator) if isinstance(operator, str) else int(operator)
    x = steady.cycle_means()[:, idx]
    s = steady.cycle_times - steady.cycle_times[0]
    P = steady.period
    f = x * np.exp(-1j * harmonic * 2 * np.pi * s / P)
    return complex(trapezoid(f, s) / P)
