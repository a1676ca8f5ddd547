"""Linearised sideband solution for the nonlocal Stokes amplitude.

The controller carries tones at ``xi = 0`` and ``xi = +1``, the target a tone
at ``xi = +1``.  Treating the three driven photon components as fixed
coherent amplitudes leaves a linear system for the red sideband of the
controller, the resonant (Stokes) component of the target and the two phonon
modes.  Its steady state has a closed form, which is cross-checked against a
direct 4x4 linear solve.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import OmsimWarning, SingularityError
from .model import DriveConfig, SystemParams

SINGULAR_EPS = 1e-14
_ANSATZ_TONES = {("controller", Fraction(0)), ("controller", Fraction(1)),
                 ("target", Fraction(1))}


@dataclass(frozen=True)
class SidebandSolution:
    a_c0_bar: complex
    a_cp_bar: complex
    a_tp_bar: complex
    g_cc_bar: complex
    g_c_bar: complex
    g_t_bar: complex
    zeta: complex | None = None
    a_t0: complex | None = None
    a_cm: complex | None = None
    b_c: complex | None = None
    b_t: complex | None = None

    def to_dict(self) -> dict:
        out = {}
        for name, value in self.__dict__.items():
            out[name] = None if value is None else [value.real, value.imag]
        return out


def _check_ansatz(drive: DriveConfig):
    keys = {(t.cavity, t.detuning) for t in drive.tones}
    if not keys <= _ANSATZ_TONES:
        raise ValueError("ansatz requires (c:0, c:+1, t:+1) tones; got "
                         + ", ".join(f"{c[0]}:{x}" for c, x in sorted(keys)))


def bare_amplitudes(params: SystemParams, drive: DriveConfig) -> SidebandSolution:
    _check_ansatz(drive)
    half_kappa = params.kappa / 2.0
    E_c0 = drive.amplitude("controller", 0)
    E_cp = drive.amplitude("controller", 1)
    E_tp = drive.amplitude("target", 1)
    if half_kappa == 0:
        raise SingularityError("resonant bare amplitude diverges for kappa = 0",
                               kappa=params.kappa)
    a_c0 = E_c0 / half_kappa
    a_cp = E_cp / (half_kappa - 1j * params.Omega0)
    a_tp = E_tp / (half_kappa - 1j * params.Omega0)
    g0 = params.g0
    return SidebandSolution(
        a_c0_bar=a_c0, a_cp_bar=a_cp, a_tp_bar=a_tp,
        g_cc_bar=g0 * a_c0.conjugate() * a_cp,
        g_c_bar=g0 * a_c0,
        g_t_bar=g0 * a_tp,
    )


def _zeta(params: SystemParams, g_c: complex) -> complex:
    return params.gamma / 2.0 - abs(g_c) ** 2 / (params.kappa / 2.0 + 1j * params.Omega0)


def stokes_closed_form(params: SystemParams, drive: DriveConfig) -> SidebandSolution:
    """Closed-form steady state of the target's resonant (Stokes) component."""
    sol = bare_amplitudes(params, drive)
    half_kappa, K, gamma = params.kappa / 2.0, params.K, params.gamma
    g_t, g_cc = sol.g_t_bar, sol.g_cc_bar
    zeta = _zeta(params, sol.g_c_bar)

    den = zeta * abs(g_t) ** 2 - half_kappa * (K**2 + zeta * gamma / 2.0)
    if abs(den) < SINGULAR_EPS:
        raise SingularityError("vanishing denominator in closed-form Stokes amplitude",
                               denominator=den, **params.to_dict())
    if abs(zeta) < SINGULAR_EPS:
        raise SingularityError("vanishing zeta in phonon back-substitution",
                               zeta=zeta, **params.to_dict())
    a_t0 = 1j * g_t * g_cc.conjugate() * K / den

    # daggered phonon amplitudes first, then the photon sidebands
    bt_dag = g_cc.conjugate() * K * half_kappa / den
    bc_dag = -(1j * K * bt_dag + 1j * g_cc.conjugate()) / zeta
    a_cm = 1j * sol.g_c_bar * bc_dag / (1j * params.Omega0 + half_kappa)
    return replace(sol, zeta=zeta, a_t0=a_t0, a_cm=a_cm,
                   b_c=bc_dag.conjugate(), b_t=bt_dag.conjugate())


def sideband_matrix(params: SystemParams, sol: SidebandSolution) -> tuple[np.ndarray, np.ndarray]:
    """Steady-state system for (<a_c,->, <a_t,0>, <b_c^+>, <b_t^+>)."""
    hk, K, hg, W = params.kappa / 2.0, params.K, params.gamma / 2.0, params.Omega0
    g_c, g_t, g_cc = sol.g_c_bar, sol.g_t_bar, sol.g_cc_bar
    M = np.array([
        [-1j * W - hk, 0, 1j * g_c, 0],
        [0, -hk, 0, 1j * g_t],
        [-1j * g_c.conjugate(), 0, -hg, -1j * K],
        [0, -1j * g_t.conjugate(), -1j * K, -hg],
    ], dtype=complex)
    rhs = np.array([0, 0, 1j * g_cc.conjugate(), 0], dtype=complex)
    return M, rhs


def stokes_linear_solve(params: SystemParams, drive: DriveConfig) -> SidebandSolution:
    """Independent route: solve the 4x4 steady-state system directly."""
    sol = bare_amplitudes(params, drive)
    M, rhs = sideband_matrix(params, sol)
    # equilibrate: rows span ~1 (optical) down to ~1e-4 (mechanical)
    r = 1.0 / np.abs(M).max(axis=1)
    Ms = M * r[:, None]
    c = 1.0 / np.abs(Ms).max(axis=0)
    Ms = Ms * c[None, :]
    if not np.isfinite(Ms).all() or np.linalg.cond(Ms) > 1e15:
        raise SingularityError("singular sideband matrix", **params.to_dict())
    y = np.linalg.solve(Ms, rhs * r) * c
    a_cm, a_t0, bc_dag, bt_dag = (complex(v) for v in y)
    return replace(sol, zeta=_zeta(params, sol.g_c_bar), a_t0=a_t0, a_cm=a_cm,
                   b_c=bc_dag.conjugate(), b_t=bt_dag.conjugate())


def stokes_magnitude(params: SystemParams, drive: DriveConfig) -> float:
    return abs(stokes_closed_form(params, drive).a_t0)


@dataclass
class SweepGrid:
    gamma_values: np.ndarray
    K_values: np.ndarray
    magnitude: np.ndarray            # shape (len(gamma), len(K)); NaN where masked
    mask: np.ndarray                 # True where the closed form was singular
    ridge: list[tuple[float, float, float]] = field(default_factory=list)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gamma", "K", "magnitude"])
            for i, g in enumerate(self.gamma_values):
                for j, k in enumerate(self.K_values):
                    w.writerow([_fmt(g), _fmt(k), _fmt(self.magnitude[i, j])])
        return path

    def ridge_to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["gamma", "K_star", "magnitude_at_star"])
            for g, k, m in self.ridge:
                w.writerow([_fmt(g), _fmt(k), _fmt(m)])
        return path


def _fmt(x: float) -> str:
    return "%.17g" % x


def sweep_gamma_K(params: SystemParams, drive: DriveConfig, gammas, Ks,
                  refine_ridge: bool = True) -> SweepGrid:
    gammas = np.asarray(gammas, dtype=float)
    Ks = np.asarray(Ks, dtype=float)
    if (gammas <= 0).any() or (Ks < 0).any():
        raise ValueError("gammas must be positive and Ks nonnegative")
    if (np.diff(gammas) <= 0).any() or (np.diff(Ks) <= 0).any():
        raise ValueError("gammas and Ks must be strictly increasing")
    _check_ansatz(drive)

    mag = np.full((gammas.size, Ks.size), np.nan)
    mask = np.zeros(mag.shape, dtype=bool)
    for i, g in enumerate(gammas):
        for j, k in enumerate(Ks):
            try:
                mag[i, j] = stokes_magnitude(params.with_updates(gamma=float(g), K=float(k)), drive)
            except SingularityError:
                mask[i, j] = True

    ridge = []
    for i, g in enumerate(gammas):
        row = np.where(mask[i], -np.inf, mag[i])
        j = int(np.argmax(row))
        k_star, m_star = float(Ks[j]), float(mag[i, j])
        if refine_ridge:
            k_star = optimal_K(params, drive, float(g))
            m_star = stokes_magnitude(params.with_updates(gamma=float(g), K=k_star), drive)
        ridge.append((float(g), k_star, m_star))
    return SweepGrid(gammas, Ks, mag, mask, ridge)


def optimal_K(params: SystemParams, drive: DriveConfig, gamma: float,
              rtol: float = 1e-6, n_scan: int = 257) -> float:
    """Coupling ``K`` maximising ``|<a_t,0>|`` at fixed ``gamma``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    base = params.with_updates(gamma=float(gamma))
    hi = 10.0 * gamma

    def objective(K):
        try:
            return -stokes_magnitude(base.with_updates(K=float(K)), drive)
        except SingularityError:
            return np.inf

    scan = np.linspace(0.0, hi, n_scan)
    vals = np.array([objective(k) for k in scan])
    interior = (vals[1:-1] < vals[:-2]) & (vals[1:-1] < vals[2:])
    j = int(np.argmin(vals))
    if interior.sum() != 1:
        warnings.warn(f"objective not unimodal on [0, {hi:g}]; refining around the best "
                      "scan point", OmsimWarning, stacklevel=2)
    lo_b = scan[max(j - 1, 0)]
    hi_b = scan[min(j + 1, n_scan - 1)]
    if interior.sum() == 1:
        lo_b, hi_b = 0.0, hi
    res = minimize_scalar(objective, bounds=(lo_b, hi_b), method="bounded",
                          options={"xatol": rtol * gamma, "maxiter": 500})
    return float(res.x)
