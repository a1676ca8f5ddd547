"""Output power spectra from quantum-regression propagation of two-time cumulants.

The correlation ``C(tau) = <a^+(0)> <a(tau)> + Delta<a^+(0) a(tau)>`` is
evaluated in the rotating frame of the moment equations.  Its fluctuation part
obeys a linear ODE whose coefficients are periodic in ``tau``, so one period of
the fundamental matrix (and its monodromy) determines the whole correlation.
Transforms over long windows are then exact geometric sums per period.

Lab-frame convention: a frame harmonic ``exp(+i n Omega0 tau)`` appears at the
detuning ``delta = xi_ref - n``, and ``S(delta) = int C(tau) w(tau)
exp(+i (delta - xi_ref) Omega0 tau) dtau``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .cumulant import MODES, N_PACKED, MomentOde
from .dynamics import DEFAULT_TOL, SteadyState
from .errors import OmsimWarning
from .model import DriveConfig, SystemParams

CAVITIES = {"controller": 0, "target": 1, "a_c": 0, "a_t": 1}

# exp(-tau / tau_w) convergence factor; see README for the calibration
DEFAULT_COHERENCE = 10 ** 4.886
DEFAULT_SPAN = 12.0                   # propagation span in units of the coherence time
DEFAULT_GRID = (-1.5, 3.5, 4001)
DEFAULT_PEAK_WINDOW = 0.025


def _cavity_index(alpha) -> int:
    if isinstance(alpha, str):
        try:
            return CAVITIES[alpha]
        except KeyError:
            raise ValueError(f"unknown cavity {alpha!r}; use 'controller' or 'target'") from None
    if alpha not in (0, 1):
        raise ValueError("cavity index must be 0 (controller) or 1 (target)")
    return int(alpha)


def initial_regression_vector(symbols: np.ndarray, alpha: int) -> np.ndarray:
    """``Delta<a_alpha^+ X>`` for X over (a_c, a_t, b_c, b_t, a_c^+, a_t^+, b_c^+, b_t^+)."""
    v = np.empty(8, dtype=complex)
    for j in range(4):
        v[j] = symbols[4 + 4 * alpha + j]                  # N[alpha, j]
        v[4 + j] = np.conj(symbols[20 + 4 * j + alpha])    # conj A[j, alpha]
    return v


# ---------------------------------------------------------------------------
# correlation containers

@dataclass
class SampledCorrelation:
    """Correlation sampled on a uniform lag grid starting at zero."""

    tau: np.ndarray
    mean: np.ndarray
    fluct: np.ndarray
    frame_detuning: Fraction = Fraction(1)
    Omega0: float = 1.0
    params: SystemParams | None = None

    @property
    def total(self) -> np.ndarray:
        return self.mean + self.fluct

    @property
    def T(self) -> float:
        return float(self.tau[-1])

    @property
    def dt(self) -> float:
        return float(self.tau[1] - self.tau[0])


@dataclass
class TwoTimeCorrelation:
    """Periodic-coefficient representation of ``C_alpha(tau)`` on ``[0, m P]``.

    On the lag ``tau = k P + s_i`` the mean part is ``prefactor * mu[i]`` and the
    fluctuation part is ``phi_rows[i] @ M^k @ v0``.
    """

    alpha: int
    period: float
    n: int                            # samples per period
    m: int                            # number of periods
    prefactor: complex                # conj of the period-averaged <a_alpha>
    mu: np.ndarray                    # <a_alpha(s_i)>, shape (n + 1,)
    phi_rows: np.ndarray              # row alpha of the fundamental matrix, (n + 1, 8)
    monodromy: np.ndarray             # fundamental matrix after one period
    v0: np.ndarray
    frame_detuning: Fraction = Fraction(1)
    Omega0: float = 1.0
    params: SystemParams | None = None

    @property
    def dt(self) -> float:
        return self.period / self.n

    @property
    def T(self) -> float:
        return self.m * self.period

    @property
    def floquet_multipliers(self) -> np.ndarray:
        return np.linalg.eigvals(self.monodromy)

    def decay_time(self) -> float:
        """Slowest decay time of the fluctuation part (from the Floquet multipliers)."""
        rho = np.abs(self.floquet_multipliers).max()
        if rho >= 1.0:
            return math.inf
        return -self.period / math.log(rho)

    def at(self, tau) -> np.ndarray:
        """Total correlation at lags on the sample grid."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        j = np.rint(tau / self.dt).astype(np.int64)
        if np.any(np.abs(j * self.dt - tau) > 1e-9 * max(1.0, self.T)):
            raise ValueError("lags must lie on the sample grid")
        k, i = np.divmod(j, self.n)
        out = np.empty(tau.size, dtype=complex)
        for kk in np.unique(k):
            sel = k == kk
            u = np.linalg.matrix_power(self.monodromy, int(kk)) @ self.v0
            out[sel] = self.prefactor * self.mu[i[sel]] + self.phi_rows[i[sel]] @ u
        return out

    def samples(self, t_max: float | None = None) -> SampledCorrelation:
        """Materialise the correlation on the uniform grid up to ``t_max``."""
        m = self.m if t_max is None else min(self.m, int(math.ceil(t_max / self.period)))
        mean = np.empty(m * self.n + 1, dtype=complex)
        fluct = np.empty_like(mean)
        u = self.v0.copy()
        for k in range(m):
            sl = slice(k * self.n, (k + 1) * self.n)
            mean[sl] = self.prefactor * self.mu[:-1]
            fluct[sl] = self.phi_rows[:-1] @ u
            u = self.monodromy @ u
        mean[-1] = self.prefactor * self.mu[0]
        fluct[-1] = u[self.alpha]
        tau = self.dt * np.arange(mean.size)
        return SampledCorrelation(tau, mean, fluct, self.frame_detuning, self.Omega0, self.params)


def _fundamental_cycle(ode: MomentOde, steady: SteadyState, tol: float):
    y0 = np.concatenate([steady.cycle[0], np.eye(8).ravel(), np.zeros(64)])
    t0 = steady.cycle_times[0]
    sol = solve_ivp(ode.floquet_rhs, (t0, steady.cycle_times[-1]), y0, method="DOP853",
                    t_eval=steady.cycle_times, rtol=tol, atol=tol * 1e-3)
    if sol.status != 0:
        raise RuntimeError(f"fundamental-matrix integration failed: {sol.message}")
    y = sol.y.T
    phi = (y[:, N_PACKED:N_PACKED + 64] + 1j * y[:, N_PACKED + 64:]).reshape(-1, 8, 8)
    return phi


def mean_prefactor(steady: SteadyState, alpha: int, reference: str = "probe") -> complex:
    """Conjugated period average of ``<a_alpha>`` entering the factorised term.

    With ``reference="frame"`` the average is taken in the rotating frame of the
    moment equations.  With ``"probe"`` it is taken in the frame co-rotating
    with the strongest tone on cavity ``alpha``, evaluated at the cycle start;
    this makes the correlation covariant under a change of ``xi_ref`` and
    coincides with the frame average whenever ``xi_ref`` equals the probe
    detuning.
    """
    if reference == "frame":
        return complex(np.conj(steady.period_mean[alpha]))
    if reference != "probe":
        raise ValueError("reference must be 'probe' or 'frame'")
    drive = steady.ode.drive
    tones = drive.tones_on(("controller", "target")[alpha])
    if not tones:
        return complex(np.conj(steady.period_mean[alpha]))
    probe = max(tones, key=lambda t: (abs(t.amplitude), -t.detuning))
    w = float(drive.frame_detuning - probe.detuning) * steady.ode.params.Omega0
    s = steady.cycle_times - steady.cycle_times[0]
    x = steady.cycle_means()[:, alpha] * np.exp(-1j * w * s)
    return complex(np.conj(x[:-1].mean()))


def propagate_two_time(ode: MomentOde, steady: SteadyState, alpha="target",
                       T: float | None = None, dt: float | None = None,
                       tol: float = DEFAULT_TOL, reference: str = "probe") -> TwoTimeCorrelation:
    """Two-time correlation of cavity ``alpha`` over ``[0, T]``.

    ``T`` is rounded up to whole drive periods.  ``dt`` must divide the period
    evenly on the stored cycle grid; by default the steady-state cycle grid is
    used.  ``reference`` selects the factorised prefactor, see
    :func:`mean_prefactor`.
    """
    if not steady.converged:
        raise ValueError("steady state has not converged")
    a = _cavity_index(alpha)
    P = steady.period
    n = steady.cycle.shape[0] - 1
    if dt is not None:
        stride = P / n
        q = dt / stride
        if q < 1 - 1e-9 or abs(q - round(q)) > 1e-6 or n % round(q):
            raise ValueError(f"dt must be a multiple of the cycle spacing {stride:.6g} "
                             f"dividing the period {P:.6g}")
    T = DEFAULT_SPAN * DEFAULT_COHERENCE if T is None else float(T)
    if T <= 0:
        raise ValueError("T must be positive")
    m = max(1, int(math.ceil(T / P - 1e-9)))

    phi = _fundamental_cycle(ode, steady, tol)
    if dt is not None:
        step = int(round(dt / (P / n)))
        phi = phi[::step]
        mu = steady.cycle_means()[::step, a]
        n //= step
    else:
        mu = steady.cycle_means()[:, a]
    prefactor = mean_prefactor(steady, a, reference)
    v0 = initial_regression_vector(steady.cycle_symbols()[0], a)
    corr = TwoTimeCorrelation(a, P, n, m, prefactor, mu.copy(), phi[:, a, :].copy(),
                              phi[-1].copy(), v0, ode.drive.frame_detuning,
                              ode.params.Omega0, ode.params)
    if np.abs(corr.floquet_multipliers).max() >= 1.0:
        warnings.warn("regression generator is not contracting; the steady state may be "
                      "unstable", OmsimWarning, stacklevel=2)
    return corr


# ---------------------------------------------------------------------------
# windows and quadrature

def window_terms(window: str, T: float, coherence_time: float | None = None):
    """Window ``w(tau)`` as a list of ``(weight, rate)`` with ``w = sum weight e^(rate tau)``."""
    if window == "rect":
        return [(1.0, 0.0)]
    if window == "exp":
        tc = DEFAULT_COHERENCE if coherence_time is None else float(coherence_time)
        if tc <= 0:
            raise ValueError("coherence_time must be positive")
        return [(1.0, -1.0 / tc)]
    if window == "hann":
        w = 2j * math.pi / T
        return [(0.5, 0.0), (-0.25, w), (-0.25, -w)]
    raise ValueError(f"unknown window {window!r}; use 'exp', 'rect' or 'hann'")


def _geometric(zlog: np.ndarray, m: int) -> np.ndarray:
    """``sum_{k<m} z^k`` with ``z = exp(zlog)``, accurate near ``z = 1``."""
    # only z matters, so fold the phase onto the principal branch
    zlog = zlog.real + 1j * (np.mod(zlog.imag + np.pi, 2 * np.pi) - np.pi)
    den = np.expm1(zlog)
    small = np.abs(zlog) < 1e-12
    safe = np.where(small, 1.0, den)
    return np.where(small, m, np.expm1(m * zlog) / safe)


def _floquet_transform(C: TwoTimeCorrelation, q: np.ndarray, chunk: int = 2048):
    """Trapezoid sums of ``C(tau) e^(q tau)`` over ``[0, T]`` (mean and fluctuation)."""
    n, m, P, a = C.n, C.m, C.period, C.alpha
    s = C.dt * np.arange(n)
    u_m = np.linalg.matrix_power(C.monodromy, m) @ C.v0
    eye = np.eye(8)
    S_mean = np.empty(q.size, dtype=complex)
    S_fluct = np.empty(q.size, dtype=complex)
    for lo in range(0, q.size, chunk):
        qq = q[lo:lo + chunk]
        E = np.exp(np.outer(qq, s))
        zlog = qq * P
        z = np.exp(zlog)
        zm = np.exp(m * zlog)
        geo = _geometric(zlog, m)
        mean_sum = C.prefactor * (E @ C.mu[:n]) * geo
        f0 = C.prefactor * C.mu[0]
        fN = zm * C.prefactor * C.mu[0]
        S_mean[lo:lo + chunk] = C.dt * (mean_sum - 0.5 * f0 + 0.5 * fN)

        R = E @ C.phi_rows[:n]
        A = eye[None] - z[:, None, None] * C.monodromy[None]
        rhs = C.v0[None, :] - zm[:, None] * u_m[None, :]
        X = np.linalg.solve(A, rhs[..., None])[..., 0]
        fl_sum = np.einsum("gj,gj->g", R, X)
        S_fluct[lo:lo + chunk] = C.dt * (fl_sum - 0.5 * C.v0[a] + 0.5 * zm * u_m[a])
    return S_mean, S_fluct


def _sampled_transform(C: SampledCorrelation, q: np.ndarray, chunk: int = 256):
    w = np.full(C.tau.size, C.dt)
    w[0] = w[-1] = 0.5 * C.dt
    S_mean = np.empty(q.size, dtype=complex)
    S_fluct = np.empty(q.size, dtype=complex)
    for lo in range(0, q.size, chunk):
        K = np.exp(np.outer(q[lo:lo + chunk], C.tau)) * w
        S_mean[lo:lo + chunk] = K @ C.mean
        S_fluct[lo:lo + chunk] = K @ C.fluct
    return S_mean, S_fluct


# ---------------------------------------------------------------------------
# spectra

@dataclass
class Spectrum:
    detuning: np.ndarray
    values: np.ndarray                # complex total spectrum
    fluct_values: np.ndarray          # cumulant-only part
    frame_detuning: Fraction = Fraction(1)
    drive: DriveConfig | None = None
    window: str = "exp"
    feature_width: float | None = None

    @property
    def mean_values(self) -> np.ndarray:
        return self.values - self.fluct_values

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def normalized(self) -> np.ndarray:
        mag = self.magnitude
        peak = mag.max()
        return mag / peak if peak > 0 else mag.copy()

    @property
    def argmax(self) -> float:
        return float(self.detuning[int(np.argmax(self.magnitude))])

    def cumulant_only(self) -> "Spectrum":
        return Spectrum(self.detuning, self.fluct_values, self.fluct_values,
                        self.frame_detuning, self.drive, self.window, self.feature_width)

    def to_csv(self, path) -> Path:
        path = Path(path)
        norm = self.normalized
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta", "re_S", "im_S", "abs_S", "normalized"])
            for d, v, r in zip(self.detuning, self.values, norm):
                w.writerow(["%.17g" % x for x in (d, v.real, v.imag, abs(v), r)])
        return path


def lattice_centers(drive: DriveConfig, lo: float, hi: float) -> np.ndarray:
    """Integer detunings and drive-harmonic lines inside ``[lo, hi]``."""
    base = drive.base_harmonic()
    pts = set()
    for x in range(math.ceil(lo), math.floor(hi) + 1):
        pts.add(Fraction(x))
    k_lo = math.ceil((drive.frame_detuning - Fraction(hi)) / base)
    k_hi = math.floor((drive.frame_detuning - Fraction(lo)) / base)
    for k in range(k_lo, k_hi + 1):
        pts.add(drive.frame_detuning - k * base)
    return np.array(sorted(float(p) for p in pts if lo <= p <= hi))


def default_grid(drive: DriveConfig, params: SystemParams | None = None,
                 lo: float = DEFAULT_GRID[0], hi: float = DEFAULT_GRID[1],
                 n: int = DEFAULT_GRID[2], window: float = DEFAULT_PEAK_WINDOW) -> np.ndarray:
    """Uniform grid plus fine patches around every candidate line.

    Patches span the peak window and baseline annulus with a spacing of a
    quarter mechanical linewidth, so narrow features are resolved.
    """
    params = params or SystemParams()
    grid = [np.linspace(lo, hi, n)]
    h = min(params.gamma / 4.0, window / 40.0) if params.gamma > 0 else window / 40.0
    half = int(math.ceil(4 * window / h))
    offsets = h * np.arange(-half, half + 1)
    for c in lattice_centers(drive, lo, hi):
        grid.append(c + offsets)
    g = np.unique(np.concatenate(grid))
    return g[(g >= lo) & (g <= hi)]


def _check_grid(grid: np.ndarray, centers: np.ndarray, width: float | None):
    if grid[0] > -1.0 or grid[-1] < 3.0:
        warnings.warn("spectrum grid does not cover [-1, 3]", OmsimWarning, stacklevel=3)
    if not width:
        return
    for c in centers:
        near = grid[np.abs(grid - c) <= 10 * width]
        if near.size < 2 or np.diff(near).max() > width:
            warnings.warn(f"grid spacing near delta={c:g} is coarser than the feature width "
                          f"{width:.3g}", OmsimWarning, stacklevel=3)
            return


def compute_spectrum(C, drive: DriveConfig | None = None, grid=None, window: str = "exp",
                     coherence_time: float | None = None) -> Spectrum:
    """Trapezoid transform of ``C`` on the detuning grid.

    ``C`` is either a :class:`TwoTimeCorrelation` (exact per-period geometric
    sums) or a :class:`SampledCorrelation` (direct quadrature).
    """
    if drive is not None and drive.frame_detuning != C.frame_detuning:
        raise ValueError("drive and correlation use different rotating frames")
    params = C.params
    if grid is None:
        if drive is None:
            raise ValueError("a grid or a drive configuration is required")
        grid = default_grid(drive, params)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-d array")
    width = params.gamma / 2.0 if params is not None and params.gamma > 0 else None
    if drive is not None:
        _check_grid(np.sort(grid), lattice_centers(drive, grid.min(), grid.max()), width)

    omega = (grid - float(C.frame_detuning)) * C.Omega0
    transform = _floquet_transform if isinstance(C, TwoTimeCorrelation) else _sampled_transform
    S_mean = np.zeros(grid.size, dtype=complex)
    S_fluct = np.zeros(grid.size, dtype=complex)
    for weight, rate in window_terms(window, C.T, coherence_time):
        sm, sf = transform(C, 1j * omega + rate)
        S_mean += weight * sm
        S_fluct += weight * sf
    return Spectrum(grid, S_mean + S_fluct, S_fluct, C.frame_detuning, drive, window, width)


# ---------------------------------------------------------------------------
# peaks

@dataclass
class Peak:
    delta_center: float
    height: float
    baseline: float
    eta: float
    order: float
    kind: str
    peak_delta: float
    dip: float
    dip_delta: float

    @property
    def fano(self) -> bool:
        """Both an enhancement and a suppression relative to the baseline."""
        return self.height > self.baseline and self.dip < self.baseline

    def to_dict(self) -> dict:
        return {"delta_center": self.delta_center, "height": self.height,
                "baseline": self.baseline, "eta": self.eta, "kind": self.kind,
                "order": self.order, "peak_delta": self.peak_delta, "dip": self.dip,
                "dip_delta": self.dip_delta}


@dataclass
class PeakReport:
    peaks: list[Peak] = field(default_factory=list)
    window: float = DEFAULT_PEAK_WINDOW

    def at(self, delta: float, tol: float = 1e-9) -> Peak:
        for p in self.peaks:
            if abs(p.delta_center - delta) <= tol:
                return p
        raise KeyError(f"no peak candidate at delta={delta:g}")

    def eta(self, delta: float) -> float:
        return self.at(delta).eta

    def by_kind(self, kind: str) -> list[Peak]:
        return [p for p in self.peaks if p.kind == kind]

    def to_json(self, path=None) -> str:
        text = json.dumps([p.to_dict() for p in self.peaks], indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def classify(delta: float, drive: DriveConfig | None) -> tuple[float, str]:
    """Order and name of a line relative to the (first) target tone."""
    if drive is None or not drive.tones_on("target"):
        return delta - 1.0, _kind_name(delta - 1.0)
    order = delta - float(drive.tones_on("target")[0].detuning)
    return order, _kind_name(order)


def _kind_name(order: float) -> str:
    if abs(order) < 1e-12:
        return "drive"
    if abs(order - round(order)) > 1e-12:
        return "sideband"
    k = int(round(order))
    name = "stokes" if k < 0 else "anti-stokes"
    return name if abs(k) == 1 else f"{name}-{abs(k)}"


def _annulus_median(d, mag, c, window, samples: int = 200) -> float:
    # median over the annulus as a region, independent of how densely each side is sampled
    side = np.linspace(2 * window, 4 * window, samples)
    pts = np.concatenate([c - side[::-1], c + side])
    pts = pts[(pts >= d[0]) & (pts <= d[-1])]
    return float(np.median(np.interp(pts, d, mag)))


def find_peaks_eta(spec: Spectrum, window: float = DEFAULT_PEAK_WINDOW, centers=None) -> PeakReport:
    """Peak-to-baseline ratios around candidate line positions.

    Height is the maximum of the normalized magnitude within ``+-window``; the
    baseline is the median over ``2 window <= |delta - c| <= 4 window``.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    order_ = np.argsort(spec.detuning, kind="stable")
    d = spec.detuning[order_]
    mag = spec.normalized[order_]
    if centers is None:
        lo, hi = d.min() + 4 * window, d.max() - 4 * window
        if spec.drive is not None:
            centers = lattice_centers(spec.drive, lo, hi)
        else:
            centers = np.arange(math.ceil(lo), math.floor(hi) + 1, dtype=float)
    peaks = []
    for c in np.atleast_1d(np.asarray(centers, dtype=float)):
        dist = np.abs(d - c)
        inner = dist <= window
        ring = (dist >= 2 * window) & (dist <= 4 * window)
        if not inner.any() or not ring.any():
            raise ValueError(f"empty peak window or annulus around delta={c:g}")
        vals = mag[inner]
        i_max, i_min = int(np.argmax(vals)), int(np.argmin(vals))
        height = float(vals[i_max])
        baseline = _annulus_median(d, mag, c, window)
        eta = height / baseline if baseline > 0 else (1.0 if height == 0 else math.inf)
        order, kind = classify(float(c), spec.drive)
        peaks.append(Peak(float(c), height, baseline, eta, order, kind,
                          float(d[inner][i_max]), float(vals[i_min]), float(d[inner][i_min])))
    return PeakReport(peaks, window)
