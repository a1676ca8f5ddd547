"""Doublet-truncated moment equations for the two coupled optomechanical systems.

The equations are derived mechanically from the Heisenberg equations in the
frame rotating at ``omega0 + xi_ref * Omega0`` on both cavities:

    d a_j/dt = (i xi_ref Omega0 - kappa/2) a_j + i g0 (b_j^+ a_j + a_j b_j) + F_j(t)
    d b_j/dt = (-i Omega_j - gamma/2) b_j + i g0 a_j^+ a_j + i K b_other

Every operator product is brought to normal order (``[x_i, x_j^+] = delta_ij``)
before the cluster expansion; third-order cumulants are dropped.  The
resulting polynomial right-hand side is compiled to flat term tables that a
numba kernel evaluates.

State layout (complex "symbol vector", 36 entries):
    0..3    means <a_c>, <a_t>, <b_c>, <b_t>
    4..19   N[i, j] = Delta<x_i^+ x_j>
    20..35  A[i, j] = Delta<x_i x_j>
Packed real vector (44 entries): Re/Im of the means, the 16 real degrees of
freedom of the Hermitian ``N`` and Re/Im of the 10 independent entries of
the symmetric ``A``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numba
import numpy as np
import sympy as sp

from .errors import ValidationError
from .model import DriveConfig, SystemParams, errors, validate

MODES = ("a_c", "a_t", "b_c", "b_t")
A_C, A_T, B_C, B_T = range(4)
N_SYM = 36
CONJ = 36
ONE = 72
DRIVE = 73          # F_c, F_t, conj F_c, conj F_t at 73..76
N_EXT = 77
N_PACKED = 44

kappa, gamma, g0, K, Om_c, Om_t, w_f = sp.symbols(
    "kappa gamma g0 K Omega_c Omega_t w_frame", real=True)
I = sp.I

# ---------------------------------------------------------------------------
# operator algebra

Op = tuple  # (mode, dagger)


def _partner(mode: int) -> int:
    return {B_C: B_T, B_T: B_C}[mode]


def _heisenberg(mode: int):
    """Right-hand side of d x/dt as ``[(coef, drive, ops), ...]``."""
    if mode in (A_C, A_T):
        b = mode + 2
        return [
            (I * w_f - kappa / 2, None, ((mode, False),)),
            (I * g0, None, ((b, True), (mode, False))),
            (I * g0, None, ((mode, False), (b, False))),
            (sp.Integer(1), (mode, False), ()),
        ]
    a = mode - 2
    om = Om_c if mode == B_C else Om_t
    return [
        (-I * om - gamma / 2, None, ((mode, False),)),
        (I * g0, None, ((a, True), (a, False))),
        (I * K, None, ((_partner(mode), False),)),
    ]


@lru_cache(maxsize=None)
def heisenberg(op: Op):
    mode, dag = op
    terms = _heisenberg(mode)
    if not dag:
        return tuple(terms)
    out = []
    for coef, drive, ops in terms:
        d = None if drive is None else (drive[0], True)
        out.append((sp.conjugate(coef), d, tuple((m, not g) for m, g in reversed(ops))))
    return tuple(out)


def normal_order(ops: tuple) -> list[tuple[int, tuple]]:
    """Rewrite a product of ladder operators as a sum of normal-ordered products."""
    for k in range(len(ops) - 1):
        (m1, d1), (m2, d2) = ops[k], ops[k + 1]
        if not d1 and d2:
            swapped = ops[:k] + (ops[k + 1], ops[k]) + ops[k + 2:]
            out = normal_order(swapped)
            if m1 == m2:
                out += normal_order(ops[:k] + ops[k + 2:])
            return out
    return [(1, ops)]


# ---------------------------------------------------------------------------
# cluster expansion over state symbols

def mean_sym(op: Op):
    return ("m", op[0], op[1])


def pair_sym(x: Op, y: Op):
    """Symbol for the doublet Delta<x y> of a normal-ordered pair."""
    (i, di), (j, dj) = x, y
    if di and not dj:
        return ("N", i, j)
    if not di and not dj:
        return ("A", i, j)
    if di and dj:
        return ("Ac", j, i)        # Delta<x_i^+ x_j^+> = conj(A[j, i])
    raise ValueError("pair is not normal ordered")


def expect(ops: tuple) -> list[tuple[int, tuple]]:
    """Cluster-expand <ops> for a normal-ordered product of length <= 3."""
    n = len(ops)
    if n == 0:
        return [(1, ())]
    if n == 1:
        return [(1, (mean_sym(ops[0]),))]
    if n == 2:
        x, y = ops
        return [(1, (mean_sym(x), mean_sym(y))), (1, (pair_sym(x, y),))]
    if n == 3:
        x, y, z = ops
        mx, my, mz = mean_sym(x), mean_sym(y), mean_sym(z)
        return [
            (1, (mx, my, mz)),
            (1, (mx, pair_sym(y, z))),
            (1, (my, pair_sym(x, z))),
            (1, (mz, pair_sym(x, y))),
        ]
    raise ValueError("products above third order do not occur")


class Expr(dict):
    """Polynomial in state symbols: ``{sorted factor tuple: sympy coefficient}``."""

    def add(self, coef, factors: Iterable):
        key = tuple(sorted(factors))
        self[key] = self.get(key, 0) + coef

    def extend(self, other: "Expr", scale=1, extra: tuple = ()):
        for key, coef in other.items():
            self.add(scale * coef, key + extra)

    def simplified(self) -> "Expr":
        out = Expr()
        for key, coef in self.items():
            c = sp.expand(coef)
            if c != 0:
                out[key] = c
        return out


def _drive_factor(drive):
    return () if drive is None else (("F", drive[0], drive[1]),)


def expect_rhs(op: Op) -> Expr:
    """<d op/dt> expanded to doublet order."""
    out = Expr()
    for coef, drive, ops in heisenberg(op):
        for c1, nops in normal_order(ops):
            for c2, factors in expect(nops):
                out.add(coef * c1 * c2, factors + _drive_factor(drive))
    return out


def doublet_rhs(x: Op, y: Op) -> Expr:
    """d/dt Delta<x y>, triplets dropped.

    An anti-normal pair is first reordered, Delta<x y^+> = Delta<y^+ x> + delta,
    so the constant never reaches the product rule.
    """
    if not x[1] and y[1]:
        return doublet_rhs(y, x)
    out = Expr()
    for coef, drive, ops in heisenberg(x):
        for c1, nops in normal_order(ops + (y,)):
            for c2, factors in expect(nops):
                out.add(coef * c1 * c2, factors + _drive_factor(drive))
    for coef, drive, ops in heisenberg(y):
        for c1, nops in normal_order((x,) + ops):
            for c2, factors in expect(nops):
                out.add(coef * c1 * c2, factors + _drive_factor(drive))
    out.extend(expect_rhs(x), -1, (mean_sym(y),))
    out.extend(expect_rhs(y), -1, (mean_sym(x),))
    return out.simplified()


def regression_rhs(x: Op) -> Expr:
    """d/dtau Delta<S(0) x(tau)> for a fixed spectator S, triplets with S dropped.

    Factors ``("V", op)`` stand for Delta<S(0) op(tau)>.
    """
    out = Expr()
    for coef, drive, ops in heisenberg(x):
        if drive is not None or not ops:
            continue                      # c-number terms cancel against <S><F>
        for c1, nops in normal_order(ops):
            if len(nops) == 1:
                out.add(coef * c1, (("V", nops[0]),))
            elif len(nops) == 2:
                y, z = nops
                out.add(coef * c1, (mean_sym(y), ("V", z)))
                out.add(coef * c1, (mean_sym(z), ("V", y)))
            # a bare commutator constant carries no fluctuation
    return out.simplified()


def state_components():
    """Names and normal-ordered operator pairs of the 36 state symbols."""
    comps = [("m", (i, False)) for i in range(4)]
    comps += [("N", ((i, True), (j, False))) for i in range(4) for j in range(4)]
    comps += [("A", ((i, False), (j, False))) for i in range(4) for j in range(4)]
    return comps


@lru_cache(maxsize=None)
def symbolic_system() -> tuple[Expr, ...]:
    eqs = []
    for kind, ops in state_components():
        if kind == "m":
            eqs.append(expect_rhs(ops).simplified())
        else:
            eqs.append(doublet_rhs(*ops))
    return tuple(eqs)


LADDER = tuple((m, False) for m in range(4)) + tuple((m, True) for m in range(4))


@lru_cache(maxsize=None)
def symbolic_regression() -> tuple[Expr, ...]:
    return tuple(regression_rhs(x) for x in LADDER)


# ---------------------------------------------------------------------------
# rendering

def op_name(op: Op) -> str:
    return MODES[op[0]] + ("^+" if op[1] else "")


def factor_name(f) -> str:
    kind = f[0]
    if kind == "m":
        return f"<{op_name((f[1], f[2]))}>"
    if kind == "N":
        return f"D<{op_name((f[1], True))} {op_name((f[2], False))}>"
    if kind == "A":
        return f"D<{MODES[f[1]]} {MODES[f[2]]}>"
    if kind == "Ac":
        return f"D<{MODES[f[2]]}^+ {MODES[f[1]]}^+>"
    if kind == "F":
        return "F_" + MODES[f[1]][-1] + ("*" if f[2] else "") + "(t)"
    if kind == "V":
        return f"V[{op_name(f[1])}]"
    raise ValueError(f)


def component_name(index: int) -> str:
    kind, ops = state_components()[index]
    if kind == "m":
        return f"<{op_name(ops)}>"
    return f"D<{op_name(ops[0])} {op_name(ops[1])}>"


def render_expr(expr: Expr) -> str:
    parts = []
    for key in sorted(expr, key=lambda k: (len(k), k)):
        coef = expr[key]
        body = " ".join(factor_name(f) for f in key) or "1"
        parts.append(f"({coef})*{body}")
    return " + ".join(parts) if parts else "0"


def render_equations() -> str:
    """One line per state component, for inspection and regression diffs."""
    lines = []
    for idx, expr in enumerate(symbolic_system()):
        lines.append(f"d/dt {component_name(idx)} = {render_expr(expr)}")
    for x, expr in zip(LADDER, symbolic_regression()):
        lines.append(f"d/dtau V[{op_name(x)}] = {render_expr(expr)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# compilation to numeric term tables

def _factor_index(f) -> int:
    kind = f[0]
    if kind == "m":
        return f[1] + (CONJ if f[2] else 0)
    if kind == "N":
        return 4 + 4 * f[1] + f[2]
    if kind == "A":
        return 20 + 4 * f[1] + f[2]
    if kind == "Ac":
        return CONJ + 20 + 4 * f[1] + f[2]
    if kind == "F":
        return DRIVE + f[1] + (2 if f[2] else 0)
    raise ValueError(f)


def _subs(params: SystemParams, drive: DriveConfig) -> dict:
    return {
        kappa: params.kappa, gamma: params.gamma, g0: params.g0, K: params.K,
        Om_c: params.Omega_c, Om_t: params.Omega_t,
        w_f: float(drive.frame_detuning) * params.Omega0,
    }


@dataclass(frozen=True)
class TermTable:
    target: np.ndarray
    coef: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    f2: np.ndarray

    def __len__(self):
        return self.target.size


def _compile(exprs, subs, index_of) -> TermTable:
    rows = []
    for target, expr in enumerate(exprs):
        for key, coef in expr.items():
            c = complex(sp.N(coef.subs(subs)))
            if c == 0:
                continue
            idx = [index_of(f) for f in key]
            if len(idx) > 3:
                raise AssertionError("term of degree > 3")
            idx += [ONE] * (3 - len(idx))
            rows.append((target, c, *idx))
    if not rows:
        rows = [(0, 0j, ONE, ONE, ONE)]
    t, c, a, b, d = zip(*rows)
    return TermTable(np.array(t, dtype=np.int64), np.array(c, dtype=np.complex128),
                     np.array(a, dtype=np.int64), np.array(b, dtype=np.int64),
                     np.array(d, dtype=np.int64))


def _regression_index(f) -> int:
    # V factors are addressed separately; means use the usual layout
    if f[0] == "V":
        return 100 + LADDER.index(f[1])
    return _factor_index(f)


def _compile_regression(subs) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Entries of the 8x8 regression generator as (row, col, coef, mean index)."""
    rows = []
    for r, expr in enumerate(symbolic_regression()):
        for key, coef in expr.items():
            c = complex(sp.N(coef.subs(subs)))
            if c == 0:
                continue
            v = [f for f in key if f[0] == "V"]
            rest = [f for f in key if f[0] != "V"]
            assert len(v) == 1 and len(rest) <= 1
            col = LADDER.index(v[0][1])
            idx = _factor_index(rest[0]) if rest else ONE
            rows.append((r, col, c, idx))
    r, col, c, idx = zip(*rows)
    return (np.array(r, dtype=np.int64), np.array(col, dtype=np.int64),
            np.array(c, dtype=np.complex128), np.array(idx, dtype=np.int64))


# ---------------------------------------------------------------------------
# state container and packing

_TRIU = [(i, j) for i in range(4) for j in range(i, 4)]
_OFFDIAG = [(i, j) for i, j in _TRIU if i != j]


@dataclass
class CumulantState:
    t: float
    means: np.ndarray
    normal: np.ndarray
    anomalous: np.ndarray

    @classmethod
    def from_symbols(cls, t: float, s: np.ndarray) -> "CumulantState":
        s = np.asarray(s, dtype=complex)
        return cls(float(t), s[:4].copy(), s[4:20].reshape(4, 4).copy(),
                   s[20:36].reshape(4, 4).copy())

    def symbols(self) -> np.ndarray:
        return np.concatenate([self.means, self.normal.ravel(), self.anomalous.ravel()])

    def pack(self) -> np.ndarray:
        return pack(self.symbols())

    @classmethod
    def unpack(cls, t: float, y: np.ndarray) -> "CumulantState":
        return cls.from_symbols(t, unpack(y))

    def hermiticity_residual(self) -> float:
        n = np.abs(self.normal - self.normal.conj().T).max()
        a = np.abs(self.anomalous - self.anomalous.T).max()
        return float(max(n, a))


@numba.njit(cache=True)
def _unpack(y, s):
    for i in range(4):
        s[i] = y[i] + 1j * y[4 + i]
    k = 8
    for i in range(4):
        s[4 + 5 * i] = y[k] + 0j
        k += 1
    for i in range(4):
        for j in range(i + 1, 4):
            v = y[k] + 1j * y[k + 1]
            s[4 + 4 * i + j] = v
            s[4 + 4 * j + i] = np.conj(v)
            k += 2
    for i in range(4):
        for j in range(i, 4):
            v = y[k] + 1j * y[k + 1]
            s[20 + 4 * i + j] = v
            s[20 + 4 * j + i] = v
            k += 2


@numba.njit(cache=True)
def _pack(s, y):
    for i in range(4):
        y[i] = s[i].real
        y[4 + i] = s[i].imag
    k = 8
    for i in range(4):
        y[k] = s[4 + 5 * i].real
        k += 1
    for i in range(4):
        for j in range(i + 1, 4):
            y[k] = s[4 + 4 * i + j].real
            y[k + 1] = s[4 + 4 * i + j].imag
            k += 2
    for i in range(4):
        for j in range(i, 4):
            y[k] = s[20 + 4 * i + j].real
            y[k + 1] = s[20 + 4 * i + j].imag
            k += 2


def pack(s: np.ndarray) -> np.ndarray:
    y = np.empty(N_PACKED)
    _pack(np.asarray(s, dtype=np.complex128), y)
    return y


def unpack(y: np.ndarray) -> np.ndarray:
    s = np.empty(N_SYM, dtype=np.complex128)
    _unpack(np.asarray(y, dtype=np.float64), s)
    return s


# ---------------------------------------------------------------------------
# numeric kernels

@numba.njit(cache=True)
def _fill_ext(t, s, tone_cav, tone_amp, tone_freq, ext):
    for i in range(N_SYM):
        ext[i] = s[i]
        ext[CONJ + i] = np.conj(s[i])
    ext[ONE] = 1.0
    ext[DRIVE] = 0.0
    ext[DRIVE + 1] = 0.0
    for k in range(tone_cav.size):
        ext[DRIVE + tone_cav[k]] += tone_amp[k] * np.exp(1j * tone_freq[k] * t)
    ext[DRIVE + 2] = np.conj(ext[DRIVE])
    ext[DRIVE + 3] = np.conj(ext[DRIVE + 1])


@numba.njit(cache=True)
def _eval_terms(ext, target, coef, f0, f1, f2, out):
    out[:] = 0.0
    for k in range(target.size):
        out[target[k]] += coef[k] * ext[f0[k]] * ext[f1[k]] * ext[f2[k]]


@numba.njit(cache=True)
def _rhs_packed(t, y, target, coef, f0, f1, f2, tone_cav, tone_amp, tone_freq):
    s = np.empty(N_SYM, dtype=np.complex128)
    ext = np.empty(N_EXT, dtype=np.complex128)
    ds = np.empty(N_SYM, dtype=np.complex128)
    dy = np.empty(N_PACKED)
    _unpack(y, s)
    _fill_ext(t, s, tone_cav, tone_amp, tone_freq, ext)
    _eval_terms(ext, target, coef, f0, f1, f2, ds)
    _pack(ds, dy)
    return dy


@numba.njit(cache=True)
def _regression_matrix(ext, rows, cols, coef, idx, L):
    L[:, :] = 0.0
    for k in range(rows.size):
        L[rows[k], cols[k]] += coef[k] * ext[idx[k]]


@numba.njit(cache=True)
def _rhs_floquet(t, y, target, coef, f0, f1, f2, tone_cav, tone_amp, tone_freq,
                 rrows, rcols, rcoef, ridx):
    """Moment ODE augmented with the 8x8 regression propagator (Re/Im stacked)."""
    s = np.empty(N_SYM, dtype=np.complex128)
    ext = np.empty(N_EXT, dtype=np.complex128)
    ds = np.empty(N_SYM, dtype=np.complex128)
    out = np.empty(y.size)
    _unpack(y[:N_PACKED], s)
    _fill_ext(t, s, tone_cav, tone_amp, tone_freq, ext)
    _eval_terms(ext, target, coef, f0, f1, f2, ds)
    _pack(ds, out[:N_PACKED])
    L = np.empty((8, 8), dtype=np.complex128)
    _regression_matrix(ext, rrows, rcols, rcoef, ridx, L)
    phi = np.empty((8, 8), dtype=np.complex128)
    base = N_PACKED
    for i in range(8):
        for j in range(8):
            phi[i, j] = y[base + 8 * i + j] + 1j * y[base + 64 + 8 * i + j]
    dphi = L @ phi
    for i in range(8):
        for j in range(8):
            out[base + 8 * i + j] = dphi[i, j].real
            out[base + 64 + 8 * i + j] = dphi[i, j].imag
    return out


@dataclass(frozen=True)
class MomentOde:
    params: SystemParams
    drive: DriveConfig
    terms: TermTable
    regression: tuple
    tone_cav: np.ndarray
    tone_amp: np.ndarray
    tone_freq: np.ndarray
    period: float
    dimension: int = N_PACKED

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        tt = self.terms
        return _rhs_packed(float(t), y, tt.target, tt.coef, tt.f0, tt.f1, tt.f2,
                           self.tone_cav, self.tone_amp, self.tone_freq)

    def floquet_rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        tt = self.terms
        return _rhs_floquet(float(t), y, tt.target, tt.coef, tt.f0, tt.f1, tt.f2,
                            self.tone_cav, self.tone_amp, self.tone_freq, *self.regression)

    def symbol_rhs(self, t: float, s: np.ndarray) -> np.ndarray:
        """Derivative of all 36 complex symbols, each entry computed independently."""
        ext = np.empty(N_EXT, dtype=np.complex128)
        _fill_ext(float(t), np.asarray(s, dtype=np.complex128), self.tone_cav,
                  self.tone_amp, self.tone_freq, ext)
        out = np.empty(N_SYM, dtype=np.complex128)
        tt = self.terms
        _eval_terms(ext, tt.target, tt.coef, tt.f0, tt.f1, tt.f2, out)
        return out

    def regression_matrix(self, t: float, s: np.ndarray) -> np.ndarray:
        ext = np.empty(N_EXT, dtype=np.complex128)
        _fill_ext(float(t), np.asarray(s, dtype=np.complex128), self.tone_cav,
                  self.tone_amp, self.tone_freq, ext)
        L = np.empty((8, 8), dtype=np.complex128)
        _regression_matrix(ext, *self.regression, L)
        return L

    def drive_field(self, t: float) -> np.ndarray:
        """Drive terms ``F_c(t), F_t(t)`` entering the optical mean equations."""
        out = np.zeros(2, dtype=complex)
        for c, a, w in zip(self.tone_cav, self.tone_amp, self.tone_freq):
            out[c] += a * np.exp(1j * w * t)
        return out


def build_moment_ode(params: SystemParams, drive: DriveConfig) -> MomentOde:
    diags = errors(validate(params, drive))
    if diags:
        raise ValidationError(diags)
    subs = _subs(params, drive)
    terms = _compile(symbolic_system(), subs, _factor_index)
    regression = _compile_regression(subs)
    cav = np.array([0 if t.cavity == "controller" else 1 for t in drive.tones], dtype=np.int64)
    amp = np.array([t.amplitude for t in drive.tones], dtype=np.complex128)
    freq = np.array([float(drive.frame_detuning - t.detuning) * params.Omega0
                     for t in drive.tones], dtype=np.float64)
    return MomentOde(params, drive, terms, regression, cav, amp, freq,
                     drive.period(params.Omega0))


def vacuum_state() -> CumulantState:
    return CumulantState(0.0, np.zeros(4, complex), np.zeros((4, 4), complex),
                         np.zeros((4, 4), complex))


def rhs_eval(ode: MomentOde, state: CumulantState, t: float | None = None) -> CumulantState:
    """Derivative of ``state`` as a CumulantState (full matrices, no symmetrisation)."""
    t = state.t if t is None else t
    return CumulantState.from_symbols(t, ode.symbol_rhs(t, state.symbols()))
