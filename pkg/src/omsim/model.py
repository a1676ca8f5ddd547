"""Physical parameters, drive tones and the figure presets.

All rates are expressed in units of the mechanical frequency ``Omega0``
(internally 1).  Drive detunings are rationals: a tone with detuning
``xi`` sits at the lab frequency ``omega0 + xi * Omega0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import reduce
from typing import Literal, Sequence

Cavity = Literal["controller", "target"]
CAVITIES: tuple[Cavity, ...] = ("controller", "target")

MAX_DENOMINATOR = 16


def as_detuning(value) -> Fraction:
    """Coerce ``value`` to a Fraction, keeping it exact when possible."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    frac = Fraction(value).limit_denominator(10**6)
    return frac


@dataclass(frozen=True)
class SystemParams:
    """Rates of the two identical-by-default optomechanical systems."""

    g0: float = 2.4e-4
    kappa: float = 0.23
    gamma: float = 4.7e-4
    K: float = 2.35e-4
    Omega0: float = 1.0
    omega0: float = 0.0
    Omega_c: float | None = None
    Omega_t: float | None = None

    def __post_init__(self):
        if self.Omega_c is None:
            object.__setattr__(self, "Omega_c", self.Omega0)
        if self.Omega_t is None:
            object.__setattr__(self, "Omega_t", self.Omega0)

    def mechanical_frequency(self, cavity: Cavity) -> float:
        return self.Omega_c if cavity == "controller" else self.Omega_t

    def with_updates(self, **changes) -> "SystemParams":
        # a rescaled Omega0 should not silently leave stale per-OMS frequencies
        if "Omega0" in changes:
            changes.setdefault("Omega_c", changes["Omega0"]
                               if self.Omega_c == self.Omega0 else self.Omega_c)
            changes.setdefault("Omega_t", changes["Omega0"]
                               if self.Omega_t == self.Omega0 else self.Omega_t)
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "Omega0": self.Omega0, "omega0": self.omega0, "g0": self.g0,
            "kappa": self.kappa, "gamma": self.gamma, "K": self.K,
            "Omega_c": self.Omega_c, "Omega_t": self.Omega_t,
        }


@dataclass(frozen=True)
class DriveTone:
    cavity: Cavity
    amplitude: complex
    detuning: Fraction

    def __post_init__(self):
        object.__setattr__(self, "detuning", as_detuning(self.detuning))
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    def to_dict(self) -> dict:
        amp = self.amplitude
        return {"cavity": self.cavity, "detuning": str(self.detuning),
                "amplitude": [amp.real, amp.imag]}


@dataclass(frozen=True)
class DriveConfig:
    tones: tuple[DriveTone, ...] = ()
    frame_detuning: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "tones", tuple(self.tones))
        object.__setattr__(self, "frame_detuning", as_detuning(self.frame_detuning))

    def tones_on(self, cavity: Cavity) -> tuple[DriveTone, ...]:
        return tuple(t for t in self.tones if t.cavity == cavity)

    def amplitude(self, cavity: Cavity, detuning) -> complex:
        """Amplitude of the tone at ``(cavity, detuning)``, zero if absent."""
        xi = as_detuning(detuning)
        for tone in self.tones:
            if tone.cavity == cavity and tone.detuning == xi:
                return tone.amplitude
        return 0j

    def frame_offsets(self) -> list[Fraction]:
        """Nonzero ``|xi_ref - xi|`` for every tone."""
        offs = {abs(self.frame_detuning - t.detuning) for t in self.tones}
        offs.discard(Fraction(0))
        return sorted(offs)

    def base_harmonic(self) -> Fraction:
        """Gcd of the frame offsets, in units of Omega0 (1 if the drive is static)."""
        offs = self.frame_offsets()
        if not offs:
            return Fraction(1)
        return reduce(_fraction_gcd, offs)

    def period(self, Omega0: float = 1.0) -> float:
        return 2.0 * math.pi / (Omega0 * float(self.base_harmonic()))

    def with_frame(self, frame_detuning) -> "DriveConfig":
        return replace(self, frame_detuning=as_detuning(frame_detuning))

    def to_dict(self) -> dict:
        return {"frame_detuning": str(self.frame_detuning),
                "tones": [t.to_dict() for t in self.tones]}


def _fraction_gcd(a: Fraction, b: Fraction) -> Fraction:
    den = a.denominator * b.denominator // math.gcd(a.denominator, b.denominator)
    return Fraction(math.gcd(int(a * den), int(b * den)), den)


@dataclass(frozen=True)
class Diagnostic:
    level: Literal["error", "warning"]
    code: str
    message: str

    def to_dict(self) -> dict:
        return {"level": self.level, "code": self.code, "message": self.message}


def validate(params: SystemParams, drive: DriveConfig) -> list[Diagnostic]:
    """Check hard invariants (errors) and the sideband-resolved regime (warnings)."""
    out: list[Diagnostic] = []
    for name in ("kappa", "gamma"):
        if getattr(params, name) < 0:
            out.append(Diagnostic("error", "negative_rate",
                                  f"negative damping rate: {name}={getattr(params, name)!r}"))
    for name in ("g0", "K"):
        if getattr(params, name) < 0:
            out.append(Diagnostic("error", "negative_rate",
                                  f"negative coupling rate: {name}={getattr(params, name)!r}"))
    for name in ("Omega0", "Omega_c", "Omega_t"):
        if not getattr(params, name) > 0:
            out.append(Diagnostic("error", "nonpositive_frequency",
                                  f"mechanical frequency must be positive: {name}"))
    values = [params.g0, params.kappa, params.gamma, params.K, params.Omega0]
    if not all(math.isfinite(v) for v in values):
        out.append(Diagnostic("error", "nonfinite", "parameters must be finite"))

    seen = set()
    for tone in drive.tones:
        if tone.cavity not in CAVITIES:
            out.append(Diagnostic("error", "bad_cavity", f"unknown cavity {tone.cavity!r}"))
        if tone.detuning.denominator > MAX_DENOMINATOR:
            out.append(Diagnostic(
                "error", "detuning_denominator",
                f"detuning {tone.detuning} has denominator > {MAX_DENOMINATOR}; "
                "the drive would have no finite fundamental period"))
        key = (tone.cavity, tone.detuning)
        if key in seen:
            out.append(Diagnostic("error", "duplicate_tone",
                                  f"more than one tone at {tone.cavity} detuning {tone.detuning}"))
        seen.add(key)
        if not math.isfinite(abs(tone.amplitude)):
            out.append(Diagnostic("error", "nonfinite", "drive amplitude must be finite"))
    if drive.frame_detuning.denominator > MAX_DENOMINATOR:
        out.append(Diagnostic("error", "detuning_denominator",
                              f"frame detuning {drive.frame_detuning} has denominator "
                              f"> {MAX_DENOMINATOR}"))

    if any(d.level == "error" for d in out):
        return out

    if params.kappa >= params.Omega0:
        out.append(Diagnostic("warning", "regime",
                              "sideband-resolved regime violated (κ ≥ Ω0)"))
    for name in ("g0", "gamma", "K"):
        # "much smaller" taken as at least a decade below kappa
        if getattr(params, name) > 0.1 * params.kappa:
            out.append(Diagnostic("warning", "regime",
                                  f"weak-coupling regime violated ({name} not ≪ κ)"))
    return out


def errors(diagnostics: Sequence[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diagnostics if d.level == "error"]


def cooperativity(params: SystemParams, n_cav: float = 0.0) -> tuple[float, float]:
    """Single-photon cooperativity ``4 g0^2 / (gamma kappa)`` and its multiphoton form."""
    if params.gamma <= 0 or params.kappa <= 0:
        raise ZeroDivisionError(
            f"cooperativity undefined for zero damping (gamma={params.gamma}, "
            f"kappa={params.kappa})")
    c = 4.0 * params.g0**2 / (params.gamma * params.kappa)
    return c, n_cav * c


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    params: SystemParams
    drive: DriveConfig
    notes: str = ""


def _tones(target: Sequence[tuple], controller: Sequence[tuple] = ()) -> tuple[DriveTone, ...]:
    out = [DriveTone("controller", amp, xi) for xi, amp in controller]
    out += [DriveTone("target", amp, xi) for xi, amp in target]
    return tuple(out)


_F = Fraction
DEFAULT_PARAMS = SystemParams()
_UNCOUPLED = replace(DEFAULT_PARAMS, K=0.0)

_CATALOG: dict[str, tuple[SystemParams, tuple[DriveTone, ...], str]] = {
    "fig2_red": (_UNCOUPLED, _tones([(1, 1.0)]),
                 "no mechanical coupling; blue-detuned target probe only"),
    "fig2_green": (DEFAULT_PARAMS, _tones([(1, 1.0)], [(1, 4.0)]),
                   "strong blue-detuned monotone controller input"),
    "fig2_orange": (DEFAULT_PARAMS, _tones([(1, 1.0)], [(0, 1.0)]),
                    "resonant monotone controller input"),
    "fig2_blue": (DEFAULT_PARAMS, _tones([(1, 1.0)], [(0, 1.0), (1, 1.0)]),
                  "two-tone controller input (resonant + blue)"),
    "fig2b_black": (_UNCOUPLED, _tones([(0, 1.0)]),
                    "resonant target probe, no mechanical coupling"),
    "fig3_orange": (DEFAULT_PARAMS, _tones([(2, 1.0)], [(0, 1.0), (1, 1.0)]),
                    "two-tone controller, doubly blue-detuned target"),
    "fig3_purple": (DEFAULT_PARAMS, _tones([(1, 1.0)], [(0, 1.0), (1, 1.0)]),
                    "identical to fig2_blue"),
    "fig3_green": (DEFAULT_PARAMS, _tones([(0, 1.0)], [(0, 1.0), (1, 1.0)]),
                   "two-tone controller, resonant target"),
    "fig3_red": (DEFAULT_PARAMS, _tones([(-1, 1.0)], [(0, 1.0), (1, 1.0)]),
                 "two-tone controller, red-detuned target"),
    "fig3_blue": (DEFAULT_PARAMS, _tones([(1, 1.0)], [(-1, 1.0), (1, 1.0)]),
                  "controller tones two mechanical quanta apart"),
    "fig3_yellow": (DEFAULT_PARAMS, _tones([(1, 1.0)], [(_F(-1, 2), 1.0), (_F(1, 2), 1.0)]),
                    "controller tones at half-integer detunings"),
}


def preset_names() -> list[str]:
    return list(_CATALOG)


def preset(name: str) -> ExperimentPreset:
    try:
        params, tones, notes = _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(_CATALOG)}") from None
    return ExperimentPreset(name, params, DriveConfig(tones), notes)


def ansatz_drive(E_c0: complex = 1.0, E_cp: complex = 1.0, E_tp: complex = 1.0,
                 frame_detuning=1) -> DriveConfig:
    """Drive with the (c:0, c:+1, t:+1) tones of the analytic sideband ansatz."""
    return DriveConfig(
        (DriveTone("controller", E_c0, 0), DriveTone("controller", E_cp, 1),
         DriveTone("target", E_tp, 1)),
        frame_detuning=frame_detuning)


def _reject_unknown(kind: str, keys, allowed):
    bad = sorted(set(keys) - set(allowed))
    if bad:
        raise ValueError(f"unknown {kind} field(s): {', '.join(bad)}")


def params_from_dict(data: dict, base: SystemParams | None = None) -> SystemParams:
    allowed = ("g0", "kappa", "gamma", "K", "Omega0", "omega0", "Omega_c", "Omega_t")
    _reject_unknown("parameter", data, allowed)
    base = base or SystemParams()
    return base.with_updates(**{k: float(v) for k, v in data.items()})


def drive_from_dict(data: dict) -> DriveConfig:
    _reject_unknown("drive", data, ("tones", "frame_detuning"))
    tones = []
    for item in data.get("tones", []):
        _reject_unknown("tone", item, ("cavity", "amplitude", "detuning"))
        amp = item.get("amplitude", 1.0)
        if isinstance(amp, (list, tuple)):
            amp = complex(amp[0], amp[1])
        tones.append(DriveTone(item["cavity"], amp, item["detuning"]))
    return DriveConfig(tuple(tones), data.get("frame_detuning", 1))
