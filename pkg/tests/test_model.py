from fractions import Fraction
import math

import pytest
from hypothesis import given, strategies as st

from omsim.model import (DriveConfig, DriveTone, SystemParams, ansatz_drive, cooperativity,
                         drive_from_dict, errors, params_from_dict, preset, preset_names,
                         validate)

BASE = SystemParams()


def test_default_params_are_clean():
    assert validate(BASE, preset("fig2_blue").drive) == []


def test_negative_kappa_is_an_error():
    diags = validate(BASE.with_updates(kappa=-0.1), preset("fig2_blue").drive)
    assert [d.level for d in diags] == ["error"]
    assert "negative damping rate" in diags[0].message


def test_negative_coupling_is_an_error():
    diags = validate(BASE.with_updates(K=-1e-4), preset("fig2_blue").drive)
    assert errors(diags)


def test_unresolved_sideband_warning():
    diags = validate(BASE.with_updates(kappa=2.0), preset("fig2_blue").drive)
    assert not errors(diags)
    assert any(d.message == "sideband-resolved regime violated (κ ≥ Ω0)" for d in diags)


def test_weak_coupling_warning():
    diags = validate(BASE.with_updates(g0=0.1), preset("fig2_blue").drive)
    assert any("g0" in d.message for d in diags if d.level == "warning")


def test_detuning_denominator_limit():
    drive = DriveConfig((DriveTone("target", 1.0, Fraction(1, 17)),))
    assert any(d.code == "detuning_denominator" for d in validate(BASE, drive))
    drive = DriveConfig((DriveTone("target", 1.0, Fraction(1, 16)),))
    assert validate(BASE, drive) == []


def test_duplicate_tone_rejected():
    drive = DriveConfig((DriveTone("target", 1.0, 1), DriveTone("target", 2.0, 1)))
    assert any(d.code == "duplicate_tone" for d in validate(BASE, drive))


def test_cooperativity_values():
    C, Cm = cooperativity(BASE, 0.0)
    assert C == pytest.approx(2.1313598519888993e-3, rel=1e-12)
    assert Cm == 0.0
    assert cooperativity(BASE.with_updates(g0=0.0), 5.0) == (0.0, 0.0)


def test_cooperativity_zero_damping():
    with pytest.raises(ZeroDivisionError):
        cooperativity(BASE.with_updates(gamma=0.0))


@given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0), st.floats(0, 1e-2), st.floats(0, 1e3))
def test_cooperativity_formula(kappa, gamma, g0, n):
    C, Cm = cooperativity(SystemParams(g0=g0, kappa=kappa, gamma=gamma), n)
    assert math.isclose(C, 4 * g0**2 / (gamma * kappa), rel_tol=1e-12)
    assert math.isclose(Cm, n * C, rel_tol=1e-12, abs_tol=1e-300)


def test_catalog_contents():
    assert preset_names() == ["fig2_red", "fig2_green", "fig2_orange", "fig2_blue",
                              "fig2b_black", "fig3_orange", "fig3_purple", "fig3_green",
                              "fig3_red", "fig3_blue", "fig3_yellow"]
    red = preset("fig2_red")
    assert red.params.K == 0.0
    assert [(t.cavity, t.detuning, t.amplitude) for t in red.drive.tones] == [("target", 1, 1.0)]
    green = preset("fig2_green")
    assert green.drive.amplitude("controller", 1) == 4.0
    assert green.drive.amplitude("target", 1) == 1.0
    blue = preset("fig2_blue")
    assert {(t.cavity, t.detuning) for t in blue.drive.tones} == {
        ("controller", 0), ("controller", 1), ("target", 1)}
    for name in preset_names():
        p = preset(name)
        assert validate(p.params, p.drive) == []


def test_unknown_preset_lists_catalog():
    with pytest.raises(KeyError, match="fig2_blue"):
        preset("fig9")


def test_periods():
    assert preset("fig2_blue").drive.period() == pytest.approx(2 * math.pi)
    assert preset("fig2_red").drive.period() == pytest.approx(2 * math.pi)
    assert preset("fig3_yellow").drive.period() == pytest.approx(4 * math.pi)
    assert preset("fig3_red").drive.period() == pytest.approx(2 * math.pi)
    assert DriveConfig((DriveTone("target", 1.0, -1),)).period() == pytest.approx(math.pi)
    assert DriveConfig(()).period() == pytest.approx(2 * math.pi)
    assert ansatz_drive(frame_detuning=0).period() == pytest.approx(2 * math.pi)


@given(st.integers(-8, 8), st.integers(1, 16))
def test_period_is_common_to_all_tones(num, den):
    drive = DriveConfig((DriveTone("target", 1.0, 1), DriveTone("controller", 1.0, Fraction(num, den))))
    P = drive.period()
    for off in drive.frame_offsets():
        k = float(off) * P / (2 * math.pi)
        assert abs(k - round(k)) < 1e-9


def test_dict_round_trip():
    p = params_from_dict({"kappa": 0.3, "K": 1e-4})
    assert p.kappa == 0.3 and p.K == 1e-4 and p.g0 == BASE.g0
    d = drive_from_dict({"frame_detuning": "1", "tones": [
        {"cavity": "target", "amplitude": [1.0, 0.5], "detuning": "1/2"}]})
    assert d.tones[0].amplitude == complex(1.0, 0.5)
    assert d.tones[0].detuning == Fraction(1, 2)
    with pytest.raises(ValueError):
        params_from_dict({"kapa": 0.3})
