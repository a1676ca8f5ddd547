import warnings

import pytest

from omsim.cumulant import build_moment_ode, vacuum_state
from omsim.dynamics import detect_steady
from omsim.model import preset
from omsim.spectrum import compute_spectrum, default_grid, find_peaks_eta, propagate_two_time

ACCEPTANCE_LINES = []


class PresetRun:
    def __init__(self, name, frame=None):
        p = preset(name)
        drive = p.drive if frame is None else p.drive.with_frame(frame)
        self.name = name
        self.params = p.params
        self.drive = drive
        self.ode = build_moment_ode(p.params, drive)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            self.steady = detect_steady(self.ode, vacuum_state())
            self.corr = propagate_two_time(self.ode, self.steady)
            # same lab grid whatever the frame, so spectra compare pointwise
            self.spectrum = compute_spectrum(self.corr, drive, default_grid(p.drive, p.params))
        self.peaks = find_peaks_eta(self.spectrum)


_CACHE = {}


@pytest.fixture(scope="session")
def preset_run():
    def get(name, frame=None):
        key = (name, frame)
        if key not in _CACHE:
            _CACHE[key] = PresetRun(name, frame)
        return _CACHE[key]
    return get


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
