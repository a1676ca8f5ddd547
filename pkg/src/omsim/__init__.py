"""Two mechanically coupled optomechanical systems under multi-tone driving."""

from .analytic import (SidebandSolution, SweepGrid, bare_amplitudes, optimal_K,
                       stokes_closed_form, stokes_linear_solve, stokes_magnitude, sweep_gamma_K)
from .cumulant import CumulantState, MomentOde, build_moment_ode, rhs_eval, vacuum_state
from .dynamics import SteadyState, Trajectory, detect_steady, integrate, stroboscopic_component
from .errors import (ConvergenceError, IntegrationError, OmsimError, OmsimWarning,
                     SingularityError, ValidationError)
from .model import (Diagnostic, DriveConfig, DriveTone, ExperimentPreset, SystemParams,
                    cooperativity, preset, preset_names, validate)
from .spectrum import (PeakReport, Spectrum, TwoTimeCorrelation, compute_spectrum,
                       find_peaks_eta, propagate_two_time)

__version__ = "0.1.0"
