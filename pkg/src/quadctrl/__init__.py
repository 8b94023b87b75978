"""Controllability and pulse design for quadratic bosonic Hamiltonians."""

__version__ = "0.1.0"

from .controllability import KalmanReport, NormalModeReport, analyze, chain_criterion, normal_mode_analysis
from .dynamics import Trajectory, evaluate_cost, propagate
from .errors import InvalidInputError, NotControllableError, NumericalFailure, QuadCtrlError, TruncationError
from .lqr import LQRProblem, solve_bvp, weight_sweep
from .model import Basis, LinearControlSystem, QuadraticHamiltonian, build_generator, mode_system
from .pulse import ControlPulse
from .synthesis import min_effort_pulse, polynomial_bump, synthesize_pulse

__all__ = [
    "Basis", "ControlPulse", "InvalidInputError", "KalmanReport", "LQRProblem", "LinearControlSystem",
    "NormalModeReport", "NotControllableError", "NumericalFailure", "QuadCtrlError", "QuadraticHamiltonian",
    "Trajectory", "TruncationError", "analyze", "build_generator", "chain_criterion", "evaluate_cost",
    "min_effort_pulse", "mode_system", "normal_mode_analysis", "polynomial_bump", "propagate", "solve_bvp",
    "synthesize_pulse", "weight_sweep",
]
