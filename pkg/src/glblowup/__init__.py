"""Numerical laboratory for blowup in the complex Ginzburg-Landau family

    u_t = e^{i theta}[lap u + |u|^alpha u] + gamma u,

interpolating between the nonlinear heat equation (theta = 0) and the
nonlinear Schroedinger equation (theta = pi/2).
"""

from .field import FieldState, Grid, Params, make_grid, sample_profile
from .functionals import FunctionalReport, report
from .evolve import BlowupVerdict, Controls, Trajectory, run, run_to_blowup
from .groundstate import GroundState, find_ground_state
from .criteria import CriterionVerdict, evaluate_all
from .variance import CutoffFamily, build_cutoff
from ._validation import ValidationError

__version__ = "0.1.0"

__all__ = ["FieldState", "Grid", "Params", "make_grid", "sample_profile",
           "FunctionalReport", "report", "BlowupVerdict", "Controls", "Trajectory", "run",
           "run_to_blowup", "GroundState", "find_ground_state", "CriterionVerdict",
           "evaluate_all", "CutoffFamily", "build_cutoff", "ValidationError"]
