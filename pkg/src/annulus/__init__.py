"""Positive radial solutions of semilinear equations on annuli and exterior domains."""

from .errors import (AnnulusError, BracketError, DataError, DomainError, ResolutionError,
                     StateError, StructureError, WindowError)
from .nonlinearity import (NonlinearitySpec, check_conditions, landmarks, linear, parse_spec,
                           power_diff, power_sum, pure_power)
from .radial_ode import IntegratorControls, RadialProblem, SolutionProfile, Termination, integrate
from .shooting import ContinuumFlag, count_solutions, solve_annulus, solve_exterior
from .functionals import compare_pair, derivative_identity_check, eval_functionals, invert_branches
from .regions import P_lower, P_upper, classify, classify_minus, classify_plus, region_boundary_csv

__version__ = "0.1.0"
