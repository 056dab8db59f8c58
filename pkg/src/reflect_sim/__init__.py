"""Reflecting SDE simulation: domains, Skorohod maps, Wong-Zakai and Euler schemes, local-time bounds."""
from .bounds import BoundInputs, G, G_convex_limit, local_time_bound_AB, local_time_bound_convex
from .coefficients import Coefficients, stratonovich_correction
from .errors import (ConfigurationError, DimensionMismatchError, NotOnBoundaryError, ReflectSimError,
                     SubstepTooCoarseError, UnsupportedOperationError)
from .geometry import (Ball, BallComplement, Box, ConvexPolytope, HalfSpace, TruncatedDomain,
                       certify_condition_A, certify_condition_B, contains, normal_cone, project,
                       pushback, truncate)
from .harness import (StudyConfig, bound_validation_study, fit_loglog_slope, moment_growth_study,
                      strong_error_study)
from .paths import SampledPath, TimeGrid, refine_brownian, sample_brownian, wong_zakai_interpolant
from .sde import solve_euler, solve_reference, solve_wong_zakai
from .skorokhod import solve_discrete, solve_halfline, verify

__version__ = "0.1.0"
