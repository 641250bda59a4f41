"""Smoothing sequences, Ekeland schedules and duality certificates for
convex integral functionals on grids."""
from .approximation import *  # noqa: F401,F403
from .convex_core import *  # noqa: F401,F403
from .discrete_problem import *  # noqa: F401,F403
from .errors import *  # noqa: F401,F403
from .solver import *  # noqa: F401,F403
from .verification import *  # noqa: F401,F403
from . import approximation, convex_core, discrete_problem, errors, solver, verification

__version__ = "0.1.0"
