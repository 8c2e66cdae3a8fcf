"""Limit values of long-run average optimal control problems."""

from .kernels import BACKEND
from .problem import ControlProblem, ProblemError, load_problem, normalize_cost, validate_hypotheses

__version__ = "0.1.0"

__all__ = ["BACKEND", "ControlProblem", "ProblemError", "load_problem", "normalize_cost",
           "validate_hypotheses", "__version__"]
