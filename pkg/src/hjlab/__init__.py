"""Coordinate-level verification of the geometric Hamilton-Jacobi theory for field theories."""

from .expr import parse, evaluate, grad, second_partial
from .multisymplectic import BundleConfig, SemibasicForm, PrincipalFunctions
from .hj import Tolerances, Grid

__version__ = "0.1.0"

__all__ = [
    "parse", "evaluate", "grad", "second_partial",
    "BundleConfig", "SemibasicForm", "PrincipalFunctions",
    "Tolerances", "Grid",
]
