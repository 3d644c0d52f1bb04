"""Fractional Sturm-Liouville eigenproblems on metric graphs.

Galerkin solver in the substituted variable v = I^{1-beta} u, a Nystrom
oracle for the single interval, and checks for the accompanying estimates.
"""
from .assembly import CoefficientField, Discretization, PiecewiseConstant
from .eigen import SpectralResult, solve_generalized
from .graph import MetricGraph, interval_graph, path_graph, star_graph

__all__ = [
    "CoefficientField",
    "Discretization",
    "MetricGraph",
    "PiecewiseConstant",
    "SpectralResult",
    "interval_graph",
    "path_graph",
    "solve_generalized",
    "star_graph",
]
