from functools import lru_cache

import numpy as np

from fracgraph.assembly import Discretization
from fracgraph.eigen import solve_generalized
from fracgraph.graph import interval_graph, path_graph, star_graph

GRAPHS = {
    "interval": lambda: interval_graph(1.0),
    "path2": lambda: path_graph([1.0, 1.0]),
    "star3": lambda: star_graph([1.0, 1.0, 1.0]),
}


@lru_cache(maxsize=None)
def discretization(graph: str, beta: float, n: int) -> Discretization:
    return Discretization.uniform(GRAPHS[graph](), beta, n)


@lru_cache(maxsize=None)
def matrices(graph: str, beta: float, n: int):
    d = discretization(graph, beta, n)
    k, m = d.stiffness(), d.mass()
    k.setflags(write=False)
    m.setflags(write=False)
    return k, m


@lru_cache(maxsize=None)
def spectrum(graph: str, beta: float, n: int, k: int = 10):
    km, mm = matrices(graph, beta, n)
    return solve_generalized(km, mm, min(k, km.shape[0]))


def classical_pair(n: int, h: float):
    """P1 stiffness and mass for -v'' on n cells with both ends eliminated."""
    main, off = np.full(n - 1, 2.0), np.full(n - 2, -1.0)
    k = (np.diag(main) + np.diag(off, 1) + np.diag(off, -1)) / h
    m = (np.diag(np.full(n - 1, 4.0)) + np.diag(np.ones(n - 2), 1) + np.diag(np.ones(n - 2), -1)) * h / 6
    return k, m
