"""Gauss rules on [0, 1] and geometric grading for endpoint singularities."""
from __future__ import annotations

from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.special import roots_jacobi

GAUSS_ORDER = 16
GRADING_RATIO = 0.5
GRADING_FLOOR = 1e-12


@lru_cache(maxsize=None)
def gauss_legendre01(order: int = GAUSS_ORDER) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_jacobi01(exponent: float, order: int = GAUSS_ORDER) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for int_0^1 t**exponent g(t) dt (exponent > -1)."""
    x, w = roots_jacobi(order, 0.0, exponent)
    return 0.5 * (x + 1.0), w * 0.5 ** (exponent + 1.0)


@lru_cache(maxsize=None)
def graded_rule01(
    order: int = GAUSS_ORDER, ratio: float = GRADING_RATIO, floor: float = GRADING_FLOOR
) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre on [0, 1] with geometric pieces shrinking toward 0.

    Pieces are [r^(j+1), r^j] down to width ``floor``; the innermost piece
    [0, r^J] gets a plain rule of its own.
    """
    gx, gw = gauss_legendre01(order)
    edges = [1.0]
    while edges[-1] > floor:
        edges.append(edges[-1] * ratio)
    edges.append(0.0)
    edges = np.array(edges[::-1])
    a, b = edges[:-1], edges[1:]
    width = (b - a)[:, None]
    nodes = a[:, None] + width * gx[None, :]
    weights = width * gw[None, :]
    return nodes.ravel(), weights.ravel()


def graded_integral(f, a: float, b: float, order: int = GAUSS_ORDER) -> float:
    """Integrate ``f`` (vectorized) over [a, b] with grading toward ``a``."""
    t, w = graded_rule01(order)
    return float((b - a) * np.dot(w, f(a + (b - a) * t)))
