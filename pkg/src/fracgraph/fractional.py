"""Riemann-Liouville and Caputo operators on uniform grids.

Integrals use product integration of the piecewise-linear interpolant
against the exact kernel moments (the fractional trapezoidal rule), so
they are exact for piecewise-linear data and second order for smooth data.
Derivatives are differences of those integrals; endpoint nodes use one-sided
differences and carry no accuracy guarantee.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

GAMMA_MAX = 171.0


class DomainError(ValueError):
    pass


def gamma_fn(z: float) -> float:
    """Gamma function for 0 < z <= 171 (beyond that it overflows a double)."""
    z = float(z)
    if not 0.0 < z <= GAMMA_MAX:
        raise DomainError(f"gamma_fn defined on (0, {GAMMA_MAX}], got {z!r}")
    return math.gamma(z)


def gamma_ratio(a: float, b: float) -> float:
    """Gamma(a) / Gamma(b) without overflow for large arguments."""
    if a <= 0 or b <= 0:
        raise DomainError("gamma_ratio needs positive arguments")
    return math.exp(math.lgamma(a) - math.lgamma(b))


@dataclass(frozen=True)
class UniformGrid:
    length: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("a grid needs at least 2 cells")
        if not self.length > 0:
            raise ValueError("grid length must be positive")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n + 1)


@dataclass(frozen=True)
class GridFunction:
    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n + 1,):
            raise ValueError(f"expected {self.grid.n + 1} nodal values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def sample(cls, grid: UniformGrid, f) -> "GridFunction":
        return cls(grid, np.asarray(f(grid.nodes), dtype=float) * np.ones(grid.n + 1))

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    def reversed(self) -> "GridFunction":
        return GridFunction(self.grid, self.values[::-1].copy())

    def trapezoid(self) -> float:
        return float(np.trapezoid(self.values, dx=self.grid.h))

    def l2_norm(self) -> float:
        return math.sqrt(GridFunction(self.grid, self.values ** 2).trapezoid())


def _check_order(alpha: float, lo: float = 0.0, hi: float = 1.0, closed_hi: bool = True):
    ok = lo < alpha <= hi if closed_hi else lo < alpha < hi
    if not ok:
        raise DomainError(f"fractional order {alpha!r} outside ({lo}, {hi}{']' if closed_hi else ')'}")


def _product_weights(n: int, alpha: float) -> Tuple[np.ndarray, np.ndarray]:
    """Weights of the fractional trapezoidal rule, up to the factor h^a / Gamma(a+2).

    Returns (c, a0): c[k] multiplies y[j] with k = i - j for j >= 1, and
    a0[i] multiplies y[0] at node i.
    """
    k = np.arange(n + 1, dtype=float)
    p = alpha + 1.0
    c = np.empty(n + 1)
    c[0] = 1.0
    c[1:] = (k[1:] + 1.0) ** p - 2.0 * k[1:] ** p + (k[1:] - 1.0) ** p
    a0 = np.zeros(n + 1)
    a0[1:] = (k[1:] - 1.0) ** p - (k[1:] - alpha - 1.0) * k[1:] ** alpha
    return c, a0


def frac_integral_left(y: GridFunction, alpha: float) -> GridFunction:
    """Nodal values of I^alpha_{0,x} y."""
    _check_order(alpha)
    n, h = y.grid.n, y.grid.h
    c, a0 = _product_weights(n, alpha)
    out = np.zeros(n + 1)
    out[1:] = np.convolve(y.values[1:], c)[:n]
    out += a0 * y.values[0]
    out *= h ** alpha / math.gamma(alpha + 2.0)
    out[0] = 0.0
    return GridFunction(y.grid, out)


def frac_integral_right(y: GridFunction, alpha: float) -> GridFunction:
    """Nodal values of I^alpha_{x,l} y (mirror of the left integral)."""
    return frac_integral_left(y.reversed(), alpha).reversed()


def _difference(v: np.ndarray, h: float) -> np.ndarray:
    d = np.empty_like(v)
    d[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    d[0] = (v[1] - v[0]) / h
    d[-1] = (v[-1] - v[-2]) / h
    return d


def rl_derivative_left(y: GridFunction, beta: float) -> GridFunction:
    """D^beta_{0,x} y = d/dx I^{1-beta}_{0,x} y, by centred differences."""
    _check_order(beta, closed_hi=False)
    v = frac_integral_left(y, 1.0 - beta).values
    return GridFunction(y.grid, _difference(v, y.grid.h))


def rl_derivative_right(y: GridFunction, beta: float) -> GridFunction:
    """D^beta_{x,l} y = -d/dx I^{1-beta}_{x,l} y."""
    _check_order(beta, closed_hi=False)
    v = frac_integral_right(y, 1.0 - beta).values
    return GridFunction(y.grid, -_difference(v, y.grid.h))


def caputo_derivative_right(y: GridFunction, beta: float) -> GridFunction:
    """Right Caputo derivative -I^{1-beta}_{x,l}(y') with cellwise-constant slopes.

    Exact for piecewise-linear y.
    """
    _check_order(beta, closed_hi=False)
    n, h = y.grid.n, y.grid.h
    slopes = np.diff(y.values) / h
    a = 1.0 - beta
    # moment of cell k seen from node i: ((k+1-i)^a - (k-i)^a) h^a, depends on k - i
    m = np.arange(n + 1, dtype=float) ** a
    moments = np.diff(m)
    out = np.zeros(n + 1)
    # out[i] = sum_{k >= i} slopes[k] * moments[k - i]
    full = np.convolve(slopes[::-1], moments)
    out[:n] = full[:n][::-1]
    out *= -(h ** a) / math.gamma(2.0 - beta)
    return GridFunction(y.grid, out)


def ibp_residual(f: GridFunction, g: GridFunction, beta: float) -> float:
    """|int D^b f g - int f dC^b g - [g I^{1-b} f]_0^l|, all pieces discrete."""
    if f.grid != g.grid:
        raise ValueError("f and g must share a grid")
    if not np.any(f.values):
        return 0.0
    lhs = GridFunction(f.grid, rl_derivative_left(f, beta).values * g.values).trapezoid()
    rhs = GridFunction(f.grid, f.values * caputo_derivative_right(g, beta).values).trapezoid()
    i_f = frac_integral_left(f, 1.0 - beta).values
    boundary = g.values[-1] * i_f[-1] - g.values[0] * i_f[0]
    return abs(lhs - rhs - boundary)


@dataclass(frozen=True)
class Lemma3Auxiliary:
    n: int
    alpha: float
    length: float
    coefficient: float

    def __call__(self, x):
        return self.coefficient * np.asarray(x, dtype=float) ** self.n

    def l2_norm(self) -> float:
        """Closed form a_n l^(n + 1/2) / sqrt(2n + 1)."""
        return self.coefficient * self.length ** (self.n + 0.5) / math.sqrt(2 * self.n + 1)


def lemma3_auxiliary(n: int, alpha: float, length: float = 1.0) -> Lemma3Auxiliary:
    """z_n = a_n x^n normalized so that I^alpha_{0,x} z_n equals 1 at x = length."""
    if n < 1:
        raise DomainError("n must be a positive integer")
    _check_order(alpha)
    a_n = gamma_ratio(n + 1 + alpha, n + 1) / length ** (n + alpha)
    return Lemma3Auxiliary(int(n), float(alpha), float(length), a_n)


def power_integral(m: float, alpha: float, x):
    """Exact I^alpha_{0,x} x^m = Gamma(m+1)/Gamma(m+1+alpha) x^(m+alpha)."""
    return gamma_ratio(m + 1.0, m + 1.0 + alpha) * np.asarray(x, dtype=float) ** (m + alpha)


def power_derivative(m: float, beta: float, x):
    """Exact D^beta_{0,x} x^m = Gamma(m+1)/Gamma(m+1-beta) x^(m-beta)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return gamma_ratio(m + 1.0, m + 1.0 - beta) * x ** (m - beta)
