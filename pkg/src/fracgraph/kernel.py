"""Single-interval right inverse T, its kernel, Nystrom spectrum and trace.

For L0 u = dC^beta_{x,l}(p D^beta_{0,x} u) on (0, l) with
I^{1-beta}u(0) = I^{1-beta}u(l) = 0, the right inverse is the integral
operator with kernel K = K1 + K2:

    K1(x, s) = int_0^min(x,s) (x-t)^(beta-1) (s-t)^(beta-1) / (Gamma(beta)^2 p(t)) dt
    K2(x, s) = -I^beta(1/p)(x) I^beta(1/p)(s) / D

The default ("derived") D is int_0^l dt/p(t), which is what makes T f
satisfy the boundary condition at x = l.  ``denominator="paper"`` uses
I^beta(1/p) evaluated at l instead; the two agree only at beta = 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from .assembly import PiecewiseConstant, _as_piecewise
from .fractional import GridFunction, UniformGrid
from .quadrature import gauss_jacobi01, gauss_legendre01, graded_rule01

DENOMINATORS = ("derived", "paper")
_PIECE_RATIO = 4.0
_MAX_PIECES = 60


class KernelDomainError(ValueError):
    pass


@dataclass(frozen=True)
class IntervalProblem:
    length: float
    beta: float
    p: PiecewiseConstant = PiecewiseConstant.constant(1.0)
    r: PiecewiseConstant = PiecewiseConstant.constant(1.0)

    def __post_init__(self):
        object.__setattr__(self, "p", _as_piecewise(self.p))
        object.__setattr__(self, "r", _as_piecewise(self.r))
        if not self.length > 0:
            raise ValueError("interval length must be positive")
        if not 0.5 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (1/2, 1], got {self.beta!r}")


def pair_power_integral(tau, d, beta: float) -> np.ndarray:
    """H(tau, d) = int_0^tau s^(beta-1) (s + d)^(beta-1) ds, elementwise.

    Gauss-Jacobi on [0, min(tau, d)] absorbs the s^(beta-1) endpoint; beyond d
    the integrand is analytic on geometric pieces [d 4^j, d 4^(j+1)].
    """
    tau, d = np.broadcast_arrays(np.asarray(tau, dtype=float), np.asarray(d, dtype=float))
    out = np.zeros(tau.shape)
    pos = tau > 0
    diag = pos & (d <= 0)
    out[diag] = tau[diag] ** (2 * beta - 1) / (2 * beta - 1)
    off = pos & (d > 0)
    if not np.any(off):
        return out
    t, dd = tau[off], d[off]
    jx, jw = gauss_jacobi01(beta - 1.0)
    a = np.minimum(t, dd)
    acc = a ** beta * ((a[:, None] * jx[None, :] + dd[:, None]) ** (beta - 1.0) @ jw)
    gx, gw = gauss_legendre01()
    lo = dd.copy()
    for _ in range(_MAX_PIECES):
        active = lo < t
        if not np.any(active):
            break
        a0 = lo[active]
        b0 = np.minimum(a0 * _PIECE_RATIO, t[active])
        s = a0[:, None] + (b0 - a0)[:, None] * gx[None, :]
        f = s ** (beta - 1.0) * (s + dd[active][:, None]) ** (beta - 1.0)
        acc[active] += (b0 - a0) * (f @ gw)
        lo[active] = b0
    out[off] = acc
    return out


class IntervalKernel:
    """Evaluator for K = K1 + K2 of one interval problem."""

    def __init__(self, problem: IntervalProblem, denominator: str = "derived"):
        if denominator not in DENOMINATORS:
            raise ValueError(f"denominator must be one of {DENOMINATORS}")
        self.problem = problem
        self.denominator_kind = denominator
        self.pieces = problem.p.pieces(problem.length)
        self.beta = problem.beta
        if denominator == "derived":
            self.denominator = sum((b - a) / v for a, b, v in self.pieces)
        else:
            self.denominator = float(self.i_beta_inv_p(problem.length))

    @property
    def length(self) -> float:
        return self.problem.length

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(x > self.length):
            raise KernelDomainError(f"coordinates must lie in [0, {self.length}]")
        return x

    def i_beta_inv_p(self, x) -> np.ndarray:
        """I^beta_{0,x}(1/p) in closed form."""
        x = np.asarray(x, dtype=float)
        b = self.beta
        out = np.zeros(x.shape)
        for lo, hi, val in self.pieces:
            out += (np.maximum(x - lo, 0.0) ** b - np.maximum(x - hi, 0.0) ** b) / val
        return out / math.gamma(b + 1.0)

    def k1(self, x, s) -> np.ndarray:
        x, s = np.broadcast_arrays(self._check(x), self._check(s))
        m = np.minimum(x, s)
        d = np.abs(x - s)
        out = np.zeros(m.shape)
        for lo, hi, val in self.pieces:
            live = m > lo
            if not np.any(live):
                continue
            mm, dd = m[live], d[live]
            upper = pair_power_integral(mm - lo, dd, self.beta)
            lower = pair_power_integral(np.maximum(mm - hi, 0.0), dd, self.beta)
            out[live] += (upper - lower) / val
        return out / math.gamma(self.beta) ** 2

    def k2(self, x, s) -> np.ndarray:
        x, s = np.broadcast_arrays(self._check(x), self._check(s))
        return -self.i_beta_inv_p(x) * self.i_beta_inv_p(s) / self.denominator

    def __call__(self, x, s) -> np.ndarray:
        return self.k1(x, s) + self.k2(x, s)

    def diagonal(self, x) -> np.ndarray:
        return self(x, x)

    def potential_kernel(self, x, s) -> np.ndarray:
        """I^{1-beta} applied to K in its first argument, in closed form."""
        x, s = np.broadcast_arrays(self._check(x), self._check(s))
        b = self.beta
        c = np.minimum(x, s)
        first = np.zeros(c.shape)
        inv_p_int = np.zeros(c.shape)
        for lo, hi, val in self.pieces:
            top = np.minimum(hi, c)
            live = top > lo
            first[live] += ((s[live] - lo) ** b - (s[live] - top[live]) ** b) / val
            xtop = np.clip(x, lo, hi)
            inv_p_int += (xtop - lo) / val
        first /= math.gamma(b + 1.0)
        return first - inv_p_int * self.i_beta_inv_p(s) / self.denominator


def kernel_eval(kernel: IntervalKernel, x, s) -> np.ndarray:
    return kernel(x, s)


def _panels(kernel: IntervalKernel, x: float) -> List[float]:
    cuts = {0.0, kernel.length, float(x)}
    cuts.update(b for _, b, _ in kernel.pieces[:-1])
    cuts.update(kernel.problem.r.breakpoints)
    return sorted(cuts)


def _as_callable(f, length: float) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f, GridFunction):
        nodes, values = f.x, f.values
        return lambda s: np.interp(s, nodes, values)
    if callable(f):
        return lambda s: np.asarray(f(s), dtype=float) * np.ones_like(s)
    raise TypeError("f must be a GridFunction or a callable")


def _graded_both(a: float, b: float):
    """Graded rule on [a, b] refined toward both ends."""
    t, w = graded_rule01()
    half = 0.5 * (b - a)
    pts = np.concatenate([a + half * t, b - half * t])
    wts = np.concatenate([half * w, half * w])
    return pts, wts


def _integrate_against(kernel: IntervalKernel, kern, f, x: np.ndarray) -> np.ndarray:
    fc = _as_callable(f, kernel.length)
    out = np.zeros(len(x))
    for i, xi in enumerate(x):
        cuts = _panels(kernel, xi)
        pts, wts = [], []
        for a, b in zip(cuts, cuts[1:]):
            if b > a:
                p_, w_ = _graded_both(a, b)
                pts.append(p_), wts.append(w_)
        pts, wts = np.concatenate(pts), np.concatenate(wts)
        out[i] = np.dot(wts, kern(np.full_like(pts, xi), pts) * fc(pts))
    return out


def apply_T(kernel: IntervalKernel, f, grid: Optional[UniformGrid] = None) -> GridFunction:
    """(T f)(x_i) = int_0^l K(x_i, s) f(s) ds at the nodes of ``grid``.

    ``f`` is a callable or a GridFunction (then used through its linear
    interpolant and its own grid).  Panels are split at x_i and at the
    coefficient breakpoints and graded toward each panel end.
    """
    if grid is None:
        if not isinstance(f, GridFunction):
            raise ValueError("need a grid for a callable right-hand side")
        grid = f.grid
    return GridFunction(grid, _integrate_against(kernel, kernel, f, grid.nodes))


def apply_T_potential(kernel: IntervalKernel, f, x) -> np.ndarray:
    """I^{1-beta}_{0,x}(T f) at the points ``x``, via the transformed kernel."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return _integrate_against(kernel, kernel.potential_kernel, f, x)


def trapezoid_weights(n: int, length: float) -> np.ndarray:
    w = np.full(n + 1, length / n)
    w[0] = w[-1] = 0.5 * length / n
    return w


def nystrom_matrix(kernel: IntervalKernel, n: int, corrected: bool = True) -> np.ndarray:
    """Symmetric Nystrom matrix (WR)^1/2 K (WR)^1/2 for the trapezoid rule on n cells.

    W holds trapezoid weights and R = diag(r(x_j)), so the eigenvalues
    approximate 1/lambda_k of L0 u = lambda r u.  Panel ends coincide with
    the nodes, so the diagonal kink of K never falls inside a panel.  The
    plain rule is only first order in the |x - s|^(2 beta - 1) cusp, so with
    ``corrected`` the diagonal is replaced by singularity subtraction:
    c_i = int K(x_i, s) r(s) ds - sum_{j != i} w_j r_j K(x_i, x_j).
    """
    if n < 16:
        raise ValueError("Nystrom discretization needs n >= 16")
    x = np.linspace(0.0, kernel.length, n + 1)
    iu, ju = np.triu_indices(n + 1)
    vals = kernel(x[iu], x[ju])
    k_mat = np.zeros((n + 1, n + 1))
    k_mat[iu, ju] = vals
    k_mat[ju, iu] = vals
    w = trapezoid_weights(n, kernel.length) * kernel.problem.r(x)
    sw = np.sqrt(w)
    out = sw[:, None] * k_mat * sw[None, :]
    if corrected:
        np.fill_diagonal(k_mat, 0.0)
        row = _integrate_against(kernel, kernel, kernel.problem.r, x)
        np.fill_diagonal(out, row - k_mat @ w)
    return out


def nystrom_spectrum(
    kernel: IntervalKernel, n: int, count: Optional[int] = None, corrected: bool = True
) -> np.ndarray:
    """Eigenvalues of the Nystrom matrix, descending (they approximate 1/lambda_k)."""
    mu = np.linalg.eigvalsh(nystrom_matrix(kernel, n, corrected))[::-1]
    return mu if count is None else mu[:count]


def kernel_trace(kernel: IntervalKernel, order: int = 16) -> float:
    """int_0^l K(x, x) r(x) dx, graded toward the left end of every coefficient piece."""
    t, w = graded_rule01(order)
    cuts = sorted({0.0, kernel.length, *kernel.problem.p.breakpoints, *kernel.problem.r.breakpoints})
    total = 0.0
    for lo, hi in zip(cuts, cuts[1:]):
        pts = lo + (hi - lo) * t
        total += (hi - lo) * float(np.dot(w, kernel.diagonal(pts) * kernel.problem.r(pts)))
    return total


def trace_closed_form(length: float, beta: float) -> float:
    """Trace for p = 1 obtained by integrating the power-law diagonal."""
    g, g1 = math.gamma(beta), math.gamma(beta + 1.0)
    return length ** (2 * beta) * (
        1.0 / (2 * beta * (2 * beta - 1) * g ** 2) - 1.0 / ((2 * beta + 1) * g1 ** 2)
    )


@dataclass
class ReciprocalSumReport:
    trace: float
    partial_sums: np.ndarray
    gaps: np.ndarray
    increasing: bool
    bounded: bool
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.increasing and self.bounded

    def as_dict(self) -> Dict:
        return {
            "trace": self.trace,
            "partial_sums": self.partial_sums.tolist(),
            "gaps": self.gaps.tolist(),
            "increasing": self.increasing,
            "bounded": self.bounded,
            "tolerance": self.tolerance,
        }


def reciprocal_sum_check(eigenvalues, trace: float, tol: float = 1e-8) -> ReciprocalSumReport:
    lam = np.asarray(eigenvalues, dtype=float)
    if np.any(lam <= 0) or np.any(np.diff(lam) < 0):
        raise ValueError("eigenvalues must be positive and ascending")
    partial = np.cumsum(1.0 / lam)
    gaps = trace - partial
    slack = tol * abs(trace)
    return ReciprocalSumReport(
        float(trace), partial, gaps,
        bool(np.all(np.diff(partial) > 0)),
        bool(np.all(partial <= trace + slack)),
        slack,
    )
