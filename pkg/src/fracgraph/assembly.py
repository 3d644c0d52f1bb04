"""Galerkin discretization of the fractional Sturm-Liouville weak form on a graph.

The unknown on each edge is v = I^{1-beta}_{0,x} u, discretized with
continuous piecewise-linear hats.  Then D^beta u = v' (so the stiffness
matrix is the classical P1 one) and u = D^{1-beta} v is known in closed
form per hat:

    u = v(0) x^(beta-1)/Gamma(beta) + sum_j s_j (x - x_j)_+^beta / Gamma(1+beta)

with s_0 the first slope and s_j the slope jumps.  The mass matrix
int r u_a u_b is nonlocal along each edge.  Vertex continuity of v and
Dirichlet elimination at boundary vertices are handled by the dof map; the
Kirchhoff flux condition is natural in the weak form and is not imposed.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .fractional import UniformGrid
from .graph import MetricGraph, validate
from .quadrature import GAUSS_ORDER, gauss_jacobi01, gauss_legendre01

THREADS_ENV = "FRACGRAPH_THREADS"


class CoefficientError(ValueError):
    pass


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class PiecewiseConstant:
    """Piecewise-constant function on [0, length]; ``values[i]`` holds on the i-th piece."""

    values: Tuple[float, ...]
    breakpoints: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        if len(self.values) != len(self.breakpoints) + 1:
            raise CoefficientError("need exactly one more value than breakpoints")
        if any(b1 <= b0 for b0, b1 in zip(self.breakpoints, self.breakpoints[1:])):
            raise CoefficientError("breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, value: float) -> "PiecewiseConstant":
        return cls((float(value),))

    def pieces(self, length: float) -> List[Tuple[float, float, float]]:
        cuts = [0.0, *self.breakpoints, float(length)]
        return [(a, b, v) for a, b, v in zip(cuts, cuts[1:], self.values)]

    def __call__(self, x):
        idx = np.searchsorted(np.asarray(self.breakpoints), np.asarray(x, dtype=float), side="right")
        return np.asarray(self.values)[idx]

    def at_end(self, end: str) -> float:
        return self.values[0] if end == "tail" else self.values[-1]

    def scaled(self, c: float) -> "PiecewiseConstant":
        return PiecewiseConstant(tuple(c * v for v in self.values), self.breakpoints)

    @property
    def lower(self) -> float:
        return min(self.values)

    @property
    def upper(self) -> float:
        return max(self.values)


Spec = Union[float, PiecewiseConstant]


def _as_piecewise(spec: Spec) -> PiecewiseConstant:
    return spec if isinstance(spec, PiecewiseConstant) else PiecewiseConstant.constant(spec)


@dataclass(frozen=True)
class CoefficientField:
    p: Mapping[int, PiecewiseConstant]
    r: Mapping[int, PiecewiseConstant]

    @classmethod
    def build(cls, graph: MetricGraph, p: Union[Spec, Mapping[int, Spec]] = 1.0,
              r: Union[Spec, Mapping[int, Spec]] = 1.0) -> "CoefficientField":
        def expand(spec):
            if isinstance(spec, Mapping):
                return {e.id: _as_piecewise(spec[e.id]) for e in graph.edges}
            return {e.id: _as_piecewise(spec) for e in graph.edges}

        field_ = cls(expand(p), expand(r))
        field_.check(graph)
        return field_

    def check(self, graph: MetricGraph) -> None:
        for e in graph.edges:
            for name, table in (("p", self.p), ("r", self.r)):
                if e.id not in table:
                    raise CoefficientError(f"edge {e.id}: no {name} coefficient")
                pc = table[e.id]
                if pc.breakpoints and not (0.0 < pc.breakpoints[0] and pc.breakpoints[-1] < e.length):
                    raise CoefficientError(f"edge {e.id}: {name} breakpoints outside (0, {e.length})")
                if not all(0.0 < v < math.inf for v in pc.values):
                    raise CoefficientError(f"edge {e.id}: {name} must be positive and finite")

    @property
    def a0(self) -> float:
        return min(pc.lower for pc in self.p.values())

    @property
    def a1(self) -> float:
        return max(pc.upper for pc in self.p.values())

    @property
    def R0(self) -> float:
        return min(pc.lower for pc in self.r.values())

    @property
    def R1(self) -> float:
        return max(pc.upper for pc in self.r.values())

    def with_r(self, r: Spec) -> "CoefficientField":
        return CoefficientField(self.p, {k: _as_piecewise(r) for k in self.r})

    def with_p(self, p: Spec) -> "CoefficientField":
        return CoefficientField({k: _as_piecewise(p) for k in self.p}, self.r)


@dataclass
class DofMap:
    """Node -> global dof tables; -1 marks an eliminated (Dirichlet) node."""

    edge_nodes: Dict[int, np.ndarray]
    vertex_dof: Dict[int, int]
    eliminated: List[Tuple[int, int]]
    shared: Dict[int, List[Tuple[int, int]]]
    n_dofs: int

    def edge_values(self, coeffs: np.ndarray, edge_id: int) -> np.ndarray:
        """Nodal v values on one edge (zeros at eliminated nodes)."""
        idx = self.edge_nodes[edge_id]
        out = np.zeros(len(idx))
        live = idx >= 0
        out[live] = coeffs[idx[live]]
        return out


def build_dof_map(graph: MetricGraph, grids: Mapping[int, UniformGrid]) -> DofMap:
    boundary = set(graph.boundary)
    vertex_dof: Dict[int, int] = {}
    edge_nodes: Dict[int, np.ndarray] = {}
    eliminated: List[Tuple[int, int]] = []
    shared: Dict[int, List[Tuple[int, int]]] = {}
    count = 0
    for e in graph.edges:
        n = grids[e.id].n
        table = np.empty(n + 1, dtype=int)
        for j in range(n + 1):
            vertex = e.tail if j == 0 else e.head if j == n else None
            if vertex is None:
                table[j] = count
                count += 1
            elif vertex in boundary:
                table[j] = -1
                eliminated.append((e.id, j))
            else:
                shared.setdefault(vertex, []).append((e.id, j))
                if vertex not in vertex_dof:
                    vertex_dof[vertex] = count
                    count += 1
                table[j] = vertex_dof[vertex]
        edge_nodes[e.id] = table
    return DofMap(edge_nodes, vertex_dof, eliminated, shared, count)


# --- per-edge building blocks -------------------------------------------------


def _psi(t: np.ndarray, beta: float) -> np.ndarray:
    """(t)_+^beta / Gamma(1 + beta)."""
    return np.where(t > 0, np.maximum(t, 0.0) ** beta, 0.0) / math.gamma(1.0 + beta)


def hat_fractional_values(grid: UniformGrid, beta: float, x: np.ndarray) -> np.ndarray:
    """D^{1-beta} of every nodal hat, evaluated at ``x``; shape (n+1,) + x.shape.

    Far from a hat's support the second difference of the ramp powers is
    formed with expm1/log1p to avoid cancellation.
    """
    n, h = grid.n, grid.h
    nodes = grid.nodes
    x = np.asarray(x, dtype=float)
    g1 = math.gamma(1.0 + beta)
    out = np.zeros((n + 1,) + x.shape)
    t = x[None, ...] - nodes[1:n, None].reshape((n - 1,) + (1,) * x.ndim)
    with np.errstate(divide="ignore", invalid="ignore"):
        far = t >= h
        tf = np.where(far, t, 2.0 * h)
        u = h / tf
        stable = tf ** beta * (np.expm1(beta * np.log1p(u)) + np.expm1(beta * np.log1p(-u))) / (h * g1)
        near = (_psi(t + h, beta) - 2.0 * _psi(t, beta) + _psi(t - h, beta)) / h
        out[1:n] = np.where(far, stable, near)

        xs = np.where(x > 0, x, 1.0)
        sing = np.where(x > 0, xs ** (beta - 1.0) / math.gamma(beta), np.inf)
        xf = np.where(x >= h, x, 2.0 * h)
        first_diff_far = -(xf ** beta) * np.expm1(beta * np.log1p(-h / xf)) / g1
        first_diff = np.where(x >= h, first_diff_far, _psi(x, beta) - _psi(x - h, beta))
        out[0] = sing - first_diff / h
    out[n] = _psi(x - nodes[n - 1], beta) / h
    return out


def _ramp_coefficients(n: int, h: float) -> np.ndarray:
    """C[k, j]: coefficient of the ramp (x - x_k)_+^beta in hat j, cells k = 0..n-1."""
    c = np.zeros((n, n + 1))
    k = np.arange(1, n)
    c[k, k - 1] = 1.0 / h
    c[k, k] = -2.0 / h
    c[k, k + 1] = 1.0 / h
    return c


def _subcells(grid: UniformGrid, coeff: PiecewiseConstant) -> List[Tuple[int, float, float, float]]:
    """(cell, a, b, value) pieces of each mesh cell split at coefficient breakpoints."""
    nodes = grid.nodes
    pieces = []
    bps = np.asarray(coeff.breakpoints)
    for k in range(grid.n):
        a, b = nodes[k], nodes[k + 1]
        inner = bps[(bps > a) & (bps < b)]
        cuts = [a, *inner.tolist(), b]
        for c0, c1 in zip(cuts, cuts[1:]):
            pieces.append((k, c0, c1, float(coeff(0.5 * (c0 + c1)))))
    return pieces


def _smooth_hat_values(grid: UniformGrid, beta: float, points: np.ndarray, cells: np.ndarray,
                       ramp_coef: np.ndarray) -> np.ndarray:
    """Hat values minus their singular ramp (x - x_k)^beta part on cell k."""
    vals = hat_fractional_values(grid, beta, points)
    psi_k = _psi(points - grid.nodes[cells][:, None], beta)
    vals -= ramp_coef[cells].T[:, :, None] * psi_k[None, :, :]
    return vals


def _cell0_monomials(beta: float, a: float, b: float) -> np.ndarray:
    """Gram matrix of (x^(beta-1)/Gamma(beta), x^beta/Gamma(1+beta)) over [a, b]."""
    gb, g1 = math.gamma(beta), math.gamma(1.0 + beta)

    def prim(p):
        return (b ** (p + 1.0) - a ** (p + 1.0)) / (p + 1.0)

    ss = prim(2.0 * beta - 2.0) / gb ** 2
    sr = prim(2.0 * beta - 1.0) / (gb * g1)
    rr = prim(2.0 * beta) / g1 ** 2
    return np.array([[ss, sr], [sr, rr]])


def edge_stiffness(grid: UniformGrid, p: PiecewiseConstant) -> np.ndarray:
    """Classical P1 stiffness int p phi_a' phi_b' on one edge, (n+1) x (n+1)."""
    n, h = grid.n, grid.h
    cell_p = np.zeros(n)
    for k, a, b, val in _subcells(grid, p):
        cell_p[k] += val * (b - a)
    k_mat = np.zeros((n + 1, n + 1))
    idx = np.arange(n)
    w = cell_p / h ** 2
    np.add.at(k_mat, (idx, idx), w)
    np.add.at(k_mat, (idx + 1, idx + 1), w)
    np.add.at(k_mat, (idx, idx + 1), -w)
    np.add.at(k_mat, (idx + 1, idx), -w)
    return k_mat


def edge_mass(grid: UniformGrid, r: PiecewiseConstant, beta: float,
              order: int = GAUSS_ORDER) -> np.ndarray:
    """Fractional mass int r D^{1-beta}phi_a D^{1-beta}phi_b on one edge, (n+1) x (n+1)."""
    n, h = grid.n, grid.h
    nodes = grid.nodes
    pieces = _subcells(grid, r)
    m_mat = np.zeros((n + 1, n + 1))

    # cell 0: only x^(beta-1) and x^beta are present, integrate exactly
    # hat 0 = S - R0/h, hat 1 = R0/h
    transfer = np.array([[1.0, 0.0], [-1.0 / h, 1.0 / h]])
    for k, a, b, val in pieces:
        if k == 0:
            m_mat[:2, :2] += val * transfer.T @ _cell0_monomials(beta, a, b) @ transfer

    rest = [pc for pc in pieces if pc[0] > 0]
    if not rest:
        return m_mat
    cells = np.array([pc[0] for pc in rest])
    lo = np.array([pc[1] for pc in rest])
    hi = np.array([pc[2] for pc in rest])
    vals = np.array([pc[3] for pc in rest])
    ramp = _ramp_coefficients(n, h)

    # smooth x smooth: plain Gauss-Legendre on every piece
    gx, gw = gauss_legendre01(order)
    pts = lo[:, None] + (hi - lo)[:, None] * gx[None, :]
    wts = (hi - lo)[:, None] * gw[None, :] * vals[:, None]
    hs = _smooth_hat_values(grid, beta, pts, cells, ramp).reshape(n + 1, -1)
    m_mat += (hs * wts.ravel()[None, :]) @ hs.T

    # ramp x smooth: Gauss-Jacobi with weight (x - x_k)^beta on [x_k, end]
    jx, jw = gauss_jacobi01(beta, order)
    seg_cells, seg_end, seg_sign = [], [], []
    for c, a, b, val in zip(cells, lo, hi, vals):
        seg_cells.append(c), seg_end.append(b), seg_sign.append(val)
        if a > nodes[c]:
            seg_cells.append(c), seg_end.append(a), seg_sign.append(-val)
    seg_cells = np.array(seg_cells)
    span = np.array(seg_end) - nodes[seg_cells]
    jpts = nodes[seg_cells][:, None] + span[:, None] * jx[None, :]
    jwts = (np.array(seg_sign) * span ** (beta + 1.0) / math.gamma(1.0 + beta))[:, None] * jw[None, :]
    hj = _smooth_hat_values(grid, beta, jpts, seg_cells, ramp)
    seg_moments = np.einsum("jsq,sq->sj", hj, jwts)
    cross = np.zeros((n, n + 1))
    np.add.at(cross, seg_cells, seg_moments)
    couple = ramp.T @ cross
    m_mat += couple + couple.T

    # ramp x ramp: exact power integral of (x - x_k)^(2 beta)
    p2 = 2.0 * beta + 1.0
    sq = vals * ((hi - nodes[cells]) ** p2 - (lo - nodes[cells]) ** p2) / (p2 * math.gamma(1.0 + beta) ** 2)
    psq = np.zeros(n)
    np.add.at(psq, cells, sq)
    m_mat += ramp.T @ (psq[:, None] * ramp)
    return 0.5 * (m_mat + m_mat.T)


def edge_load(grid: UniformGrid, beta: float, f: Callable[[np.ndarray], np.ndarray],
              order: int = GAUSS_ORDER) -> np.ndarray:
    """int f D^{1-beta}phi_j over one edge for every node j; f must be smooth on [0, l]."""
    n, h = grid.n, grid.h
    nodes = grid.nodes
    out = np.zeros(n + 1)
    gb, g1 = math.gamma(beta), math.gamma(1.0 + beta)
    # cell 0: weights x^(beta-1) and x^beta handled by Gauss-Jacobi
    for exponent, coefs in ((beta - 1.0, np.array([1.0 / gb, 0.0])),
                            (beta, np.array([-1.0 / (h * g1), 1.0 / (h * g1)]))):
        jx, jw = gauss_jacobi01(exponent, order)
        out[:2] += coefs * h ** (exponent + 1.0) * np.dot(jw, f(h * jx))
    if n == 1:
        return out
    cells = np.arange(1, n)
    ramp = _ramp_coefficients(n, h)
    gx, gw = gauss_legendre01(order)
    pts = nodes[cells][:, None] + h * gx[None, :]
    hs = _smooth_hat_values(grid, beta, pts, cells, ramp)
    out += np.einsum("jsq,sq->j", hs, h * gw[None, :] * f(pts))
    jx, jw = gauss_jacobi01(beta, order)
    jpts = nodes[cells][:, None] + h * jx[None, :]
    moments = h ** (beta + 1.0) / g1 * (f(jpts) @ jw)
    out += ramp[cells].T @ moments
    return out


# --- global assembly -----------------------------------------------------------


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _scatter(target: np.ndarray, local: np.ndarray, table: np.ndarray) -> None:
    live = np.flatnonzero(table >= 0)
    idx = table[live]
    np.add.at(target, (idx[:, None], idx[None, :]), local[np.ix_(live, live)])


@dataclass
class Discretization:
    """Graph problem plus per-edge grids and the resulting dof numbering."""

    graph: MetricGraph
    coeffs: CoefficientField
    beta: float
    grids: Dict[int, UniformGrid]
    dofs: DofMap = field(init=False)

    def __post_init__(self):
        report = validate(self.graph)
        if not report.ok:
            raise ValueError("; ".join(report.violations))
        if not 0.5 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (1/2, 1], got {self.beta!r}")
        self.coeffs.check(self.graph)
        self.dofs = build_dof_map(self.graph, self.grids)

    @classmethod
    def uniform(cls, graph: MetricGraph, beta: float, n: Union[int, Mapping[int, int]],
                coeffs: Optional[CoefficientField] = None) -> "Discretization":
        coeffs = coeffs or CoefficientField.build(graph)
        grids = {
            e.id: UniformGrid(e.length, n[e.id] if isinstance(n, Mapping) else int(n))
            for e in graph.edges
        }
        return cls(graph, coeffs, float(beta), grids)

    def _per_edge(self, fn) -> List[np.ndarray]:
        edges = list(self.graph.edges)
        workers = min(_threads(), len(edges))
        if workers <= 1:
            return [fn(e) for e in edges]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, edges))

    def _global(self, locals_: Sequence[np.ndarray]) -> np.ndarray:
        out = np.zeros((self.dofs.n_dofs, self.dofs.n_dofs))
        for e, local in zip(self.graph.edges, locals_):
            _scatter(out, local, self.dofs.edge_nodes[e.id])
        return out

    def stiffness(self) -> np.ndarray:
        return self._global(self._per_edge(lambda e: edge_stiffness(self.grids[e.id], self.coeffs.p[e.id])))

    def mass(self, r: Optional[Mapping[int, PiecewiseConstant]] = None) -> np.ndarray:
        r = r or self.coeffs.r
        mats = self._per_edge(lambda e: edge_mass(self.grids[e.id], r[e.id], self.beta))
        for e, m in zip(self.graph.edges, mats):
            if not np.all(np.isfinite(m)):
                bad = np.argwhere(~np.isfinite(m))[0]
                raise AssemblyError(f"edge {e.id}: non-finite mass entry at {tuple(bad)}")
        return self._global(mats)

    def load(self, f: Mapping[int, Callable] | Callable) -> np.ndarray:
        out = np.zeros(self.dofs.n_dofs)
        for e in self.graph.edges:
            fe = f[e.id] if isinstance(f, Mapping) else f
            local = edge_load(self.grids[e.id], self.beta, fe)
            table = self.dofs.edge_nodes[e.id]
            live = table >= 0
            np.add.at(out, table[live], local[live])
        return out

    def edge_values(self, coeffs: np.ndarray, edge_id: int) -> np.ndarray:
        return self.dofs.edge_values(coeffs, edge_id)


def assemble_stiffness(disc: Discretization) -> np.ndarray:
    return disc.stiffness()


def assemble_mass(disc: Discretization) -> np.ndarray:
    return disc.mass()
