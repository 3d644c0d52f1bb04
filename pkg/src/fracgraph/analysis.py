"""A posteriori estimates and comparison checks on computed spectra.

Everything here is stated for v = I^{1-beta} u, the piecewise-linear
Galerkin unknown.  Sup norms of v are nodal maxima (exact for P1 data).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np
from scipy import linalg

from .assembly import CoefficientField, Discretization
from .eigen import SpectralResult, solve_generalized
from .graph import MetricGraph, disconnect, incidence_sign, total_length

BOUND_SLACK = 1e-10
INTERLACING_SLACK = 1e-6


class AnalysisError(ValueError):
    """Contract violation in an analysis routine."""


@dataclass
class EstimateReport:
    bounds: np.ndarray
    observed: np.ndarray
    constants: Dict[str, float]
    slack: float = BOUND_SLACK

    @property
    def margins(self) -> np.ndarray:
        return self.bounds - self.observed

    @property
    def passed(self) -> np.ndarray:
        return self.margins >= -self.slack * np.maximum(1.0, np.abs(self.bounds))

    @property
    def ok(self) -> bool:
        return bool(np.all(self.passed))

    def as_dict(self) -> Dict:
        return {
            "constants": {k: float(v) for k, v in self.constants.items()},
            "pairs": [
                {"k": i + 1, "bound": float(b), "observed": float(o), "margin": float(b - o), "pass": bool(p)}
                for i, (b, o, p) in enumerate(zip(self.bounds, self.observed, self.passed))
            ],
            "pass": self.ok,
        }


def _sup_v(result: SpectralResult, disc: Discretization) -> np.ndarray:
    if result.normalization != "r-weighted":
        raise AnalysisError(f"bound needs r-weighted eigenfunctions, got {result.normalization!r}")
    vecs = result.eigenvectors
    out = np.zeros(vecs.shape[1])
    for e in disc.graph.edges:
        idx = disc.dofs.edge_nodes[e.id]
        live = idx[idx >= 0]
        if live.size:
            out = np.maximum(out, np.max(np.abs(vecs[live, :]), axis=0))
    return out


def prop2_bound_check(result: SpectralResult, disc: Discretization) -> EstimateReport:
    """sup|v_k| <= sqrt(l) M_beta (1/sqrt(R0) + sqrt(lambda_k / a0)) on one interval."""
    if len(disc.graph.edges) != 1:
        raise AnalysisError("interval bound needs a single-edge graph")
    beta, length = disc.beta, disc.graph.edges[0].length
    c = disc.coeffs
    m_beta = 1.0 / (length ** beta * math.gamma(2.0 - beta)) + 1.0
    lam = np.asarray(result.eigenvalues)
    bounds = math.sqrt(length) * m_beta * (1.0 / math.sqrt(c.R0) + np.sqrt(lam / c.a0))
    return EstimateReport(bounds, _sup_v(result, disc),
                          {"M_beta": m_beta, "a0": c.a0, "R0": c.R0, "length": length})


def graph_constants(graph: MetricGraph, beta: float, coeffs: CoefficientField) -> Dict[str, float]:
    c1 = 1.0 / (math.gamma(2.0 - beta) * min(e.length ** beta for e in graph.edges)) + 1.0
    size = total_length(graph)
    c2 = math.sqrt(size) * c1
    c = c2 * max(1.0 / math.sqrt(coeffs.R0), 1.0 / math.sqrt(coeffs.a0))
    return {"C1": c1, "C2": c2, "C": c, "a0": coeffs.a0, "R0": coeffs.R0, "total_length": size}


def graph_bound_check(result: SpectralResult, disc: Discretization) -> EstimateReport:
    """sup over the graph of |v_k| <= C (1 + sqrt(lambda_k))."""
    consts = graph_constants(disc.graph, disc.beta, disc.coeffs)
    bounds = consts["C"] * (1.0 + np.sqrt(np.asarray(result.eigenvalues)))
    return EstimateReport(bounds, _sup_v(result, disc), consts)


@dataclass
class InterlacingReport:
    graph: np.ndarray
    disconnected: np.ndarray
    slack: float = INTERLACING_SLACK

    @property
    def margins(self) -> np.ndarray:
        """lambda_k(G) - lambda_k[G]; nonnegative means the displayed inequality holds."""
        return self.graph - self.disconnected

    def holds(self, direction: str = "stated") -> np.ndarray:
        tol = self.slack * np.abs(self.graph)
        if direction == "stated":
            return self.disconnected <= self.graph + tol
        if direction == "reverse":
            return self.graph <= self.disconnected + tol
        raise ValueError("direction must be 'stated' or 'reverse'")

    def as_dict(self) -> Dict:
        return {
            "graph": self.graph.tolist(),
            "disconnected": self.disconnected.tolist(),
            "margins": self.margins.tolist(),
            "stated_direction_holds": bool(np.all(self.holds("stated"))),
            "reverse_direction_holds": bool(np.all(self.holds("reverse"))),
        }


def _edge_discretization(disc: Discretization, sub: MetricGraph) -> Discretization:
    eid = sub.edges[0].id
    coeffs = CoefficientField({eid: disc.coeffs.p[eid]}, {eid: disc.coeffs.r[eid]})
    return Discretization(sub, coeffs, disc.beta, {eid: disc.grids[eid]})


def interlacing_check(disc: Discretization, k_max: int,
                      graph_result: Optional[SpectralResult] = None) -> InterlacingReport:
    """Graph spectrum against the merged all-Dirichlet single-edge spectra.

    Both directions are reported; neither is asserted here.
    """
    if graph_result is None or graph_result.k < k_max:
        graph_result = solve_generalized(disc.stiffness(), disc.mass(), min(k_max, disc.dofs.n_dofs))
    merged: List[float] = []
    for sub in disconnect(disc.graph):
        d = _edge_discretization(disc, sub)
        count = min(k_max, d.dofs.n_dofs)
        merged.extend(solve_generalized(d.stiffness(), d.mass(), count).eigenvalues)
    k = min(k_max, graph_result.k, len(merged))
    return InterlacingReport(np.asarray(graph_result.eigenvalues[:k]), np.sort(merged)[:k])


@dataclass
class PoincareReport:
    lhs: float
    rhs: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-300

    def as_dict(self) -> Dict:
        return {"int_v2": self.lhs, "bound": self.rhs, "pass": self.ok}


def poincare_check(graph: MetricGraph, values: Mapping[int, np.ndarray], atol: float = 1e-12) -> PoincareReport:
    """int v^2 <= |G|^2 int (v')^2 for continuous piecewise-linear v on uniform edge grids.

    ``values`` maps edge id to nodal values; cell integrals are exact.
    """
    at_vertex: Dict[int, List[float]] = {}
    lhs = rhs = 0.0
    for e in graph.edges:
        v = np.asarray(values[e.id], dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise AnalysisError(f"edge {e.id}: need at least two nodal values")
        h = e.length / (v.size - 1)
        a, b = v[:-1], v[1:]
        lhs += float(np.sum(h / 3.0 * (a * a + a * b + b * b)))
        rhs += float(np.sum((b - a) ** 2) / h)
        at_vertex.setdefault(e.tail, []).append(v[0])
        at_vertex.setdefault(e.head, []).append(v[-1])
    scale = max((abs(x) for vals in at_vertex.values() for x in vals), default=0.0)
    for vertex, vals in at_vertex.items():
        if max(vals) - min(vals) > atol * max(scale, 1.0):
            raise AnalysisError(f"v is discontinuous at vertex {vertex}")
    if not any(abs(at_vertex[b][0]) <= atol * max(scale, 1.0) for b in graph.boundary):
        raise AnalysisError("v must vanish at some boundary vertex")
    return PoincareReport(lhs, total_length(graph) ** 2 * rhs)


@dataclass
class NormEquivalenceReport:
    sample_min: float
    sample_max: float
    extreme_min: float
    extreme_max: float
    samples: int

    def as_dict(self) -> Dict:
        return {
            "samples": self.samples,
            "sample_range": [self.sample_min, self.sample_max],
            "extreme_range": [self.extreme_min, self.extreme_max],
        }


def norm_equivalence_probe(k_mat: np.ndarray, m_l2: np.ndarray, k_gamma: np.ndarray,
                           samples: int = 200, rng: Optional[np.random.Generator] = None
                           ) -> NormEquivalenceReport:
    """Ratios c^T K c / c^T (M_L2 + K_gamma) c over random c, plus their exact extremes.

    K_gamma is the stiffness with unit coefficient, so the denominator is the
    discrete ||u||^2 + ||D^beta u||^2.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    denom = m_l2 + k_gamma
    c = rng.standard_normal((k_mat.shape[0], samples))
    ratios = np.einsum("ij,ik,kj->j", c, k_mat, c) / np.einsum("ij,ik,kj->j", c, denom, c)
    ext = linalg.eigh(k_mat, denom, eigvals_only=True)
    return NormEquivalenceReport(float(ratios.min()), float(ratios.max()), float(ext[0]), float(ext[-1]), samples)


@dataclass
class KirchhoffReport:
    residuals: Dict[int, np.ndarray]  # vertex -> residual per eigenpair
    scales: Dict[int, np.ndarray]     # vertex -> max single-edge flux magnitude

    def as_dict(self) -> Dict:
        return {
            str(v): {"residual": self.residuals[v].tolist(), "flux_scale": self.scales[v].tolist()}
            for v in sorted(self.residuals)
        }


def kirchhoff_residual(result: SpectralResult, disc: Discretization) -> KirchhoffReport:
    """Signed flux sum sum_e sigma p v' at every interior vertex, one-sided slopes.

    The condition is natural in the weak form, so it only holds in the limit.
    """
    residuals, scales = {}, {}
    for vertex in disc.graph.interior:
        total = np.zeros(result.k)
        scale = np.zeros(result.k)
        for e in disc.graph.edges:
            for end, node in (("tail", 0), ("head", -1)):
                if getattr(e, end) != vertex:
                    continue
                v = np.array([disc.edge_values(result.eigenvectors[:, j], e.id) for j in range(result.k)])
                h = disc.grids[e.id].h
                slope = (v[:, 1] - v[:, 0]) / h if node == 0 else (v[:, -1] - v[:, -2]) / h
                flux = incidence_sign(disc.graph, e, vertex) * disc.coeffs.p[e.id].at_end(end) * slope
                total += flux
                scale = np.maximum(scale, np.abs(flux))
        residuals[vertex], scales[vertex] = total, scale
    return KirchhoffReport(residuals, scales)
