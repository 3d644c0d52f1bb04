"""Pipelines behind the CLI commands.

Each driver takes a parsed RunConfig and an output directory, writes its
artifacts and returns an exit code.  Exceptions from the numerical layers are
translated by the CLI: configuration problems exit 2, solver failures exit 3.
"""
from __future__ import annotations

import csv
import json
import math
import os
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import analysis
from .assembly import Discretization, PiecewiseConstant
from .config import ConfigError, RunConfig
from .eigen import SpectralResult, edge_eigenfunctions, solve_generalized
from .fractional import (
    GridFunction,
    UniformGrid,
    frac_integral_left,
    ibp_residual,
    lemma3_auxiliary,
)
from .kernel import (
    DENOMINATORS,
    IntervalKernel,
    IntervalProblem,
    kernel_trace,
    nystrom_matrix,
    reciprocal_sum_check,
    trace_closed_form,
)

MULTIPLICITY_RTOL = 1e-8


class SolverFailure(RuntimeError):
    pass


def kirchhoff_note() -> str:
    """How the flux condition at interior vertices is treated."""
    return (
        "The transmission condition sum_e sigma p D^beta u = 0 is natural in the weak form. "
        "It is not imposed on the matrices; kirchhoff_residual measures it a posteriori."
    )


def _fmt(x: float) -> str:
    return "%.17g" % x


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False, default=_plain)
        fh.write("\n")


def _solve(cfg: RunConfig, disc, k: int, corrupt: bool = False):
    k_mat, m_mat = disc.stiffness(), disc.mass()
    if corrupt:
        # test hook: break the symmetry of M
        m_mat = m_mat.copy()
        m_mat[0, -1] += 0.1 * m_mat[0, 0]
    count = min(k, disc.dofs.n_dofs)
    result = solve_generalized(k_mat, m_mat, count)
    return k_mat, m_mat, result


def _multiplicities(values: np.ndarray, rtol: float = MULTIPLICITY_RTOL) -> List[int]:
    out = []
    for lam in values:
        out.append(int(np.sum(np.abs(values - lam) <= rtol * abs(lam))))
    return out


def cmd_solve(cfg: RunConfig, out_dir: str) -> int:
    disc = cfg.discretization()
    _, _, result = _solve(cfg, disc, cfg.k)
    bad = np.flatnonzero(result.residuals > cfg.residual_tol)
    if bad.size:
        raise SolverFailure(f"eigenpair {bad[0] + 1}: residual {result.residuals[bad[0]]:.3e} above tolerance")
    mult = _multiplicities(result.eigenvalues)
    pairs = []
    funcs = []
    for j in range(result.k):
        fe = edge_eigenfunctions(disc, result.eigenvectors[:, j])
        funcs.append(fe)
        pairs.append({
            "k": j + 1,
            "lambda": float(result.eigenvalues[j]),
            "residual": float(result.residuals[j]),
            "multiplicity": mult[j],
            "singular_coefficients": {str(eid): f.singular_coefficient for eid, f in sorted(fe.items())},
        })
    write_json(os.path.join(out_dir, "eigenvalues.json"), {
        "beta": cfg.beta,
        "mesh": {str(e): n for e, n in sorted(cfg.n.items())},
        "n_dofs": disc.dofs.n_dofs,
        "normalization": result.normalization,
        "eigenpairs": pairs,
        "config": cfg.to_dict(),
    })
    with open(os.path.join(out_dir, "eigenfunctions.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "edge_id", "x", "v", "u"])
        for j, fe in enumerate(funcs):
            for e in disc.graph.edges:
                f = fe[e.id]
                x = f.grid.nodes
                u = f(x)
                for i in range(len(x)):
                    singular = f.is_singular and x[i] < f.grid.h
                    w.writerow([j + 1, e.id, _fmt(x[i]), _fmt(f.v[i]), "singular" if singular else _fmt(u[i])])
    return 0


def _interval_problem(cfg: RunConfig) -> IntervalProblem:
    if len(cfg.graph.edges) != 1:
        raise ConfigError("trace oracle is single-interval only")
    e = cfg.graph.edges[0]
    return IntervalProblem(e.length, cfg.beta, cfg.p[e.id], cfg.r[e.id])


def cmd_trace(cfg: RunConfig, out_dir: str) -> int:
    problem = _interval_problem(cfg)
    e = cfg.graph.edges[0]
    n = cfg.n[e.id]
    traces = {d: kernel_trace(IntervalKernel(problem, d)) for d in DENOMINATORS}
    kern = IntervalKernel(problem, cfg.kernel_denominator)
    trace = traces[cfg.kernel_denominator]
    mat = nystrom_matrix(kern, max(n, 16), corrected=False)
    mu = np.linalg.eigvalsh(mat)
    disc = cfg.discretization()
    _, _, result = _solve(cfg, disc, cfg.k)
    report = reciprocal_sum_check(result.eigenvalues, trace)
    payload: Dict = {
        "beta": cfg.beta,
        "length": e.length,
        "n": n,
        "kernel_denominator": cfg.kernel_denominator,
        "kernel_trace": trace,
        "kernel_trace_by_denominator": traces,
    }
    if len(problem.p.values) == 1 and len(problem.r.values) == 1:
        payload["closed_form"] = trace_closed_form(e.length, cfg.beta) * problem.r.values[0] / problem.p.values[0]
    payload["nystrom"] = {
        "matrix_trace": float(np.trace(mat)),
        "eigenvalue_sum": float(np.sum(mu)),
        "size": int(mat.shape[0]),
    }
    payload["galerkin"] = {"eigenvalues": result.eigenvalues.tolist(), **report.as_dict()}
    write_json(os.path.join(out_dir, "trace.json"), payload)
    return 0


def _frac_core_suite(beta: float, rng: np.random.Generator) -> Dict:
    alpha = 1.0 - beta if beta < 1.0 else 0.5
    grid = UniformGrid(1.0, 256)
    const = grid.length ** alpha / math.gamma(alpha + 1.0)
    worst = -math.inf
    for _ in range(100):
        y = GridFunction(grid, rng.standard_normal(grid.n + 1))
        worst = max(worst, frac_integral_left(y, alpha).l2_norm() - const * y.l2_norm())
    bound = {"max_excess": worst, "pass": worst <= 1e-8}

    fine = UniformGrid(1.0, 4096)
    errs = []
    for n in range(1, 9):
        z = lemma3_auxiliary(n, 0.25)
        errs.append(abs(frac_integral_left(GridFunction.sample(fine, z), 0.25).values[-1] - 1.0))
    aux = {"errors": errs, "pass": max(errs) <= 1e-6}

    b = beta if beta < 1.0 else 0.75
    res = []
    for n in (64, 128, 256, 512):
        g = UniformGrid(1.0, n)
        res.append(ibp_residual(GridFunction.sample(g, lambda x: x * x), GridFunction.sample(g, lambda x: 1 - x), b))
    orders = [math.log2(a / c) for a, c in zip(res, res[1:])]
    ibp = {"residuals": res, "orders": orders, "pass": min(orders) >= 1.0}
    return {"integral_bound": bound, "auxiliary_normalization": aux, "ibp": ibp,
            "pass": bound["pass"] and aux["pass"] and ibp["pass"]}


def _matrix_suite(mat: np.ndarray) -> Dict:
    asym = float(np.max(np.abs(mat - mat.T)) / np.max(np.abs(mat)))
    try:
        np.linalg.cholesky(0.5 * (mat + mat.T))
        pd = True
    except np.linalg.LinAlgError:
        pd = False
    return {"asymmetry": asym, "positive_definite": pd, "pass": asym <= 1e-12 and pd}


def _eigen_suite(result: SpectralResult, m_mat: np.ndarray, tol: float) -> Dict:
    vecs = result.eigenvectors
    gram = vecs.T @ m_mat @ vecs
    ortho = float(np.max(np.abs(gram - np.eye(result.k))))
    lam = result.eigenvalues
    out = {
        "lambda_1": float(lam[0]),
        "ascending": bool(np.all(np.diff(lam) >= 0)),
        "orthonormality_error": ortho,
        "max_residual": float(np.max(result.residuals)),
    }
    out["pass"] = bool(lam[0] > 0 and out["ascending"] and ortho <= 1e-8 and out["max_residual"] <= tol)
    return out


def cmd_validate(cfg: RunConfig, out_dir: str, seed: Optional[int] = None) -> int:
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    disc = cfg.discretization()
    k = max(cfg.k, 10)
    k_mat, m_mat, result = _solve(cfg, disc, k, corrupt=cfg.corrupt_mass)
    suites: Dict[str, Dict] = {}
    suites["stiffness_matrix"] = _matrix_suite(k_mat)
    suites["mass_matrix"] = _matrix_suite(m_mat)
    suites["eigen"] = _eigen_suite(result, m_mat, cfg.residual_tol)
    if len(disc.graph.edges) == 1:
        suites["interval_bound"] = analysis.prop2_bound_check(result, disc).as_dict()
    suites["graph_bound"] = analysis.graph_bound_check(result, disc).as_dict()

    failures = 0
    for _ in range(cfg.samples):
        c = rng.standard_normal(disc.dofs.n_dofs)
        values = {e.id: disc.edge_values(c, e.id) for e in disc.graph.edges}
        failures += not analysis.poincare_check(disc.graph, values).ok
    suites["poincare"] = {"samples": cfg.samples, "failures": failures, "pass": failures == 0}
    suites["frac_core"] = _frac_core_suite(cfg.beta, rng)

    asserted = [name for name in suites]
    reported: Dict[str, Dict] = {}
    reported["interlacing"] = analysis.interlacing_check(disc, k, result).as_dict()
    reported["kirchhoff"] = analysis.kirchhoff_residual(result, disc).as_dict()
    m_l2 = disc.mass({e.id: PiecewiseConstant.constant(1.0) for e in disc.graph.edges})
    k_gamma = Discretization(disc.graph, cfg.coeffs.with_p(1.0), disc.beta, disc.grids).stiffness()
    reported["norm_equivalence"] = analysis.norm_equivalence_probe(k_mat, m_l2, k_gamma, 200, rng).as_dict()

    failed = [name for name in asserted if not suites[name]["pass"]]
    write_json(os.path.join(out_dir, "validation.json"), {
        "beta": cfg.beta,
        "mesh": {str(e): n for e, n in sorted(cfg.n.items())},
        "asserted": suites,
        "reported": reported,
        "failed": failed,
        "pass": not failed,
    })
    if failed:
        raise ValidationFailed(failed)
    return 0


class ValidationFailed(RuntimeError):
    def __init__(self, names: Sequence[str]):
        super().__init__("failing invariant suites: " + ", ".join(names))
        self.names = list(names)


def check_nested(levels: Sequence[int]) -> None:
    if len(levels) < 2:
        raise ConfigError("convergence needs at least 2 mesh sizes")
    for a, b in zip(levels, levels[1:]):
        if not (b > a and b % a == 0):
            raise ConfigError(f"mesh sizes {a} and {b} are not nested (each must divide the next)")


class NotMonotone(RuntimeError):
    pass


def cmd_convergence(cfg: RunConfig, out_dir: str, levels: Optional[Sequence[int]] = None) -> int:
    levels = list(levels if levels else cfg.levels)
    check_nested(levels)
    rows = []
    for n in levels:
        disc = cfg.discretization(n)
        rows.append(_solve(cfg, disc, cfg.k)[2].eigenvalues)
    k = min(len(r) for r in rows)
    with open(os.path.join(out_dir, "convergence.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n"] + [f"lambda_{j + 1}" for j in range(k)])
        for n, lam in zip(levels, rows):
            w.writerow([n] + [_fmt(v) for v in lam[:k]])
    for (na, a), (nb, b) in zip(zip(levels, rows), zip(levels[1:], rows[1:])):
        up = np.flatnonzero(b[:k] > a[:k] * (1.0 + 1e-10))
        if up.size:
            raise NotMonotone(f"lambda_{up[0] + 1} increased from n={na} to n={nb}")
    return 0
