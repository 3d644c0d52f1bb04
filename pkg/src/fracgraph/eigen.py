"""Symmetric-definite generalized eigenproblems K c = lambda M c and eigenfunctions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .fractional import UniformGrid

CLUSTER_RTOL = 1e-8


class NotPositiveDefinite(linalg.LinAlgError):
    def __init__(self, pivot: int, which: str = "M"):
        super().__init__(f"matrix {which} not positive definite (pivot {pivot})")
        self.pivot = pivot


class EigenError(RuntimeError):
    pass


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, M-orthonormal
    residuals: np.ndarray
    normalization: str = "r-weighted"
    clusters: List[List[int]] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def multiplicity(self, index: int) -> int:
        for cl in self.clusters:
            if index in cl:
                return len(cl)
        return 1


def cholesky_lower(m: np.ndarray, which: str = "M") -> np.ndarray:
    """Lower Cholesky factor; raises NotPositiveDefinite with the 1-based failing pivot."""
    c, info = lapack.dpotrf(np.asarray(m, dtype=float), lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefinite(int(info), which)
    if info < 0:
        raise EigenError(f"dpotrf argument error {info}")
    return c


def _clusters(values: np.ndarray, rtol: float = CLUSTER_RTOL) -> List[List[int]]:
    groups: List[List[int]] = []
    for i, lam in enumerate(values):
        if groups and abs(lam - values[groups[-1][-1]]) <= rtol * max(abs(lam), 1e-300):
            groups[-1].append(i)
        else:
            groups.append([i])
    return [g for g in groups if len(g) > 1]


def _m_orthonormalize(vecs: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt in the M inner product (columns)."""
    out = vecs.copy()
    for i in range(out.shape[1]):
        for j in range(i):
            out[:, i] -= (out[:, j] @ m @ out[:, i]) * out[:, j]
        out[:, i] /= math.sqrt(out[:, i] @ m @ out[:, i])
    return out


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for i in range(out.shape[1]):
        col = out[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.max(np.abs(col)))
        if nz.size and col[nz[0]] < 0:
            out[:, i] = -col
    return out


def solve_generalized(k_mat: np.ndarray, m_mat: np.ndarray, count: Optional[int] = None) -> SpectralResult:
    """Smallest ``count`` eigenpairs of K c = lambda M c.

    M = L L^T by Cholesky, then the standard problem for L^-1 K L^-T is
    solved by Householder tridiagonalization and implicit QL/QR (LAPACK
    dsyev), and eigenvectors are mapped back with L^-T.
    """
    k_mat = np.asarray(k_mat, dtype=float)
    m_mat = np.asarray(m_mat, dtype=float)
    n = k_mat.shape[0]
    if k_mat.shape != (n, n) or m_mat.shape != (n, n):
        raise ValueError("K and M must be square of equal size")
    count = n if count is None else int(count)
    if not 1 <= count <= n:
        raise ValueError(f"count must lie in 1..{n}")
    low = cholesky_lower(m_mat, "M")
    tmp = linalg.solve_triangular(low, k_mat, lower=True)
    reduced = linalg.solve_triangular(low, tmp.T, lower=True)
    reduced = 0.5 * (reduced + reduced.T)
    try:
        values, y = linalg.eigh(reduced, driver="ev", check_finite=True)
    except linalg.LinAlgError as exc:
        raise EigenError(f"QL iteration did not converge: {exc}") from exc
    values, y = values[:count], y[:, :count]
    vecs = linalg.solve_triangular(low.T, y, lower=False)
    clusters = _clusters(values)
    for cl in clusters:
        vecs[:, cl] = _m_orthonormalize(vecs[:, cl], m_mat)
    vecs = _fix_signs(vecs)
    res = residual_norms(k_mat, m_mat, values, vecs)
    return SpectralResult(values, vecs, res, "r-weighted", clusters)


def residual_norms(k_mat, m_mat, values, vecs) -> np.ndarray:
    kc = k_mat @ vecs
    return np.linalg.norm(kc - (m_mat @ vecs) * values[None, :], axis=0) / np.linalg.norm(kc, axis=0)


def rayleigh_quotient(k_mat: np.ndarray, m_mat: np.ndarray, c: np.ndarray) -> float:
    c = np.asarray(c, dtype=float)
    if not np.any(c):
        raise ValueError("Rayleigh quotient of the zero vector")
    return float(c @ k_mat @ c) / float(c @ m_mat @ c)


def normalize_r_weighted(result: SpectralResult, m_mat: np.ndarray) -> SpectralResult:
    """Scale each eigenvector to c^T M c = 1 with its first nonzero entry positive."""
    vecs = np.array(result.eigenvectors, dtype=float)
    norms = np.sqrt(np.einsum("ij,ik,kj->j", vecs, m_mat, vecs))
    vecs = _fix_signs(vecs / norms[None, :])
    return replace(result, eigenvectors=vecs, normalization="r-weighted")


@dataclass(frozen=True)
class FracEigenfunction:
    """u = D^{1-beta} v for piecewise-linear v on one edge, in closed form."""

    grid: UniformGrid
    beta: float
    v: np.ndarray

    @property
    def singular_coefficient(self) -> float:
        """Coefficient of x^(beta-1) in u, i.e. v(0) / Gamma(beta)."""
        return float(self.v[0]) / math.gamma(self.beta)

    @property
    def slope_jumps(self) -> np.ndarray:
        """s_0 = first slope, s_j = jump of slope at x_j (j = 1..n-1)."""
        slopes = np.diff(self.v) / self.grid.h
        return np.concatenate([[slopes[0]], np.diff(slopes)])

    @property
    def is_singular(self) -> bool:
        return self.beta < 1.0 and self.v[0] != 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        beta = self.beta
        nodes = self.grid.nodes[:-1]
        t = x[..., None] - nodes
        ramps = np.where(t > 0, np.maximum(t, 0.0) ** beta, 0.0) / math.gamma(1.0 + beta)
        out = ramps @ self.slope_jumps
        if self.v[0] != 0.0:
            with np.errstate(divide="ignore"):
                lead = np.where(x > 0, np.where(x > 0, x, 1.0) ** (beta - 1.0) / math.gamma(beta), np.inf)
            out = out + self.v[0] * lead if beta < 1.0 else out + self.v[0]
        return out


def reconstruct_u(v: np.ndarray, beta: float, grid: UniformGrid) -> FracEigenfunction:
    v = np.asarray(v, dtype=float)
    if v.shape != (grid.n + 1,):
        raise ValueError("v must have one value per grid node")
    return FracEigenfunction(grid, float(beta), v.copy())


def edge_eigenfunctions(disc, coeffs: np.ndarray) -> Dict[int, FracEigenfunction]:
    """Per-edge closed-form u for one global dof vector."""
    return {
        e.id: reconstruct_u(disc.edge_values(coeffs, e.id), disc.beta, disc.grids[e.id])
        for e in disc.graph.edges
    }
