"""Discrete solves, Galerkin residuals and stability probes.

The probes compute generalized singular values

    sigma = min_w ||B w||_{D^{-1}} / ||w||_P

where ``D`` is the Gram matrix of the dual (test) norm and ``P`` that of the
primal norm. Since B^T D^{-1} B is symmetric positive semidefinite, sigma^2
is the smallest eigenvalue of the pencil (B^T D^{-1} B, P).
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fe_space import build_dg_space
from .operator import (
    adjoint,
    assemble_broken_h2,
    assemble_dg,
    assemble_mass,
    assemble_nondiv,
    assemble_stiffness,
    load_vector,
)

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2000
PIVOT_RATIO = 1e-12


class SolverError(RuntimeError):
    pass


class ProbeError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SolveResult:
    solution: object
    residual_norm: float
    factorization_info: dict
    operator: object = None
    rhs: np.ndarray = None


@dataclass(frozen=True)
class StabilityReport:
    h: float
    sigma_h1: float
    sigma_h2: float
    sigma_adjoint: float
    invertible: bool


def _factor(B, space):
    try:
        return spla.splu(sp.csc_matrix(B))
    except RuntimeError as exc:
        raise SolverError(
            f"singular system at h={space.mesh.h_max:.4g}, r={space.degree}: discrete problem not well-posed ({exc})"
        ) from exc


def _pivot_ratio(lu):
    d = np.abs(lu.U.diagonal())
    return float(d.min() / d.max()) if d.size and d.max() > 0 else 0.0


def _solve_system(op, F, space):
    lu = _factor(op.matrix, space)
    x = lu.solve(F)
    # one step of iterative refinement
    x += lu.solve(F - op.matrix @ x)
    if not np.all(np.isfinite(x)):
        raise SolverError(f"non-finite solution at h={space.mesh.h_max:.4g}, r={space.degree}")
    scale = np.abs(F).max()
    res = np.abs(op.matrix @ x - F).max()
    info = {"pivot_ratio": _pivot_ratio(lu), "nnz_L": lu.L.nnz, "nnz_U": lu.U.nnz, "failed": False}
    return x, (res / scale if scale > 0 else res), info


def solve(problem, space, quad_order=None):
    """Find u_h in the space with (L_h u_h, v_h) = (f, v_h) for all v_h (sparse LU)."""
    B = assemble_nondiv(space, problem.coefficient, quad_order)
    F = load_vector(space, problem.forcing, quad_order)
    x, res, info = _solve_system(B, F, space)
    return SolveResult(space.from_free(x), res, info, B, F)


def solve_dg(problem, mesh, r, cfg=None, quad_order=None):
    """Interior penalty DG solution on the broken degree-``r`` space."""
    space = build_dg_space(mesh, r)
    B = assemble_dg(mesh, r, problem.coefficient, cfg, quad_order, space=space)
    F = load_vector(space, problem.forcing, quad_order)
    x, res, info = _solve_system(B, F, space)
    return SolveResult(space.from_free(x), res, info, B, F)


def galerkin_residual(problem, result):
    """max_i |(f, phi_i) - (L_h u_h, phi_i)| relative to max_i |(f, phi_i)|.

    The load vector is recomputed from the problem rather than taken from
    the solve.
    """
    space = result.solution.space
    F = load_vector(space, problem.forcing)
    r = np.abs(F - result.operator.matrix @ result.solution.free_values).max()
    scale = np.abs(F).max()
    return float(r / scale) if scale > 0 else float(r)


def matrix_invertible(B, ratio=PIVOT_RATIO):
    """True iff sparse LU succeeds with min |pivot| > ratio * max |pivot|."""
    mat = sp.csc_matrix(getattr(B, "matrix", B))
    try:
        lu = spla.splu(mat)
    except RuntimeError:
        return False
    return _pivot_ratio(lu) > ratio


def invertibility_check(space, A):
    return matrix_invertible(assemble_nondiv(space, A))


def _dense_sigma(B, D, P):
    Ld = np.linalg.cholesky(D.toarray())
    Lp = np.linalg.cholesky(P.toarray())
    C = sla.solve_triangular(Ld, B.toarray(), lower=True)
    C = sla.solve_triangular(Lp, C.T, lower=True).T
    return float(sla.svdvals(C)[-1])


def _sparse_sigma(B, D, P, tol):
    n = B.shape[0]
    lu_b = spla.splu(sp.csc_matrix(B))
    lu_d = spla.splu(sp.csc_matrix(D))
    D = sp.csr_matrix(D)

    # Q = B^T D^{-1} B and its inverse B^{-1} D B^{-T}
    def q_apply(x):
        return B.T @ lu_d.solve(B @ x)

    def q_solve(x):
        return lu_b.solve(D @ lu_b.solve(x, trans="T"))

    Q = spla.LinearOperator((n, n), matvec=q_apply, dtype=float)
    Qinv = spla.LinearOperator((n, n), matvec=q_solve, dtype=float)
    # largest mu of P w = mu Q w is 1 / sigma^2
    mu = spla.eigsh(sp.csr_matrix(P), k=1, M=Q, Minv=Qinv, which="LA", tol=tol, return_eigenvectors=False)
    return float(1.0 / np.sqrt(mu[0]))


def generalized_sigma(B, D, P, dense_limit=DENSE_LIMIT, tol=1e-8):
    """min_w ||B w||_{D^{-1}} / ||w||_P for sparse B and SPD Gram matrices D, P."""
    B, D, P = (getattr(m, "matrix", m) for m in (B, D, P))
    try:
        if B.shape[0] <= dense_limit:
            return _dense_sigma(B, D, P)
        return _sparse_sigma(B, D, P, tol)
    except RuntimeError as exc:
        # exactly singular B
        if "singular" in str(exc).lower():
            return 0.0
        raise ProbeError(str(exc)) from exc
    except np.linalg.LinAlgError as exc:
        raise ProbeError(f"Gram matrix factorization failed: {exc}") from exc


def stability_probe(space, A, dense_limit=DENSE_LIMIT, tol=1e-8, h2=True):
    """Empirical H1, broken-H2 and adjoint stability constants of L_h on ``space``.

    sigma_h1 = min ||L_h w||_{H^{-1}_h} / ||grad w||; sigma_h2 = min
    ||L_h w||_{L^2_h} / ||w||_{H^2_h}; sigma_adjoint uses the transpose.
    ``h2=False`` skips the broken-H2 constant (reported as NaN).
    """
    B = assemble_nondiv(space, A)
    K = assemble_stiffness(space)
    s1 = generalized_sigma(B, K, K, dense_limit, tol)
    sa = generalized_sigma(adjoint(B), K, K, dense_limit, tol)
    s2 = np.nan
    if h2:
        M = assemble_mass(space)
        G = assemble_broken_h2(space)
        s2 = generalized_sigma(B, M, G, dense_limit, tol)
    logger.debug("probe h=%g r=%d: %g %g %g", space.mesh.h_max, space.degree, s1, s2, sa)
    return StabilityReport(space.mesh.h_max, s1, s2, sa, bool(s1 > 0))
