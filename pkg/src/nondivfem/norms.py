"""Error norms and discrete dual norms.

A discrete dual norm sup_v (F, v) / ||v||_G over the finite element space is
evaluated exactly through its Riesz representer z = G^{-1} F, giving
sqrt(F^T G^{-1} F).
"""
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fe_space import FEFunction, cell_gradients, cell_hessians, cell_values, edge_points


class FactorizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ErrorTriple:
    l2: float
    h1: float
    h2_broken: float

    def as_tuple(self):
        return (self.l2, self.h1, self.h2_broken)


def _exact_field(u):
    return getattr(u, "exact_u", u)


def error_norms(u_exact, u_h, quad_order=None, edge_order=None):
    """L2, H1-seminorm and squared-sum broken H2 norms of ``u_exact - u_h``.

    The broken H2 part is the root of sum_T ||D^2(u - u_h)||_T^2 plus
    sum_e h_e^{-1} ||[grad u_h] . nu_e||_e^2 over interior edges; the exact
    solution contributes no jump.
    """
    u = _exact_field(u_exact)
    space = u_h.space
    r = space.degree
    quad = space.cell_quadrature(quad_order or 2 * r + 6)
    pts = quad.points
    e0 = u.value(pts) - cell_values(u_h, quad)
    e1 = u.gradient(pts) - cell_gradients(u_h, quad)
    e2 = u.hessian(pts) - cell_hessians(u_h, quad)
    w = quad.weights
    l2 = np.sum(w * e0**2)
    h1 = np.sum(w * np.sum(e1**2, axis=-1))
    h2 = np.sum(w * np.sum(e2**2, axis=(-1, -2)))
    h2 += jump_seminorm_sq(u_h, edge_order or 2 * r + 1)
    return ErrorTriple(float(np.sqrt(l2)), float(np.sqrt(h1)), float(np.sqrt(h2)))


def normal_gradient_jumps(u_h, order):
    """[grad u_h] on interior edge points split into normal (E, nq) and tangential parts."""
    space = u_h.space
    mesh = space.mesh
    sk = mesh.skeleton
    pts, wts = edge_points(mesh, sk.interior_vertices, order)
    plus = space.edge_traces(sk.interior_cells[:, 0], pts)
    minus = space.edge_traces(sk.interior_cells[:, 1], pts)
    cp = u_h.local_coeffs(sk.interior_cells[:, 0])
    cm = u_h.local_coeffs(sk.interior_cells[:, 1])
    jump = np.einsum("ek,eqki->eqi", cp, plus.grads) - np.einsum("ek,eqki->eqi", cm, minus.grads)
    nu = sk.interior_normals
    tangent = np.column_stack([-nu[:, 1], nu[:, 0]])
    normal_part = np.einsum("eqi,ei->eq", jump, nu)
    tangential_part = np.einsum("eqi,ei->eq", jump, tangent)
    return normal_part, tangential_part, wts


def jump_seminorm_sq(u_h, order):
    normal_part, _, wts = normal_gradient_jumps(u_h, order)
    h = u_h.space.mesh.skeleton.interior_lengths
    return float(np.sum(wts * normal_part**2 / h[:, None]))


class GramFactor:
    """Sparse LU factorization of a symmetric positive definite Gram matrix."""

    def __init__(self, gram):
        mat = getattr(gram, "matrix", gram)
        self.matrix = sp.csc_matrix(mat)
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise FactorizationError(f"Gram matrix factorization failed: {exc}") from exc

    def solve(self, rhs):
        return self._lu.solve(np.asarray(rhs, dtype=float))

    def dual_norm(self, F):
        F = np.asarray(F, dtype=float)
        if not np.any(F):
            return 0.0
        z = self.solve(F)
        val = float(F @ z)
        if val < 0 and val < -1e-12 * np.abs(F) @ np.abs(z):
            raise FactorizationError("Gram matrix is not positive definite")
        return float(np.sqrt(max(val, 0.0)))


_factor_cache = weakref.WeakKeyDictionary()


def gram_factor(gram):
    """Cached factorization for AssembledOperator inputs; plain matrices are factored each call."""
    if isinstance(gram, GramFactor):
        return gram
    if hasattr(gram, "matrix"):
        try:
            return _factor_cache[gram]
        except KeyError:
            fac = _factor_cache[gram] = GramFactor(gram)
            return fac
    return GramFactor(gram)


def dual_norm_hm1(F, K):
    """sup over v of (F, v) / ||grad v||, with ``K`` the stiffness Gram matrix."""
    return gram_factor(K).dual_norm(F)


def dual_norm_l2h(F, M):
    """sup over v of (F, v) / ||v||_L2, with ``M`` the mass Gram matrix."""
    return gram_factor(M).dual_norm(F)


def riesz_representer(F, G):
    return gram_factor(G).solve(F)


def operator_dual_norm(B, w, gram):
    """Dual norm of the functional ``B w`` (e.g. ||L_h w_h|| in H^{-1}_h when ``gram`` is K)."""
    mat = getattr(B, "matrix", B)
    w = w.free_values if isinstance(w, FEFunction) else np.asarray(w, dtype=float)
    if mat.shape[1] != len(w):
        raise ValueError(f"operator has {mat.shape[1]} columns, vector has {len(w)} entries")
    return gram_factor(gram).dual_norm(mat @ w)


def monte_carlo_sup(F, G, n_samples=1000, rng=None):
    """Largest ratio (F . v) / sqrt(v^T G v) over random Gaussian test vectors.

    Brute-force lower bound for the dual norm, independent of any solve.
    """
    rng = np.random.default_rng(rng)
    mat = getattr(G, "matrix", G)
    V = rng.standard_normal((n_samples, len(F)))
    num = V @ np.asarray(F, dtype=float)
    den = np.sqrt(np.einsum("si,si->s", V, (mat @ V.T).T))
    return float(np.max(np.abs(num) / den))


def discrete_poincare_constant(K, M):
    """sqrt(lambda_max(K^{-1} M)): ||v|| <= C ||grad v|| on the discrete space (dense)."""
    k = getattr(K, "matrix", K).toarray()
    m = getattr(M, "matrix", M).toarray()
    lam = sla.eigh(m, k, eigvals_only=True)
    return float(np.sqrt(lam[-1]))
