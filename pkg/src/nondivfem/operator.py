"""Sparse assembly of the non-divergence operator and its companions.

All matrices follow the convention ``B[i, j] = a(phi_j, phi_i)``: rows index
test functions, columns trial functions. Continuous spaces are reduced to
their free (non-Dirichlet) DOFs; the unreduced matrix is kept in ``full``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fe_space import build_dg_space, edge_points

KINDS = ("nondiv", "adjoint-nondiv", "flux-jump", "divform", "mass", "stiffness", "dg", "broken-h2")


@dataclass(frozen=True)
class DGConfig:
    """Interior penalty parameters: ``epsilon`` in {1, 0, -1}, penalty scale ``gamma0``."""

    epsilon: int = 1
    gamma0: float = 10.0

    def __post_init__(self):
        if self.epsilon not in (1, 0, -1):
            raise ValueError(f"epsilon must be one of 1, 0, -1, got {self.epsilon!r}")
        if not self.gamma0 > 0:
            raise ValueError(f"gamma0 must be positive, got {self.gamma0!r}")

    def penalty(self, degree):
        return self.gamma0 * degree**2


@dataclass(frozen=True, eq=False)
class AssembledOperator:
    matrix: sp.csr_matrix
    kind: str
    space: object
    coefficient: object = None
    dg_config: DGConfig = None
    full: sp.csr_matrix = None

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x


def _finalize(space, full):
    full = full.tocsr()
    full.sum_duplicates()
    full.sort_indices()
    free = space.free_dofs
    reduced = full if free.size == space.n_dofs else full[free][:, free]
    reduced = reduced.tocsr()
    reduced.sort_indices()
    return full, reduced


def _scatter(space, blocks):
    """Sum local blocks ``(row_cells, col_cells, local[E, nloc, nloc])`` into a global matrix."""
    rows, cols, data = [], [], []
    nloc = space.element.n_local
    for rcells, ccells, local in blocks:
        rd = space.cell_dofs[rcells]
        cd = space.cell_dofs[ccells]
        rows.append(np.repeat(rd, nloc, axis=1).ravel())
        cols.append(np.tile(cd, (1, nloc)).ravel())
        data.append(local.ravel())
    n = space.n_dofs
    return sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def _edge_blocks(weights, row_sides, col_sides):
    """Local edge matrices sum_q w R_i C_j for every pairing of sides.

    Each side is ``(cells, functions[E, nq, nloc])``.
    """
    out = []
    for rc, rf in row_sides:
        for cc, cf in col_sides:
            out.append((rc, cc, np.einsum("eq,eqi,eqj->eij", weights, rf, cf)))
    return out


def _flux(A_vals, grads, normals):
    """A grad(phi) . nu at edge points, shape (E, nq, nloc)."""
    An = np.einsum("eqij,ej->eqi", A_vals, normals)
    return np.einsum("eqki,eqi->eqk", grads, An)


class _InteriorSkeleton:
    """Quadrature data on interior edges, traces from both sides."""

    def __init__(self, space, order, A=None):
        mesh = space.mesh
        sk = mesh.skeleton
        self.cells_plus = sk.interior_cells[:, 0]
        self.cells_minus = sk.interior_cells[:, 1]
        self.normals = sk.interior_normals
        self.lengths = sk.interior_lengths
        # quadrature points run from the lower to the higher vertex index, whatever the orientation
        self.points, self.weights = edge_points(mesh, np.sort(sk.interior_vertices, axis=1), order)
        self.plus = space.edge_traces(self.cells_plus, self.points)
        self.minus = space.edge_traces(self.cells_minus, self.points)
        self.A = None if A is None else A(self.points)

    def flux(self, traces):
        return _flux(self.A, traces.grads, self.normals)

    def normal_grad(self, traces):
        return np.einsum("eqki,ei->eqk", traces.grads, self.normals)


def _edge_order(space):
    return 2 * space.degree + 1


def _nondiv_volume(space, A, quad):
    hess_term = -np.einsum("cqij,cqkij->cqk", A(quad.points), quad.hessians)
    local = np.einsum("cq,qi,cqj->cij", quad.weights, quad.values, hess_term)
    cells = np.arange(space.mesh.n_cells)
    return [(cells, cells, local)]


def _flux_jump_average(skel):
    """Blocks of the term <[A grad u . nu], {v}> on interior edges."""
    rows = [(skel.cells_plus, 0.5 * skel.plus.values), (skel.cells_minus, 0.5 * skel.minus.values)]
    cols = [(skel.cells_plus, skel.flux(skel.plus)), (skel.cells_minus, -skel.flux(skel.minus))]
    return _edge_blocks(skel.weights, rows, cols)


def assemble_nondiv(space, A, quad_order=None, edge_order=None):
    """Matrix of (L_h phi_j, phi_i): broken -A:D^2 term plus interior flux jumps.

    For continuous test functions the edge average equals the trace, so the
    symmetric average is used; it makes the result independent of the
    edge orientation.
    """
    quad = space.cell_quadrature(quad_order)
    skel = _InteriorSkeleton(space, edge_order or _edge_order(space), A)
    blocks = _nondiv_volume(space, A, quad) + _flux_jump_average(skel)
    full, reduced = _finalize(space, _scatter(space, blocks))
    return AssembledOperator(reduced, "nondiv", space, A, None, full)


def assemble_flux_jumps(space, A, edge_order=None):
    """Edge part of L_h alone: sum_e <[A grad phi_j . nu], phi_i>_e."""
    skel = _InteriorSkeleton(space, edge_order or _edge_order(space), A)
    full, reduced = _finalize(space, _scatter(space, _flux_jump_average(skel)))
    return AssembledOperator(reduced, "flux-jump", space, A, None, full)


def _gram(space, integrand, kind, coefficient=None, quad_order=None):
    quad = space.cell_quadrature(quad_order, hessians=False)
    local = integrand(quad)
    cells = np.arange(space.mesh.n_cells)
    full, reduced = _finalize(space, _scatter(space, [(cells, cells, local)]))
    return AssembledOperator(reduced, kind, space, coefficient, None, full)


def assemble_divform(space, A, quad_order=None):
    """Matrix of (A grad phi_j, grad phi_i)."""

    def integrand(quad):
        Ag = np.einsum("cqij,cqkj->cqki", A(quad.points), quad.grads)
        return np.einsum("cq,cqia,cqja->cij", quad.weights, quad.grads, Ag)

    return _gram(space, integrand, "divform", A, quad_order)


def assemble_stiffness(space, quad_order=None):
    def integrand(quad):
        return np.einsum("cq,cqia,cqja->cij", quad.weights, quad.grads, quad.grads)

    return _gram(space, integrand, "stiffness", None, quad_order)


def assemble_mass(space, quad_order=None):
    def integrand(quad):
        return np.einsum("cq,qi,qj->cij", quad.weights, quad.values, quad.values)

    return _gram(space, integrand, "mass", None, quad_order)


def assemble_broken_h2(space, quad_order=None, edge_order=None):
    """Gram matrix of the squared broken H2 norm.

    sum_T (D^2 w, D^2 v)_T + sum_e h_e^{-1} <[grad w] . nu, [grad v] . nu>_e
    over interior edges.
    """
    quad = space.cell_quadrature(quad_order)
    local = np.einsum("cq,cqiab,cqjab->cij", quad.weights, quad.hessians, quad.hessians)
    cells = np.arange(space.mesh.n_cells)
    skel = _InteriorSkeleton(space, edge_order or _edge_order(space))
    # the jump enters quadratically, so both sides may be listed by ascending
    # cell index; this keeps the summation order independent of orientation
    g_plus, g_minus = skel.normal_grad(skel.plus), -skel.normal_grad(skel.minus)
    swap = skel.cells_plus > skel.cells_minus
    first = (np.where(swap, skel.cells_minus, skel.cells_plus), np.where(swap[:, None, None], g_minus, g_plus))
    second = (np.where(swap, skel.cells_plus, skel.cells_minus), np.where(swap[:, None, None], g_plus, g_minus))
    blocks = [(cells, cells, local)] + _edge_blocks(skel.weights / skel.lengths[:, None], [first, second], [first, second])
    full, reduced = _finalize(space, _scatter(space, blocks))
    return AssembledOperator(reduced, "broken-h2", space, None, None, full)


def assemble_dg(mesh, r, A, cfg=None, quad_order=None, edge_order=None, space=None):
    """Interior penalty DG form for -A:D^2 u = f on the broken degree-``r`` space.

    Terms: broken volume term; interior flux jumps against averages;
    ``-epsilon <{A grad v . nu}, [u]>`` and the penalty
    ``gamma_e / h_e <[u], [v]>`` over interior and boundary edges, where on
    boundary edges [w] = {w} = w and nu is the outward normal.
    """
    cfg = DGConfig() if cfg is None else cfg
    if not isinstance(cfg, DGConfig):
        raise TypeError("cfg must be a DGConfig")
    space = build_dg_space(mesh, r) if space is None else space
    if not space.discontinuous:
        raise ValueError("assemble_dg needs a discontinuous space")
    eorder = edge_order or _edge_order(space)
    quad = space.cell_quadrature(quad_order)
    gamma = cfg.penalty(r)
    eps = cfg.epsilon

    skel = _InteriorSkeleton(space, eorder, A)
    blocks = _nondiv_volume(space, A, quad) + _flux_jump_average(skel)
    jump = [(skel.cells_plus, skel.plus.values), (skel.cells_minus, -skel.minus.values)]
    if eps:
        avg_flux = [(skel.cells_plus, 0.5 * skel.flux(skel.plus)), (skel.cells_minus, 0.5 * skel.flux(skel.minus))]
        blocks += _edge_blocks(-eps * skel.weights, avg_flux, jump)
    blocks += _edge_blocks(gamma * skel.weights / skel.lengths[:, None], jump, jump)

    sk = mesh.skeleton
    bpts, bw = edge_points(mesh, sk.boundary_vertices, eorder)
    btr = space.edge_traces(sk.boundary_cells, bpts)
    bcells = sk.boundary_cells
    if eps:
        bflux = _flux(A(bpts), btr.grads, sk.boundary_normals)
        blocks += _edge_blocks(-eps * bw, [(bcells, bflux)], [(bcells, btr.values)])
    blocks += _edge_blocks(gamma * bw / sk.boundary_lengths[:, None], [(bcells, btr.values)], [(bcells, btr.values)])

    full, reduced = _finalize(space, _scatter(space, blocks))
    return AssembledOperator(reduced, "dg", space, A, cfg, full)


def load_vector(space, f, quad_order=None, reduced=True):
    """F[i] = (f, phi_i) by cell quadrature, restricted to free DOFs by default."""
    from .fe_space import sample_field

    quad = space.cell_quadrature(quad_order, hessians=False)
    fq = sample_field(f, quad.points)
    local = np.einsum("cq,cq,qi->ci", quad.weights, fq, quad.values)
    out = np.zeros(space.n_dofs)
    np.add.at(out, space.cell_dofs, local)
    return out[space.free_dofs] if reduced else out


def adjoint(op):
    """Transpose of a non-divergence operator: (L_h^* v, w) = (L_h w, v)."""
    flip = {"nondiv": "adjoint-nondiv", "adjoint-nondiv": "nondiv"}
    if op.kind not in flip:
        raise ValueError(f"adjoint is defined for the nondiv kind only, got {op.kind!r}")
    full = None if op.full is None else op.full.T.tocsr()
    mat = op.matrix.T.tocsr()
    mat.sort_indices()
    return AssembledOperator(mat, flip[op.kind], op.space, op.coefficient, op.dg_config, full)


def write_matrix(op, path):
    """Coordinate text export: header ``% rows cols nnz``, then ``i j value`` (0-based)."""
    coo = op.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v:.17g}\n")
