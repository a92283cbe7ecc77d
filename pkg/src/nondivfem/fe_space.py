"""Lagrange finite element spaces of degree 1 to 3 on triangles.

Global numbering: vertex nodes first, then ``r - 1`` nodes per edge, then
interior nodes cell by cell. Edge nodes are ordered from the lower to the
higher global vertex index, so neighbouring cells agree on shared nodes.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quadrature import quad_edge, quad_triangle

SUPPORTED_DEGREES = (1, 2, 3)


class EvaluationError(ValueError):
    """A sampled field returned a non-finite value."""


def _exponents(r):
    return [(a, k - a) for k in range(r + 1) for a in range(k, -1, -1)]


def _monomial_table(points, r, dx=0, dy=0):
    """Derivatives d^dx/dx d^dy/dy of every monomial x^a y^b, a + b <= r."""
    points = np.asarray(points, dtype=float)
    x, y = points[..., 0], points[..., 1]
    cols = []
    for a, b in _exponents(r):
        if a < dx or b < dy:
            cols.append(np.zeros_like(x))
            continue
        ca = np.prod(np.arange(a - dx + 1, a + 1)) if dx else 1.0
        cb = np.prod(np.arange(b - dy + 1, b + 1)) if dy else 1.0
        cols.append(ca * cb * x ** (a - dx) * y ** (b - dy))
    return np.stack(cols, axis=-1)


class LagrangeElement:
    """Degree-``r`` Lagrange element on the reference triangle (0,0), (1,0), (0,1).

    Local nodes: the three vertices, ``r - 1`` equispaced nodes on each of
    the edges v0->v1, v1->v2, v2->v0, then interior nodes.
    """

    def __init__(self, degree):
        if degree not in SUPPORTED_DEGREES:
            raise ValueError(f"unsupported polynomial degree {degree!r}; expected one of {SUPPORTED_DEGREES}")
        self.degree = r = degree
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        nodes = list(corners)
        for k in range(3):
            a, b = corners[k], corners[(k + 1) % 3]
            nodes += [a + (i / r) * (b - a) for i in range(1, r)]
        nodes += [np.array([i / r, j / r]) for j in range(1, r) for i in range(1, r - j)]
        self.nodes = np.array(nodes)
        self.n_local = len(self.nodes)
        self.n_edge_interior = r - 1
        self.n_cell_interior = (r - 1) * (r - 2) // 2
        self._coeffs = np.linalg.inv(_monomial_table(self.nodes, r))

    def values(self, points):
        return _monomial_table(points, self.degree) @ self._coeffs

    def gradients(self, points):
        """Reference gradients, shape ``points.shape[:-1] + (n_local, 2)``."""
        r = self.degree
        gx = _monomial_table(points, r, 1, 0) @ self._coeffs
        gy = _monomial_table(points, r, 0, 1) @ self._coeffs
        return np.stack([gx, gy], axis=-1)

    def hessians(self, points):
        r = self.degree
        hxx = _monomial_table(points, r, 2, 0) @ self._coeffs
        hxy = _monomial_table(points, r, 1, 1) @ self._coeffs
        hyy = _monomial_table(points, r, 0, 2) @ self._coeffs
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)


@lru_cache(maxsize=None)
def lagrange_element(degree):
    return LagrangeElement(degree)


@dataclass(frozen=True)
class CellQuadrature:
    """Basis data at the quadrature points of every cell.

    ``points`` (M, nq, 2) physical; ``weights`` (M, nq) include |det J|;
    ``values`` (nq, nloc); ``grads`` (M, nq, nloc, 2); ``hessians``
    (M, nq, nloc, 2, 2) or None.
    """

    points: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    hessians: np.ndarray


@dataclass(frozen=True)
class EdgeTraces:
    """Traces of the local basis of ``cells`` at physical edge points."""

    cells: np.ndarray
    values: np.ndarray  # (E, nq, nloc)
    grads: np.ndarray  # (E, nq, nloc, 2)


@dataclass(frozen=True, eq=False)
class FESpace:
    """Lagrange space of degree ``degree`` over ``mesh``.

    With ``discontinuous=True`` every cell owns its nodes (the broken space
    used by the interior penalty method) and no node is Dirichlet-flagged.
    """

    mesh: object
    degree: int
    dof_points: np.ndarray
    cell_dofs: np.ndarray
    boundary_mask: np.ndarray
    discontinuous: bool = False

    @property
    def element(self):
        return lagrange_element(self.degree)

    @property
    def n_dofs(self):
        return len(self.dof_points)

    @cached_property
    def free_dofs(self):
        return np.flatnonzero(~self.boundary_mask)

    @property
    def n_free(self):
        return len(self.free_dofs)

    @cached_property
    def inverse_jacobians(self):
        return np.linalg.inv(self.mesh.jacobians)

    def physical_gradients(self, ref_grads):
        """Map reference gradients (M, nq, nloc, 2) with J^{-T}."""
        return np.einsum("cji,cqkj->cqki", self.inverse_jacobians, ref_grads)

    def physical_hessians(self, ref_hess):
        jinv = self.inverse_jacobians
        return np.einsum("cai,cqkab,cbj->cqkij", jinv, ref_hess, jinv)

    def cell_quadrature(self, order=None, hessians=True):
        if order is None:
            order = 2 * self.degree + 2
        rule = quad_triangle(order)
        el = self.element
        mesh = self.mesh
        v0 = mesh.vertices[mesh.cells[:, 0]]
        pts = v0[:, None, :] + np.einsum("cij,qj->cqi", mesh.jacobians, rule.points)
        weights = np.outer(2.0 * mesh.areas, rule.weights)
        ref_grads = np.broadcast_to(el.gradients(rule.points), (mesh.n_cells,) + (len(rule), el.n_local, 2))
        grads = self.physical_gradients(ref_grads)
        hess = None
        if hessians:
            ref_h = np.broadcast_to(el.hessians(rule.points), (mesh.n_cells, len(rule), el.n_local, 2, 2))
            hess = self.physical_hessians(ref_h)
        return CellQuadrature(pts, weights, el.values(rule.points), grads, hess)

    def to_reference(self, cells, points):
        """Reference coordinates of physical ``points`` (E, nq, 2) in ``cells`` (E,)."""
        v0 = self.mesh.vertices[self.mesh.cells[cells, 0]]
        return np.einsum("eij,eqj->eqi", self.inverse_jacobians[cells], points - v0[:, None, :])

    def edge_traces(self, cells, points):
        ref = self.to_reference(cells, points)
        el = self.element
        vals = el.values(ref)
        ref_grads = el.gradients(ref)
        grads = np.einsum("eji,eqkj->eqki", self.inverse_jacobians[cells], ref_grads)
        return EdgeTraces(np.asarray(cells), vals, grads)

    def zero(self):
        return FEFunction(self, np.zeros(self.n_dofs))

    def from_free(self, values):
        """Embed a vector over free DOFs as a function vanishing on boundary nodes."""
        coeffs = np.zeros(self.n_dofs)
        coeffs[self.free_dofs] = values
        return FEFunction(self, coeffs)


def edge_points(mesh, vertex_pairs, order):
    """Physical Gauss points (E, nq, 2) and weights (E, nq) on the given edges."""
    rule = quad_edge(order)
    a = mesh.vertices[vertex_pairs[:, 0]]
    b = mesh.vertices[vertex_pairs[:, 1]]
    pts = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    length = np.linalg.norm(b - a, axis=1)
    return pts, np.outer(length, rule.weights)


def build_space(mesh, r):
    """Continuous degree-``r`` Lagrange space with Dirichlet flags on boundary nodes."""
    el = lagrange_element(r)  # validates r
    sk = mesh.skeleton
    nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    ke, ki = el.n_edge_interior, el.n_cell_interior
    n_dofs = nv + ne * ke + nc * ki

    cell_dofs = np.empty((nc, el.n_local), dtype=np.int64)
    cell_dofs[:, :3] = mesh.cells
    col = 3
    for k in range(3):
        a = mesh.cells[:, k]
        b = mesh.cells[:, (k + 1) % 3]
        base = nv + sk.cell_edges[:, k] * ke
        forward = a < b
        for i in range(ke):
            cell_dofs[:, col + i] = np.where(forward, base + i, base + ke - 1 - i)
        col += ke
    if ki:
        cell_dofs[:, col:] = nv + ne * ke + np.arange(nc)[:, None] * ki + np.arange(ki)

    dof_points = np.empty((n_dofs, 2))
    v0 = mesh.vertices[mesh.cells[:, 0]]
    local_pts = v0[:, None, :] + np.einsum("cij,kj->cki", mesh.jacobians, el.nodes)
    dof_points[cell_dofs.ravel()] = local_pts.reshape(-1, 2)

    boundary = np.zeros(n_dofs, dtype=bool)
    boundary[:nv] = mesh.boundary_vertex_mask()
    if ke:
        bedge = sk.boundary
        boundary[(nv + bedge[:, None] * ke + np.arange(ke)).ravel()] = True
    return FESpace(mesh, r, dof_points, cell_dofs, boundary)


def build_dg_space(mesh, r):
    """Broken degree-``r`` space: ``n_local`` private nodes per cell, none constrained."""
    el = lagrange_element(r)
    nc = mesh.n_cells
    cell_dofs = np.arange(nc * el.n_local).reshape(nc, el.n_local)
    v0 = mesh.vertices[mesh.cells[:, 0]]
    pts = v0[:, None, :] + np.einsum("cij,kj->cki", mesh.jacobians, el.nodes)
    return FESpace(mesh, r, pts.reshape(-1, 2), cell_dofs, np.zeros(nc * el.n_local, dtype=bool), True)


@dataclass(frozen=True, eq=False)
class FEFunction:
    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != self.space.n_dofs:
            raise ValueError("coefficient vector length does not match the space")

    def __add__(self, other):
        return FEFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return FEFunction(self.space, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return FEFunction(self.space, c * self.coeffs)

    __rmul__ = __mul__

    @property
    def free_values(self):
        return self.coeffs[self.space.free_dofs]

    def local_coeffs(self, cells=None):
        cd = self.space.cell_dofs if cells is None else self.space.cell_dofs[cells]
        return self.coeffs[cd]

    def eval(self, cell, point):
        return eval(self, cell, point)

    def eval_gradient(self, cell, point):
        return eval_gradient(self, cell, point)

    def eval_hessian(self, cell, point):
        return eval_hessian(self, cell, point)


def eval(f, cell, point):  # noqa: A001 - mirrors the FEFunction method
    """Value of ``f`` at reference ``point`` of ``cell``."""
    phi = f.space.element.values(np.asarray(point, dtype=float))
    return float(phi @ f.local_coeffs(cell))


def eval_gradient(f, cell, point):
    g = f.space.element.gradients(np.asarray(point, dtype=float))
    ref = f.local_coeffs(cell) @ g
    return f.space.inverse_jacobians[cell].T @ ref


def eval_hessian(f, cell, point):
    """Broken Hessian of ``f`` on ``cell``; identically zero for r = 1."""
    h = f.space.element.hessians(np.asarray(point, dtype=float))
    ref = np.einsum("k,kij->ij", f.local_coeffs(cell), h)
    jinv = f.space.inverse_jacobians[cell]
    return jinv.T @ ref @ jinv


def sample_field(g, points):
    """Evaluate a field ``g(points) -> values`` and reject non-finite output."""
    vals = np.asarray(g(points), dtype=float)
    if not np.all(np.isfinite(vals)):
        bad = np.argwhere(~np.isfinite(vals))[0]
        raise EvaluationError(f"field is not finite at {np.asarray(points)[tuple(bad)]}")
    return vals


def interpolate(space, g, dirichlet=True):
    """Nodal interpolant of ``g``.

    ``g`` is a callable on (N, 2) point arrays or an FEFunction of ``space``.
    With ``dirichlet`` the boundary nodes are set to zero.
    """
    if isinstance(g, FEFunction):
        if g.space is not space:
            raise ValueError("FEFunction belongs to a different space")
        coeffs = g.coeffs.copy()
    else:
        coeffs = sample_field(g, space.dof_points).copy()
    if dirichlet:
        coeffs[space.boundary_mask] = 0.0
    return FEFunction(space, coeffs)


def cell_values(f, quad):
    """Values (M, nq) of an FEFunction at the points of a CellQuadrature."""
    return f.local_coeffs() @ quad.values.T


def cell_gradients(f, quad):
    return np.einsum("ck,cqki->cqi", f.local_coeffs(), quad.grads)


def cell_hessians(f, quad):
    return np.einsum("ck,cqkij->cqij", f.local_coeffs(), quad.hessians)


def _scatter_cells(space, local, cells):
    cd = space.cell_dofs[cells]
    nloc = cd.shape[1]
    rows = np.repeat(cd, nloc, axis=1).ravel()
    cols = np.tile(cd, (1, nloc)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.n_dofs,) * 2).tocsr()


def subdomain_dofs(space, cells):
    """Free DOFs whose basis function is supported inside the cell set."""
    inside = np.zeros(space.mesh.n_cells, dtype=bool)
    inside[cells] = True
    outside_dofs = np.unique(space.cell_dofs[~inside])
    ok = np.zeros(space.n_dofs, dtype=bool)
    ok[np.unique(space.cell_dofs[inside])] = True
    ok[outside_dofs] = False
    ok &= ~space.boundary_mask
    return np.flatnonzero(ok)


def l2_project(space, w, subdomain=None, quad_order=None):
    """L2 projection onto the functions of ``space`` supported in ``subdomain``.

    ``subdomain`` is a collection of cell indices (default: all cells).
    Returns the projection as an FEFunction that vanishes off its DOFs.
    """
    order = 2 * space.degree + 2 if quad_order is None else quad_order
    mesh = space.mesh
    cells = np.arange(mesh.n_cells) if subdomain is None else np.unique(np.asarray(subdomain, dtype=np.int64))
    if cells.size == 0:
        raise ValueError("empty subdomain")
    dofs = subdomain_dofs(space, cells)
    if dofs.size == 0:
        raise ValueError("subdomain supports no finite element functions")
    quad = space.cell_quadrature(order, hessians=False)
    if isinstance(w, FEFunction):
        if w.space.mesh is not mesh:
            raise ValueError("FEFunction lives on a different mesh")
        wq = w.local_coeffs() @ w.space.cell_quadrature(order, hessians=False).values.T
    else:
        wq = sample_field(w, quad.points)
    wq = wq[cells]
    wts = quad.weights[cells]
    local_m = np.einsum("cq,qi,qj->cij", wts, quad.values, quad.values)
    mass = _scatter_cells(space, local_m, cells)
    local_f = np.einsum("cq,cq,qi->ci", wts, wq, quad.values)
    rhs = np.zeros(space.n_dofs)
    np.add.at(rhs, space.cell_dofs[cells], local_f)
    coeffs = np.zeros(space.n_dofs)
    coeffs[dofs] = spla.spsolve(mass[dofs][:, dofs].tocsc(), rhs[dofs])
    return FEFunction(space, coeffs)
