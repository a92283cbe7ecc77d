"""Triangulations of convex polygons with an oriented edge skeleton.

Interior edges carry the orientation used by every jump term: ``t_plus`` is
the incident cell with the smaller index and the unit normal points from
``t_plus`` into ``t_minus``.
"""
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np


class TopologyError(ValueError):
    """Raised for meshes that are not consistently oriented 2-manifolds."""


@dataclass(frozen=True)
class InteriorEdge:
    endpoints: tuple
    t_plus: int
    t_minus: int
    normal: np.ndarray
    length: float


@dataclass(frozen=True, eq=False)
class EdgeSkeleton:
    """Array form of the edge skeleton.

    ``interior_vertices[k]`` lists the endpoints of interior edge ``k`` in the
    counterclockwise order of its ``t_plus`` cell, ``interior_cells[k]`` is
    ``(t_plus, t_minus)``. Boundary edges are stored the same way with a single
    cell and the outward normal.
    """

    edges: np.ndarray  # (E, 2) sorted vertex pairs, all edges
    cell_edges: np.ndarray  # (M, 3) local edge k joins local vertices k, k+1
    interior: np.ndarray  # (EI,) indices into ``edges``
    interior_vertices: np.ndarray
    interior_cells: np.ndarray
    interior_normals: np.ndarray
    interior_lengths: np.ndarray
    boundary: np.ndarray
    boundary_vertices: np.ndarray
    boundary_cells: np.ndarray
    boundary_normals: np.ndarray
    boundary_lengths: np.ndarray


def _outward_normals(vertices, a, b):
    d = vertices[b] - vertices[a]
    length = np.hypot(d[:, 0], d[:, 1])
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    return normal, length


def build_skeleton(vertices, cells):
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    m = len(cells)
    local_a = cells[:, [0, 1, 2]].ravel()
    local_b = cells[:, [1, 2, 0]].ravel()
    owner = np.repeat(np.arange(m), 3)

    # a consistently oriented manifold never traverses a directed edge twice
    directed = np.column_stack([local_a, local_b])
    _, dcount = np.unique(directed, axis=0, return_counts=True)
    if np.any(dcount > 1):
        raise TopologyError("directed edge used twice: duplicated or inconsistently oriented cells")

    pairs = np.sort(directed, axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise TopologyError("non-manifold edge shared by more than two cells")
    cell_edges = inverse.reshape(m, 3)

    # stable sort by edge id keeps cells in increasing index order per edge
    order = np.argsort(inverse, kind="stable")
    first = np.searchsorted(inverse[order], np.arange(len(edges)))
    slot_plus = order[first]

    interior = np.flatnonzero(counts == 2)
    boundary = np.flatnonzero(counts == 1)

    ip = slot_plus[interior]
    im = order[first[interior] + 1]
    i_vertices = np.column_stack([local_a[ip], local_b[ip]])
    i_cells = np.column_stack([owner[ip], owner[im]])
    i_normals, i_lengths = _outward_normals(vertices, i_vertices[:, 0], i_vertices[:, 1])

    bp = slot_plus[boundary]
    b_vertices = np.column_stack([local_a[bp], local_b[bp]])
    b_cells = owner[bp]
    b_normals, b_lengths = _outward_normals(vertices, b_vertices[:, 0], b_vertices[:, 1])

    return EdgeSkeleton(
        edges=edges,
        cell_edges=cell_edges,
        interior=interior,
        interior_vertices=i_vertices,
        interior_cells=i_cells,
        interior_normals=i_normals,
        interior_lengths=i_lengths,
        boundary=boundary,
        boundary_vertices=b_vertices,
        boundary_cells=b_cells,
        boundary_normals=b_normals,
        boundary_lengths=b_lengths,
    )


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation with counterclockwise cells."""

    vertices: np.ndarray
    cells: np.ndarray
    skeleton: EdgeSkeleton

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.skeleton.edges)

    @cached_property
    def jacobians(self):
        """Affine maps x = v0 + J xi, one 2x2 matrix per cell (columns v1-v0, v2-v0)."""
        v = self.vertices[self.cells]
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)

    @cached_property
    def areas(self):
        return 0.5 * np.linalg.det(self.jacobians)

    @cached_property
    def diameters(self):
        v = self.vertices[self.cells]
        d = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]], axis=1)
        return np.linalg.norm(d, axis=2).max(axis=1)

    @property
    def h_max(self):
        return float(self.diameters.max())

    @property
    def h_min(self):
        return float(self.diameters.min())

    @property
    def interior_edges(self):
        sk = self.skeleton
        return [
            InteriorEdge(
                endpoints=(int(a), int(b)),
                t_plus=int(cp),
                t_minus=int(cm),
                normal=n.copy(),
                length=float(ln),
            )
            for (a, b), (cp, cm), n, ln in zip(
                sk.interior_vertices, sk.interior_cells, sk.interior_normals, sk.interior_lengths
            )
        ]

    @property
    def boundary_edges(self):
        """List of ``((a, b), cell)`` pairs."""
        sk = self.skeleton
        return [((int(a), int(b)), int(c)) for (a, b), c in zip(sk.boundary_vertices, sk.boundary_cells)]

    def boundary_vertex_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.skeleton.boundary_vertices.ravel()] = True
        return mask

    def with_flipped_edges(self, flip):
        """Copy of the mesh with the orientation of selected interior edges reversed.

        ``flip`` is a boolean mask over interior edges. Flipped edges swap
        ``t_plus``/``t_minus``, reverse their endpoints and negate the normal.
        """
        flip = np.asarray(flip, dtype=bool)
        sk = self.skeleton
        verts = sk.interior_vertices.copy()
        verts[flip] = verts[flip][:, ::-1]
        cells = sk.interior_cells.copy()
        cells[flip] = cells[flip][:, ::-1]
        normals = sk.interior_normals.copy()
        normals[flip] *= -1.0
        return replace(
            self,
            skeleton=replace(sk, interior_vertices=verts, interior_cells=cells, interior_normals=normals),
        )


def make_mesh(vertices, cells):
    """Validate orientation and connectivity, then build the mesh."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise ValueError("vertices must have shape (N, 2)")
    if cells.ndim != 2 or cells.shape[1] != 3:
        raise ValueError("cells must have shape (M, 3)")
    if cells.min() < 0 or cells.max() >= len(vertices):
        raise ValueError("cell references a missing vertex")
    v = vertices[cells]
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    signed = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(signed <= 0.0):
        raise TopologyError("cells must have positive signed area (counterclockwise)")
    return Mesh(vertices, cells, build_skeleton(vertices, cells))


def build_interior_edges(mesh):
    """Rebuild the oriented interior skeleton of ``mesh`` from its cells."""
    return make_mesh(mesh.vertices, mesh.cells).interior_edges


def unit_square_mesh(n):
    """Structured mesh of (0, 1)^2, each square split along its lower-left to upper-right diagonal."""
    if int(n) != n or n < 1:
        raise ValueError(f"cells per side must be a positive integer, got {n!r}")
    n = int(n)
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    p00 = (j * (n + 1) + i).ravel()
    p10, p01 = p00 + 1, p00 + n + 1
    p11 = p01 + 1
    lower = np.column_stack([p00, p10, p11])
    upper = np.column_stack([p00, p11, p01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return make_mesh(vertices, cells)


def convex_polygon_mesh(corners, levels=0):
    """Fan triangulation of a convex polygon about its vertex centroid, refined ``levels`` times."""
    corners = np.asarray(corners, dtype=float)
    if len(corners) < 3:
        raise ValueError("a polygon needs at least three corners")
    k = len(corners)
    cross = []
    for i in range(k):
        a, b, c = corners[i], corners[(i + 1) % k], corners[(i + 2) % k]
        cross.append((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]))
    cross = np.array(cross)
    if np.all(cross < 0):
        corners = corners[::-1]
    elif not np.all(cross > 0):
        raise ValueError("polygon corners must describe a strictly convex polygon")
    vertices = np.vstack([corners, corners.mean(axis=0)])
    cells = np.array([[i, (i + 1) % k, k] for i in range(k)])
    mesh = make_mesh(vertices, cells)
    for _ in range(levels):
        mesh = refine_uniform(mesh)
    return mesh


def refine_uniform(mesh):
    """Split each triangle into four congruent children through its edge midpoints."""
    sk = mesh.skeleton
    nv = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[sk.edges[:, 0]] + mesh.vertices[sk.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])
    c = mesh.cells
    m01, m12, m20 = (nv + sk.cell_edges[:, k] for k in range(3))
    children = np.stack(
        [
            np.column_stack([c[:, 0], m01, m20]),
            np.column_stack([m01, c[:, 1], m12]),
            np.column_stack([m20, m12, c[:, 2]]),
            np.column_stack([m01, m12, m20]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return make_mesh(vertices, children)


def write_mesh(mesh, path):
    """Plain-text export: header ``vertices N cells M``, then coordinates, then 0-based cells."""
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices} cells {mesh.n_cells}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in mesh.cells:
            fh.write(f"{i} {j} {k}\n")


def read_mesh(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "vertices" or header[2] != "cells":
            raise ValueError(f"bad mesh header in {path}")
        nv, nc = int(header[1]), int(header[3])
        rows = [fh.readline().split() for _ in range(nv + nc)]
    vertices = np.array(rows[:nv], dtype=float).reshape(nv, 2)
    cells = np.array(rows[nv:], dtype=np.int64).reshape(nc, 3)
    return make_mesh(vertices, cells)
