import math

import numpy as np
import pytest
import scipy.sparse as sp

from nondivfem.coefficients import constant_A, hoelder_A, identity_A, smooth_A
from nondivfem.fe_space import build_dg_space, build_space, cell_values, interpolate
from nondivfem.mesh import unit_square_mesh
from nondivfem.norms import dual_norm_hm1
from nondivfem.operator import (
    DGConfig,
    adjoint,
    assemble_broken_h2,
    assemble_dg,
    assemble_divform,
    assemble_flux_jumps,
    assemble_mass,
    assemble_nondiv,
    assemble_stiffness,
    load_vector,
    write_matrix,
)
from nondivfem.coefficients import get_problem
from nondivfem.solver import solve, solve_dg

SPD = [identity_A(), constant_A([[2, 1], [1, 2]]), constant_A([[1.0, -0.3], [-0.3, 0.5]])]


def maxabs(m):
    return abs(m).max() if sp.issparse(m) else np.abs(m).max()


def sin2(p):
    return np.sin(math.pi * p[..., 0]) * np.sin(math.pi * p[..., 1])


@pytest.mark.parametrize("A", SPD, ids=lambda a: a.name)
@pytest.mark.parametrize("r", [1, 2, 3])
def test_constant_coefficient_equivalence(A, r):
    s = build_space(unit_square_mesh(4), r)
    B, K = assemble_nondiv(s, A).matrix, assemble_divform(s, A).matrix
    assert maxabs(B - K) <= 1e-11 * maxabs(K)


def test_linear_elements_pure_jump():
    s = build_space(unit_square_mesh(4), 1)
    A = smooth_A()
    assert not np.any(s.cell_quadrature().hessians)
    B = assemble_nondiv(s, A)
    E = assemble_flux_jumps(s, A)
    assert maxabs(B.full - E.full) <= 1e-14 * maxabs(E.full)


def test_two_by_two_p1_entry():
    s = build_space(unit_square_mesh(2), 1)
    B = assemble_nondiv(s, identity_A()).matrix.toarray()
    K = assemble_divform(s, identity_A())
    assert B.shape == (1, 1)
    assert B[0, 0] == pytest.approx(4.0, abs=1e-13)
    # unreduced P1 stiffness row of the centre vertex: 4 on the diagonal, -1 to the axis neighbours
    row = K.full.toarray()[4]
    expected = np.zeros(9)
    expected[[1, 3, 5, 7]] = -1.0
    expected[4] = 4.0
    np.testing.assert_allclose(row, expected, atol=1e-13)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_gram_matrices(r):
    s = build_space(unit_square_mesh(3), r)
    M, K = assemble_mass(s), assemble_stiffness(s)
    for op in (M, K):
        assert maxabs(op.matrix - op.matrix.T) <= 1e-13
        np.linalg.cholesky(op.matrix.toarray())
    assert M.full.sum() == pytest.approx(1.0, abs=1e-13)
    assert maxabs(K.matrix - assemble_divform(s, identity_A()).matrix) == 0.0


def test_divform_symmetric_positive():
    s = build_space(unit_square_mesh(4), 2)
    K = assemble_divform(s, smooth_A()).matrix
    assert maxabs(K - K.T) <= 1e-13
    assert np.linalg.eigvalsh(K.toarray())[0] > 0


def flip_random(mesh, seed):
    rng = np.random.default_rng(seed)
    return mesh.with_flipped_edges(rng.random(len(mesh.interior_edges)) < 0.5)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_orientation_invariance(r):
    mesh = unit_square_mesh(8)
    flipped = flip_random(mesh, r)
    A = hoelder_A(0.5)
    s, t = build_space(mesh, r), build_space(flipped, r)
    for build in (lambda sp_: assemble_nondiv(sp_, A), lambda sp_: assemble_flux_jumps(sp_, A)):
        assert maxabs(build(s).full - build(t).full) <= 1e-13
    for eps in (1, 0, -1):
        d1 = assemble_dg(mesh, r, A, DGConfig(eps)).matrix
        d2 = assemble_dg(flipped, r, A, DGConfig(eps)).matrix
        assert maxabs(d1 - d2) <= 1e-13
    g1, g2 = assemble_broken_h2(s).full, assemble_broken_h2(t).full
    assert maxabs(g1 - g2) <= 1e-13


@pytest.mark.parametrize("c", [2.0, 0.5, 4.0])
def test_scaling_exact(c):
    s = build_space(unit_square_mesh(3), 2)
    A = smooth_A()
    B = assemble_nondiv(s, A).matrix
    Bc = assemble_nondiv(s, A.scaled(c)).matrix
    np.testing.assert_array_equal(Bc.toarray(), c * B.toarray())


@pytest.mark.parametrize("r", [2, 3])
def test_edge_term_consistency_rate(r):
    # the flux jumps of the interpolant of a C^1 field vanish in the H^{-1}_h sense at rate >= r - 1
    vals, hs = [], []
    for n in (4, 8, 16):
        s = build_space(unit_square_mesh(n), r)
        E = assemble_flux_jumps(s, smooth_A())
        K = assemble_stiffness(s)
        vals.append(dual_norm_hm1(E.matrix @ interpolate(s, sin2).free_values, K))
        hs.append(s.mesh.h_max)
    rates = np.log(np.array(vals[:-1]) / vals[1:]) / np.log(np.array(hs[:-1]) / hs[1:])
    assert np.all(rates >= r - 1 - 0.2), rates


def test_dg_symmetric_for_sipg():
    B = assemble_dg(unit_square_mesh(4), 2, identity_A(), DGConfig(1, 10.0)).matrix
    assert maxabs(B - B.T) <= 1e-12 * max(1.0, maxabs(B))
    B0 = assemble_dg(unit_square_mesh(4), 2, identity_A(), DGConfig(0, 10.0)).matrix
    assert maxabs(B0 - B0.T) > 1e-3


def test_dg_linear_in_epsilon():
    mesh = unit_square_mesh(3)
    A = smooth_A()
    b1, b0, bm = (assemble_dg(mesh, 2, A, DGConfig(e)).matrix for e in (1, 0, -1))
    adj = b0 - b1  # the adjoint-consistency term, entering as -epsilon * adj
    assert maxabs(adj) > 0
    assert maxabs((bm - b0) - adj) <= 1e-12 * maxabs(b0)
    assert maxabs((bm - b1) - 2 * adj) <= 1e-12 * maxabs(b0)


@pytest.mark.parametrize("bad", [2, 0.5, -2])
def test_dg_bad_epsilon(bad):
    with pytest.raises(ValueError):
        DGConfig(bad)
    with pytest.raises(ValueError):
        DGConfig(1, 0.0)


def test_dg_penalty_drives_to_conforming():
    problem = get_problem("identity-sin")
    mesh = unit_square_mesh(8)
    c0 = solve(problem, build_space(mesh, 2)).solution
    dists = []
    for g in (10.0, 100.0, 1000.0):
        dg = solve_dg(problem, mesh, 2, DGConfig(1, g)).solution
        q = c0.space.cell_quadrature(8, hessians=False)
        qd = dg.space.cell_quadrature(8, hessians=False)
        d = cell_values(c0, q) - cell_values(dg, qd)
        dists.append(math.sqrt(np.sum(q.weights * d**2)))
    assert dists[0] > dists[1] > dists[2]


def test_load_vector():
    s = build_space(unit_square_mesh(4), 2)
    assert np.all(load_vector(s, lambda p: np.zeros(p.shape[:-1])) == 0)
    assert load_vector(s, lambda p: np.ones(p.shape[:-1]), reduced=False).sum() == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("r", [2, 3])
def test_load_vector_against_refined_quadrature(r):
    f = lambda p: 2 * math.pi**2 * sin2(p)
    s = build_space(unit_square_mesh(16), r)
    assert np.abs(load_vector(s, f) - load_vector(s, f, quad_order=30)).max() <= 1e-10


def test_adjoint():
    s = build_space(unit_square_mesh(4), 2)
    B = assemble_nondiv(s, hoelder_A(0.5))
    Bt = adjoint(B)
    assert Bt.kind == "adjoint-nondiv"
    assert maxabs(adjoint(Bt).matrix - B.matrix) == 0
    rng = np.random.default_rng(0)
    v, w = rng.standard_normal((2, s.n_free))
    assert abs(v @ (Bt.matrix @ w) - w @ (B.matrix @ v)) <= 1e-13 * max(1.0, abs(w @ (B.matrix @ v)))
    Bc = assemble_nondiv(s, constant_A([[2, 1], [1, 2]]))
    assert maxabs(adjoint(Bc).matrix - Bc.matrix) <= 1e-12
    with pytest.raises(ValueError):
        adjoint(assemble_mass(s))


def test_write_matrix(tmp_path):
    s = build_space(unit_square_mesh(2), 2)
    B = assemble_nondiv(s, identity_A())
    path = tmp_path / "B.txt"
    write_matrix(B, path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"% {s.n_free} {s.n_free} {B.matrix.nnz}"
    rebuilt = np.zeros((s.n_free, s.n_free))
    for line in lines[1:]:
        i, j, v = line.split()
        rebuilt[int(i), int(j)] = float(v)
    np.testing.assert_array_equal(rebuilt, B.matrix.toarray())
