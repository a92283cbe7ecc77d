"""
Interior penalty DG: the role of epsilon
========================================

Setting epsilon = 1 gives the symmetric variant, 0 the incomplete one and
-1 the non-symmetric one. All of them converge at the optimal rate in H1;
only the symmetric variant also reaches the optimal L2 rate.
"""
from nondivfem import DGConfig, error_norms, get_problem, solve_dg, unit_square_mesh
from nondivfem.cli import eoc

problem = get_problem("identity-sin")
levels = [4, 8, 16, 32]

for eps in (1, 0, -1):
    hs, l2, h1 = [], [], []
    for n in levels:
        result = solve_dg(problem, unit_square_mesh(n), 2, DGConfig(eps, 10.0))
        err = error_norms(problem, result.solution)
        hs.append(result.solution.space.mesh.h_max)
        l2.append(err.l2)
        h1.append(err.h1)
    print(f"epsilon={eps:+d}  H1 rates {[round(x, 2) for x in eoc(h1, hs)]}  L2 rates {[round(x, 2) for x in eoc(l2, hs)]}")
