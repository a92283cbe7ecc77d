"""
Convergence of the C0 method on a smooth coefficient
=====================================================

Solve -A:D^2 u = f on the unit square for a manufactured sine solution and
watch the errors fall as the mesh is refined.
"""
import numpy as np

from nondivfem import build_space, error_norms, get_problem, solve, unit_square_mesh
from nondivfem.cli import eoc

# The "smooth" coefficient has a non-constant, non-diagonal matrix field, so
# the problem cannot be rewritten in divergence form.
problem = get_problem("smooth-sin")

# Quadratic elements on four nested meshes.
degree = 2
levels = [4, 8, 16, 32]

hs, errors = [], []
for n in levels:
    space = build_space(unit_square_mesh(n), degree)
    result = solve(problem, space)
    err = error_norms(problem, result.solution)
    hs.append(space.mesh.h_max)
    errors.append(err)
    print(f"n={n:3d}  dofs={space.n_free:6d}  L2={err.l2:.3e}  H1={err.h1:.3e}  H2_h={err.h2_broken:.3e}")

# Observed orders between consecutive levels: about r+1, r and r-1.
for name in ("l2", "h1", "h2_broken"):
    rates = eoc([getattr(e, name) for e in errors], hs)
    print(f"{name:10s}", np.round(rates, 3))
