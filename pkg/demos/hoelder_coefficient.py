"""
A merely Hoelder continuous coefficient
=======================================

The field A(x) = I + 0.5 |x - c|^alpha diag(1, -1) is continuous but not
differentiable at the center c, which is the setting the method is built for.
"""
import numpy as np

from nondivfem import build_space, error_norms, get_problem, solve, unit_square_mesh, verify_ellipticity
from nondivfem.cli import eoc

for alpha in (0.9, 0.5, 0.2):
    problem = get_problem("hoelder-sin", alpha=alpha)
    lo, hi = verify_ellipticity(problem.coefficient)
    hs, h1 = [], []
    for n in (8, 16, 32):
        space = build_space(unit_square_mesh(n), 1)
        h1.append(error_norms(problem, solve(problem, space).solution).h1)
        hs.append(space.mesh.h_max)
    print(f"alpha={alpha}: eigenvalues in [{lo:.3f}, {hi:.3f}], H1 rates {np.round(eoc(h1, hs), 3)}")

# A rougher exact solution lowers the rate to what its regularity allows.
problem = get_problem("hoelder-rough", alpha=0.5, beta=0.3)
hs, h1 = [], []
for n in (8, 16, 32):
    space = build_space(unit_square_mesh(n), 2)
    h1.append(error_norms(problem, solve(problem, space).solution).h1)
    hs.append(space.mesh.h_max)
print(f"rough solution, r=2: H1 rates {np.round(eoc(h1, hs), 3)}")
