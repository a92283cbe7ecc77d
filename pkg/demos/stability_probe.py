"""
Measuring the discrete stability constant
=========================================

The probe computes min ||L_h w|| / ||w|| over the finite element space as a
generalized singular value. For A = I it is exactly one; for variable
coefficients it should settle to a positive value under refinement.
"""
from nondivfem import build_space, hoelder_A, identity_A, smooth_A, stability_probe, unit_square_mesh

for A in (identity_A(), smooth_A(), hoelder_A(0.5)):
    print(A.name)
    for n in (4, 8, 16):
        rep = stability_probe(build_space(unit_square_mesh(n), 1), A)
        print(f"  n={n:3d}  sigma_h1={rep.sigma_h1:.4f}  sigma_h2={rep.sigma_h2:.4f}  adjoint={rep.sigma_adjoint:.4f}")

# The adjoint column repeats the primal one: both use the stiffness Gram
# matrix on each side, and a matrix and its transpose share singular values.
