"""C0 and interior penalty finite elements for -A:D^2 u = f in two dimensions."""
from .coefficients import (
    CoefficientField,
    ManufacturedProblem,
    constant_A,
    get_problem,
    hoelder_A,
    identity_A,
    make_problem,
    smooth_A,
    verify_ellipticity,
)
from .fe_space import FEFunction, FESpace, build_dg_space, build_space, interpolate, l2_project
from .mesh import Mesh, convex_polygon_mesh, refine_uniform, unit_square_mesh
from .norms import ErrorTriple, dual_norm_hm1, dual_norm_l2h, error_norms, operator_dual_norm
from .operator import (
    DGConfig,
    adjoint,
    assemble_broken_h2,
    assemble_dg,
    assemble_divform,
    assemble_mass,
    assemble_nondiv,
    assemble_stiffness,
    load_vector,
)
from .solver import galerkin_residual, invertibility_check, solve, solve_dg, stability_probe

__version__ = "0.1.0"
