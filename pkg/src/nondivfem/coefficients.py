"""Coefficient fields, manufactured solutions and the problem catalog.

Every field takes an array of points with shape (..., 2). Coefficients
return (..., 2, 2) arrays, scalar fields (...,), gradients (..., 2) and
Hessians (..., 2, 2).
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ELLIPTICITY_TOL = 1e-10


class EllipticityError(ValueError):
    """Sampled eigenvalues of a coefficient leave the declared bounds."""


class InvalidProblemError(ValueError):
    """A manufactured solution violates the homogeneous Dirichlet condition."""


@dataclass(frozen=True)
class CoefficientField:
    evaluator: Callable
    lambda_min: float
    lambda_max: float
    smoothness_tag: str
    name: str = "custom"

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        return np.asarray(self.evaluator(points), dtype=float)

    @property
    def is_constant(self):
        return self.smoothness_tag == "constant"

    def scaled(self, c):
        if c <= 0:
            raise ValueError("scaling factor must be positive")
        ev = self.evaluator
        return CoefficientField(
            lambda p: c * ev(p), c * self.lambda_min, c * self.lambda_max, self.smoothness_tag, f"{c:g}*{self.name}"
        )


def _const(matrix):
    matrix = np.array(matrix, dtype=float)

    def evaluator(points):
        return np.broadcast_to(matrix, np.shape(points)[:-1] + (2, 2)).copy()

    return evaluator


def identity_A():
    return CoefficientField(_const(np.eye(2)), 1.0, 1.0, "constant", "identity")


def constant_A(matrix, name="constant"):
    m = np.array(matrix, dtype=float)
    if m.shape != (2, 2):
        raise ValueError("constant coefficient must be a 2x2 matrix")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-14):
        raise ValueError("constant coefficient must be symmetric")
    eig = np.linalg.eigvalsh(m)
    if eig[0] <= 0.0:
        raise ValueError(f"constant coefficient is not positive definite (eigenvalues {eig})")
    return CoefficientField(_const(m), float(eig[0]), float(eig[1]), "constant", name)


def smooth_A():
    """[[1 + sin(pi x) sin(pi y) / 2, xy / 10], [xy / 10, 1 + cos(pi x) cos(pi y) / 2]]."""

    def evaluator(p):
        x, y = p[..., 0], p[..., 1]
        a = np.empty(p.shape[:-1] + (2, 2))
        a[..., 0, 0] = 1.0 + 0.5 * np.sin(np.pi * x) * np.sin(np.pi * y)
        a[..., 1, 1] = 1.0 + 0.5 * np.cos(np.pi * x) * np.cos(np.pi * y)
        a[..., 0, 1] = a[..., 1, 0] = 0.1 * x * y
        return a

    # diagonal entries lie in [0.5, 1.5], |off-diagonal| <= 0.1 on the unit square
    return CoefficientField(evaluator, 0.4, 1.6, "smooth", "smooth")


def hoelder_A(alpha=0.5, center=(0.5, 0.5)):
    """I + rho^alpha / 2 * diag(1, -1), rho the distance to ``center``.

    Continuous but not Lipschitz at ``center`` for alpha < 1.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"Hoelder exponent must lie in (0, 1), got {alpha!r}")
    cx, cy = center

    def evaluator(p):
        rho = np.hypot(p[..., 0] - cx, p[..., 1] - cy)
        s = 0.5 * rho**alpha
        a = np.zeros(p.shape[:-1] + (2, 2))
        a[..., 0, 0] = 1.0 + s
        a[..., 1, 1] = 1.0 - s
        return a

    # on the unit square rho <= sqrt(1/2) < 1, so rho^alpha < 1
    return CoefficientField(evaluator, 0.5, 1.5, "hoelder", f"hoelder({alpha:g})")


def verify_ellipticity(A, resolution=64, lower=0.0, upper=1.0, tol=ELLIPTICITY_TOL):
    """Extremal eigenvalues of ``A`` on a uniform (resolution x resolution) grid.

    Raises EllipticityError when a sample leaves [lambda_min - tol, lambda_max + tol]
    or is not symmetric.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    t = np.linspace(lower, upper, resolution)
    X, Y = np.meshgrid(t, t, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    vals = A(pts)
    asym = np.abs(vals - np.swapaxes(vals, -1, -2)).max(axis=(-1, -2))
    if np.any(asym > 1e-14):
        k = int(np.argmax(asym))
        raise EllipticityError(f"coefficient not symmetric at {tuple(pts[k])}")
    eig = np.linalg.eigvalsh(vals)
    lo, hi = eig[:, 0], eig[:, 1]
    bad = np.flatnonzero((lo < A.lambda_min - tol) | (hi > A.lambda_max + tol))
    if bad.size:
        k = bad[0]
        raise EllipticityError(
            f"eigenvalues ({lo[k]:.6g}, {hi[k]:.6g}) at {tuple(pts[k])} outside "
            f"[{A.lambda_min:g}, {A.lambda_max:g}]"
        )
    return float(lo.min()), float(hi.max())


@dataclass(frozen=True)
class ExactField:
    """Scalar field with analytic gradient and Hessian."""

    name: str
    value: Callable
    gradient: Callable
    hessian: Callable
    regularity: float = np.inf

    def __call__(self, points):
        return self.value(np.asarray(points, dtype=float))


def sine_solution():
    """sin(pi x) sin(pi y)."""
    pi = np.pi

    def value(p):
        return np.sin(pi * p[..., 0]) * np.sin(pi * p[..., 1])

    def gradient(p):
        sx, sy = np.sin(pi * p[..., 0]), np.sin(pi * p[..., 1])
        cx, cy = np.cos(pi * p[..., 0]), np.cos(pi * p[..., 1])
        return pi * np.stack([cx * sy, sx * cy], axis=-1)

    def hessian(p):
        sx, sy = np.sin(pi * p[..., 0]), np.sin(pi * p[..., 1])
        cx, cy = np.cos(pi * p[..., 0]), np.cos(pi * p[..., 1])
        h = np.empty(p.shape[:-1] + (2, 2))
        h[..., 0, 0] = h[..., 1, 1] = -(pi**2) * sx * sy
        h[..., 0, 1] = h[..., 1, 0] = pi**2 * cx * cy
        return h

    return ExactField("sin", value, gradient, hessian, np.inf)


def _bubble_parts(p):
    x, y = p[..., 0], p[..., 1]
    gx, gy = x * (1 - x), y * (1 - y)
    dgx, dgy = 1 - 2 * x, 1 - 2 * y
    g = gx * gy
    grad = np.stack([dgx * gy, gx * dgy], axis=-1)
    hess = np.empty(p.shape[:-1] + (2, 2))
    hess[..., 0, 0] = -2 * gy
    hess[..., 1, 1] = -2 * gx
    hess[..., 0, 1] = hess[..., 1, 0] = dgx * dgy
    return g, grad, hess


def bubble_solution():
    """x (1 - x) y (1 - y)."""
    return ExactField(
        "bubble",
        lambda p: _bubble_parts(p)[0],
        lambda p: _bubble_parts(p)[1],
        lambda p: _bubble_parts(p)[2],
        np.inf,
    )


def rough_solution(beta=0.5):
    """(x (1 - x) y (1 - y))^(1 + beta), in H^s for s < 3/2 + beta.

    The returned ``regularity`` is that (non-sharp) index 3/2 + beta.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    a = 1.0 + beta

    def value(p):
        return _bubble_parts(p)[0] ** a

    def gradient(p):
        g, dg, _ = _bubble_parts(p)
        return a * (g ** (a - 1))[..., None] * dg

    def hessian(p):
        g, dg, hg = _bubble_parts(p)
        with np.errstate(divide="ignore", invalid="ignore"):
            outer = np.where(g > 0, a * (a - 1) * g ** (a - 2), 0.0)
        return outer[..., None, None] * dg[..., :, None] * dg[..., None, :] + (a * g ** (a - 1))[..., None, None] * hg

    return ExactField(f"rough({beta:g})", value, gradient, hessian, 1.5 + beta)


@dataclass(frozen=True)
class ManufacturedProblem:
    name: str
    coefficient: CoefficientField
    exact_u: ExactField
    regularity_s: float
    forcing: Callable = field(repr=False)


def boundary_samples(per_side=33):
    t = np.linspace(0.0, 1.0, per_side)
    z, o = np.zeros_like(t), np.ones_like(t)
    return np.concatenate(
        [np.column_stack([t, z]), np.column_stack([o, t]), np.column_stack([t, o]), np.column_stack([z, t])]
    )


def make_problem(name, A, u, check_boundary=True):
    """Bundle ``A`` and ``u`` with the forcing f = -A:D^2 u on the unit square."""
    if check_boundary:
        vals = np.abs(u(boundary_samples()))
        if vals.max() > 1e-12:
            raise InvalidProblemError(f"exact solution of {name!r} does not vanish on the boundary ({vals.max():.3g})")

    def forcing(points):
        points = np.asarray(points, dtype=float)
        return -np.einsum("...ij,...ij->...", A(points), u.hessian(points))

    return ManufacturedProblem(name, A, u, u.regularity, forcing)


COEFFICIENTS = {
    "identity": identity_A,
    "constant": lambda: constant_A([[2.0, 1.0], [1.0, 2.0]]),
    "smooth": smooth_A,
    "hoelder": hoelder_A,
}

SOLUTIONS = {
    "sin": sine_solution,
    "bubble": bubble_solution,
    "rough": rough_solution,
}


def problem_names():
    return [f"{a}-{u}" for a in COEFFICIENTS for u in SOLUTIONS]


def get_problem(name, alpha=0.5, beta=0.5, matrix=None):
    """Catalog lookup by ``<coefficient>-<solution>``, e.g. ``hoelder-sin``.

    ``alpha`` is the Hoelder exponent, ``beta`` the exponent of the rough
    solution, ``matrix`` overrides the entries of the constant coefficient.
    """
    try:
        coef_name, sol_name = name.split("-", 1)
        make_coef, make_sol = COEFFICIENTS[coef_name], SOLUTIONS[sol_name]
    except (ValueError, KeyError):
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(problem_names())}") from None
    if coef_name == "hoelder":
        A = hoelder_A(alpha)
    elif coef_name == "constant" and matrix is not None:
        A = constant_A(matrix)
    else:
        A = make_coef()
    u = rough_solution(beta) if sol_name == "rough" else make_sol()
    return make_problem(name, A, u)
