"""Quadrature rules on the reference triangle and the unit interval.

Triangle rules are collapsed (Duffy) tensor products of Gauss-Legendre
rules, so every weight is positive and any exactness degree is available.
"""
from dataclasses import dataclass

import numpy as np

MAX_ORDER = 40


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on a reference domain.

    For triangles ``points`` are Cartesian coordinates on the reference
    triangle with vertices (0, 0), (1, 0), (0, 1); for edges they are the
    parameter values in [0, 1].
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def _gauss_01(npts):
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _check_order(order):
    if not isinstance(order, (int, np.integer)) or order < 0 or order > MAX_ORDER:
        raise ValueError(f"unsupported quadrature order {order!r} (0..{MAX_ORDER})")


def quad_edge(order):
    """Gauss-Legendre rule on [0, 1] exact for polynomials of degree ``order``."""
    _check_order(order)
    npts = order // 2 + 1
    x, w = _gauss_01(npts)
    return QuadratureRule(x, w, int(order))


def quad_triangle(order):
    """Rule on the reference triangle exact for polynomials of total degree ``order``.

    The map (s, t) -> (s (1 - t), t) has Jacobian (1 - t), which adds one to
    the degree in t; hence ceil((order + 2) / 2) Gauss points per direction.
    """
    _check_order(order)
    npts = (order + 2) // 2 + ((order + 2) % 2)
    npts = max(npts, 1)
    s, ws = _gauss_01(npts)
    t, wt = _gauss_01(npts)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt) * (1.0 - T)
    pts = np.column_stack([(S * (1.0 - T)).ravel(), T.ravel()])
    return QuadratureRule(pts, W.ravel(), int(order))
