"""Gauss-Legendre quadrature rules on the reference interval and square.

All rules live on [0,1] (interval) or [0,1]^2 (cell); weights sum to the
reference measure 1.  An n-point 1D rule integrates polynomials of degree
up to 2n-1 exactly.
"""

from dataclasses import dataclass

import numpy as np

MAX_POINTS_1D = 20


@dataclass(frozen=True)
class QuadratureRule:
    """Points (n, d) in reference coordinates and positive weights (n,)."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return self.weights.shape[0]


def gauss_1d(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [0,1], exact for degree <= 2n-1."""
    if not 1 <= n <= MAX_POINTS_1D:
        raise ValueError(f"gauss_1d point count must be in [1, {MAX_POINTS_1D}], got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    points = ((x + 1.0) / 2.0).reshape(-1, 1)
    weights = w / 2.0
    return QuadratureRule(points=points, weights=weights)


def _check_degree(k: int) -> None:
    if not 1 <= k <= 3:
        raise ValueError(f"element degree must be 1, 2 or 3, got {k}")


def edge_rule(k: int) -> QuadratureRule:
    """Edge rule for degree-k elements: k+2 points, exact to degree 2k+3."""
    _check_degree(k)
    return gauss_1d(k + 2)


def cell_rule(k: int) -> QuadratureRule:
    """Tensor rule with k+2 points per direction on [0,1]^2.

    Exact for polynomials of partial degree up to 2k+3, which covers
    products of two degree-(k+1) velocity components.
    """
    _check_degree(k)
    line = gauss_1d(k + 2)
    t = line.points[:, 0]
    w = line.weights
    X, Y = np.meshgrid(t, t, indexing="ij")
    WX, WY = np.meshgrid(w, w, indexing="ij")
    points = np.column_stack([X.ravel(), Y.ravel()])
    weights = (WX * WY).ravel()
    return QuadratureRule(points=points, weights=weights)


def tensor_rule(n: int) -> QuadratureRule:
    """n x n tensor Gauss rule on [0,1]^2 for arbitrary point counts."""
    line = gauss_1d(n)
    t = line.points[:, 0]
    w = line.weights
    X, Y = np.meshgrid(t, t, indexing="ij")
    WX, WY = np.meshgrid(w, w, indexing="ij")
    return QuadratureRule(
        points=np.column_stack([X.ravel(), Y.ravel()]),
        weights=(WX * WY).ravel(),
    )
