"""Explicit spline basis expansion and primal ridge, the slow reference route.

The kernel in :mod:`har.kernels` is the inner product of a finite expansion
anchored at the knot rows.  This module materializes that expansion so the
kernel and the dual solver can be checked against a literal primal
computation.  Everything here is deliberately small-scale: the dimension is
d = n * (2 + t)^p, and the guard refuses instances where that explodes.

Basis enumeration.  Each basis function is identified by a knot index i and a
per-dimension state vector sigma in {0, .., t+1}^p.  The factor contributed
by dimension j is

    sigma_j = 0      ->  1                      (dimension absent)
    sigma_j = tau    ->  x_j^tau / tau!         (monomial shell, 1 <= tau <= t)
    sigma_j = t + 1  ->  (x_j - X_ij)_+^t / t!  (hinge at the knot; at t = 0
                                                 the hinge is the indicator
                                                 1{X_ij <= x_j})

States are enumerated in base-(t+2) counter order with dimension 0 as the
least significant digit; knots in row order, states within each knot.  At
t = 0 this is exactly the binary-counter enumeration of subsets, and the
basis values are products of indicators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import (
    DimensionMismatchError,
    InvalidInputError,
    InvalidParameterError,
    UnsupportedSizeError,
)
from .kernels import DesignMatrix, _as_point, _require_unit_cube

# Size guards: expansion refuses anything bigger, and the primal ridge fit
# additionally caps the dimension (its normal equations are dense d x d).
MAX_N = 16
MAX_P = 6
MAX_T = 2
MAX_RIDGE_DIM = 4096


def basis_dimension(n: int, p: int, order: int) -> int:
    """d = n * (2 + t)^p."""
    return n * (2 + order) ** p


@dataclass(frozen=True, eq=False)
class BasisExpansion:
    """The expansion H(x): values plus the (knot, state) identity of each entry."""

    values: np.ndarray
    index: list
    n: int
    p: int
    order: int

    @property
    def dimension(self) -> int:
        return self.values.shape[0]


def _guard(n: int, p: int, order: int) -> None:
    if order < 0:
        raise InvalidParameterError(f"order must be >= 0, got {order}")
    if n > MAX_N or p > MAX_P or order > MAX_T:
        raise UnsupportedSizeError(
            f"expansion limited to n <= {MAX_N}, p <= {MAX_P}, t <= {MAX_T}; "
            f"got n={n}, p={p}, t={order}.  This is a reference oracle, use the "
            f"kernel route for real sizes."
        )


def _state_digits(p: int, order: int) -> np.ndarray:
    """All state vectors, shape ((2+t)^p, p), dimension 0 least significant."""
    base = 2 + order
    count = base**p
    idx = np.arange(count)
    digits = np.empty((count, p), dtype=np.int64)
    for j in range(p):
        digits[:, j] = (idx // base**j) % base
    return digits


def expand(x, knots: DesignMatrix, order: int = 0) -> BasisExpansion:
    """Evaluate every basis function at one point.

    Returns d = n*(2+t)^p values ordered knot-major, states in counter order
    within each knot.  Inputs live in the unit cube.
    """
    _guard(knots.n, knots.p, order)
    xv = _as_point(x, knots.p, "x")
    _require_unit_cube(knots.values, "knots")
    _require_unit_cube(xv, "x")

    n, p, t = knots.n, knots.p, order
    digits = _state_digits(p, t)

    # factors[i, s, j]: contribution of dimension j in state s at knot i
    factors = np.empty((n, t + 2, p))
    factors[:, 0, :] = 1.0
    for tau in range(1, t + 1):
        factors[:, tau, :] = xv[None, :] ** tau / math.factorial(tau)
    if t == 0:
        factors[:, t + 1, :] = (knots.values <= xv[None, :]).astype(np.float64)
    else:
        factors[:, t + 1, :] = np.maximum(xv[None, :] - knots.values, 0.0) ** t / math.factorial(t)

    per_knot = np.ones((n, digits.shape[0]))
    for j in range(p):
        per_knot *= factors[:, :, j][:, digits[:, j]]

    values = per_knot.reshape(-1)
    index = [
        (i, tuple(int(d) for d in digits[s]))
        for i in range(n)
        for s in range(digits.shape[0])
    ]
    return BasisExpansion(values=values, index=index, n=n, p=p, order=t)


def expansion_matrix(points: DesignMatrix, knots: DesignMatrix, order: int = 0) -> np.ndarray:
    """Rows of expansions, one per point: the (m, d) design of the primal problem."""
    if points.p != knots.p:
        raise DimensionMismatchError(
            f"points have p={points.p} but knots have p={knots.p}"
        )
    rows = [expand(points.values[i], knots, order).values for i in range(points.n)]
    return np.vstack(rows)


def explicit_ridge_fit(knots: DesignMatrix, y, order: int, lam: float) -> np.ndarray:
    """Primal ridge coefficients from the explicit expansion.

    Solves (H^T H + lam I_d) beta = H^T y with a dense symmetric
    factorization, where H stacks the expansions of the knot rows.  This is
    the independent check of the dual kernel solver; it never touches the
    Gram matrix route.  lam must be > 0 (at lam = 0 the normal equations are
    rank deficient since d > n always).
    """
    _guard(knots.n, knots.p, order)
    yv = np.asarray(y, dtype=np.float64).reshape(-1)
    if yv.shape[0] != knots.n:
        raise DimensionMismatchError(
            f"y has length {yv.shape[0]}, expected {knots.n}"
        )
    if not np.all(np.isfinite(yv)):
        raise InvalidInputError("y contains NaN or infinite entries")
    if not (lam > 0.0) or not math.isfinite(lam):
        raise InvalidParameterError(
            f"explicit ridge requires lam > 0 (rank-deficient at 0), got {lam!r}"
        )
    d = basis_dimension(knots.n, knots.p, order)
    if d > MAX_RIDGE_DIM:
        raise UnsupportedSizeError(
            f"explicit ridge limited to d <= {MAX_RIDGE_DIM}, got d={d}"
        )
    H = expansion_matrix(knots, knots, order)
    G = H.T @ H
    G[np.diag_indices_from(G)] += lam
    factor = cho_factor(G, lower=True)
    return cho_solve(factor, H.T @ yv)


def explicit_predict(beta: np.ndarray, points: DesignMatrix, knots: DesignMatrix, order: int = 0) -> np.ndarray:
    """Predictions H(points) @ beta of a primal fit."""
    H = expansion_matrix(points, knots, order)
    if H.shape[1] != beta.shape[0]:
        raise DimensionMismatchError(
            f"beta has length {beta.shape[0]}, expansion has dimension {H.shape[1]}"
        )
    return H @ beta
