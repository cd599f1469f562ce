"""Kernel evaluation and Gram construction for unit-cube regression.

Three kernel families share one interface:

* ``har`` -- the data-adaptive tensor-product spline kernel of order ``t``.
  For knot rows ``X_1 .. X_n`` (the training points) it evaluates

      k_t(x, x') = sum_i prod_j [ (x_j - X_ij)_+^t (x'_j - X_ij)_+^t / (t!)^2
                                  + sum_{tau=1..t} (x_j x'_j)^tau / (tau!)^2
                                  + 1 ]

  which is the inner product of explicit spline expansions anchored at the
  knots (see :mod:`har.basis` for the expansion itself).  At ``t = 0`` the
  product per knot collapses to a power of two and the whole kernel becomes

      k_0(x, x') = sum_i 2 ** |{ j : X_ij <= min(x_j, x'_j) }|

  The order-0 path computes exactly that: integer membership counts, then
  ``2**count``.  Both forms are exposed (`har_kernel` picks the fast form,
  `har_kernel_product_form` always uses the product construction) and must
  agree to float precision; tests pin this.

* ``sobolev`` -- a fixed product kernel on the unit cube,
  ``prod_j cosh(min) * cosh(1 - max) / sinh(1)`` per coordinate.

* ``rbf`` -- the Gaussian kernel ``exp(-||x - x'||^2 / (2 * bandwidth^2))``.

Gram and cross matrices are assembled from row blocks of the upper triangle
(cross: plain row blocks).  The block partition is fixed, every entry is
written by exactly one task, and the mirror pass runs sequentially, so the
result is bit-identical for any worker count.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    InvalidInputError,
    InvalidParameterError,
)

FAMILY_HAR = "har"
FAMILY_SOBOLEV = "sobolev"
FAMILY_RBF = "rbf"
FAMILIES = (FAMILY_HAR, FAMILY_SOBOLEV, FAMILY_RBF)

#: Highest supported spline order.  Factorials are precomputed up to here;
#: larger orders are rejected (the explicit basis dimension n*(2+t)^p makes
#: them useless long before the table runs out).
MAX_ORDER = 12

_FACTORIALS = tuple(float(math.factorial(k)) for k in range(MAX_ORDER + 1))

_ROW_BLOCK = 32
_COL_CHUNK = 256


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel to evaluate: family plus its one relevant parameter.

    ``order`` applies to the adaptive family only, ``bandwidth`` to rbf only.
    Construction validates and normalizes; instances are immutable and safe
    to share/serialize.
    """

    family: str
    order: int = 0
    bandwidth: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameterError(
                f"unknown kernel family {self.family!r}; expected one of {FAMILIES}"
            )
        if self.family == FAMILY_HAR:
            order = self.order
            if not isinstance(order, (int, np.integer)) or isinstance(order, bool):
                raise InvalidParameterError(f"order must be an integer, got {order!r}")
            if order < 0:
                raise InvalidParameterError(f"order must be >= 0, got {order}")
            if order > MAX_ORDER:
                raise InvalidParameterError(
                    f"order {order} exceeds the supported maximum {MAX_ORDER} "
                    f"(factorial table cap; the basis dimension n*(2+t)^p is "
                    f"astronomical at that order anyway)"
                )
            object.__setattr__(self, "order", int(order))
            object.__setattr__(self, "bandwidth", None)
        elif self.family == FAMILY_SOBOLEV:
            object.__setattr__(self, "order", 0)
            object.__setattr__(self, "bandwidth", None)
        else:  # rbf
            bw = self.bandwidth
            if bw is None or not math.isfinite(float(bw)) or float(bw) <= 0.0:
                raise InvalidParameterError(
                    f"rbf requires a finite bandwidth > 0, got {bw!r}"
                )
            object.__setattr__(self, "order", 0)
            object.__setattr__(self, "bandwidth", float(bw))

    @classmethod
    def har(cls, order: int = 0) -> "KernelSpec":
        return cls(family=FAMILY_HAR, order=order)

    @classmethod
    def sobolev(cls) -> "KernelSpec":
        return cls(family=FAMILY_SOBOLEV)

    @classmethod
    def rbf(cls, bandwidth: float) -> "KernelSpec":
        return cls(family=FAMILY_RBF, bandwidth=bandwidth)

    def to_dict(self) -> dict:
        return {"family": self.family, "order": self.order, "bandwidth": self.bandwidth}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(
            family=d["family"],
            order=d.get("order", 0) or 0,
            bandwidth=d.get("bandwidth"),
        )


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """An (n, p) float64 matrix of points, validated and frozen.

    Entries must be finite; the unit-cube requirement of the har/sobolev
    families is checked at kernel-evaluation time, not here, because rbf
    accepts arbitrary finite values.
    """

    values: np.ndarray
    _fingerprint: str | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 2:
            raise DimensionMismatchError(
                f"design matrix must be 2-D, got shape {vals.shape}"
            )
        n, p = vals.shape
        if n < 1 or p < 1:
            raise InvalidInputError(f"design matrix needs n >= 1 and p >= 1, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("design matrix contains NaN or infinite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def fingerprint(self) -> str:
        """Content hash (sha256 over shape and row-major float64 bytes)."""
        if self._fingerprint is None:
            h = hashlib.sha256()
            h.update(f"{self.n}x{self.p}:".encode())
            h.update(np.ascontiguousarray(self.values).tobytes())
            object.__setattr__(self, "_fingerprint", h.hexdigest())
        return self._fingerprint


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """A kernel Gram matrix together with its provenance.

    ``knot_fingerprint`` ties the matrix to the DesignMatrix it was built
    from, so downstream code can refuse mismatched (gram, knots) pairs.
    """

    values: np.ndarray
    spec: KernelSpec
    knot_fingerprint: str

    @property
    def n(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# input checks

def _as_point(x, p: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.shape[0] != p:
        raise DimensionMismatchError(
            f"{name} has length {arr.shape[0]}, expected {p} to match the knots"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or infinite entries")
    return arr


def _require_unit_cube(vals: np.ndarray, what: str) -> None:
    if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
        raise InvalidInputError(
            f"{what} must lie in the unit cube [0, 1]^p for this kernel family; "
            f"scale inputs first (out-of-cube values are rejected, not clamped)"
        )


def _needs_cube(spec: KernelSpec) -> bool:
    return spec.family in (FAMILY_HAR, FAMILY_SOBOLEV)


# ---------------------------------------------------------------------------
# pointwise evaluation

def har_kernel(x, x_prime, knots: DesignMatrix, order: int = 0) -> float:
    """Adaptive spline kernel of the given order at a single pair of points.

    Order 0 uses the membership-count form (exact powers of two); higher
    orders use the per-knot product form.  Inputs must lie in [0, 1]^p.
    """
    spec = KernelSpec.har(order)  # validates the order
    xv = _as_point(x, knots.p, "x")
    xq = _as_point(x_prime, knots.p, "x_prime")
    _require_unit_cube(knots.values, "knots")
    _require_unit_cube(xv, "x")
    _require_unit_cube(xq, "x_prime")
    if spec.order == 0:
        meet = np.minimum(xv, xq)
        counts = (knots.values <= meet[None, :]).sum(axis=1)
        return float(np.ldexp(1.0, counts.astype(np.int32)).sum())
    return _product_form_value(xv, xq, knots.values, spec.order)


def har_kernel_product_form(x, x_prime, knots: DesignMatrix, order: int = 0) -> float:
    """The general product construction, valid at every order including 0.

    At order 0 this must agree with `har_kernel` (membership-count form) to
    within float rounding; the two routes are kept separate deliberately so
    they can check each other.
    """
    KernelSpec.har(order)
    xv = _as_point(x, knots.p, "x")
    xq = _as_point(x_prime, knots.p, "x_prime")
    _require_unit_cube(knots.values, "knots")
    _require_unit_cube(xv, "x")
    _require_unit_cube(xq, "x_prime")
    return _product_form_value(xv, xq, knots.values, order)


def _product_form_value(x: np.ndarray, xp: np.ndarray, knots: np.ndarray, t: int) -> float:
    n, p = knots.shape
    acc = np.ones(n)
    for j in range(p):
        da = x[j] - knots[:, j]
        db = xp[j] - knots[:, j]
        if t == 0:
            # (v)_+^0 is the indicator of v >= 0 here: the hinge of order 0.
            term = ((da >= 0.0) & (db >= 0.0)).astype(np.float64)
        else:
            term = (
                np.maximum(da, 0.0) ** t
                * np.maximum(db, 0.0) ** t
                / (_FACTORIALS[t] * _FACTORIALS[t])
            )
        shell = 0.0
        xx = x[j] * xp[j]
        for tau in range(1, t + 1):
            shell += xx**tau / (_FACTORIALS[tau] * _FACTORIALS[tau])
        acc *= term + shell + 1.0
    return float(acc.sum())


def mixed_sobolev_kernel(x, x_prime) -> float:
    """Product Sobolev kernel on [0,1]^p: prod_j cosh(lo) cosh(1-hi) / sinh(1)."""
    xv = np.asarray(x, dtype=np.float64).reshape(-1)
    xq = _as_point(x_prime, xv.shape[0], "x_prime")
    if not np.all(np.isfinite(xv)):
        raise InvalidInputError("x contains NaN or infinite entries")
    _require_unit_cube(xv, "x")
    _require_unit_cube(xq, "x_prime")
    lo = np.minimum(xv, xq)
    hi = np.maximum(xv, xq)
    acc = 1.0
    for j in range(xv.shape[0]):
        acc *= math.cosh(lo[j]) * math.cosh(1.0 - hi[j])
    return acc / math.sinh(1.0) ** xv.shape[0]


def rbf_kernel(x, x_prime, bandwidth: float) -> float:
    """Gaussian kernel exp(-||x-x'||^2 / (2 bw^2)); exactly 1 at x == x'."""
    spec = KernelSpec.rbf(bandwidth)
    xv = np.asarray(x, dtype=np.float64).reshape(-1)
    xq = _as_point(x_prime, xv.shape[0], "x_prime")
    if not np.all(np.isfinite(xv)):
        raise InvalidInputError("x contains NaN or infinite entries")
    d2 = 0.0
    for j in range(xv.shape[0]):
        diff = xv[j] - xq[j]
        d2 += diff * diff
    return math.exp(-d2 / (2.0 * spec.bandwidth * spec.bandwidth))


def kernel_value(x, x_prime, knots: DesignMatrix, spec: KernelSpec) -> float:
    """Family dispatch for a single pair of points."""
    if spec.family == FAMILY_HAR:
        return har_kernel(x, x_prime, knots, spec.order)
    if spec.family == FAMILY_SOBOLEV:
        xv = _as_point(x, knots.p, "x")
        xq = _as_point(x_prime, knots.p, "x_prime")
        return mixed_sobolev_kernel(xv, xq)
    xv = _as_point(x, knots.p, "x")
    xq = _as_point(x_prime, knots.p, "x_prime")
    return rbf_kernel(xv, xq, spec.bandwidth)


# ---------------------------------------------------------------------------
# membership masks for the order-0 fast path

def _mask_dtype(p: int):
    if p <= 8:
        return np.uint8
    if p <= 16:
        return np.uint16
    if p <= 32:
        return np.uint32
    return np.uint64


def membership_masks(points: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Pack per-knot coordinate dominance into bitmasks.

    Bit j of out[a, k] is 1 iff knots[k, j] <= points[a, j].  Requires
    p <= 64; the order-0 kernel count for a pair (a, b) is then
    popcount(out_a[k] & out_b[k]) summed appropriately.
    """
    m, p = points.shape
    n = knots.shape[0]
    if p > 64:
        raise InvalidParameterError("membership masks require p <= 64")
    dtype = _mask_dtype(p)
    out = np.zeros((m, n), dtype=dtype)
    for j in range(p):
        bit = dtype(1) << dtype(j)
        out |= (knots[None, :, j] <= points[:, None, j]) * bit
    return out


# ---------------------------------------------------------------------------
# blocked matrix construction

def _block_evaluator(spec: KernelSpec, knot_vals: np.ndarray, row_vals: np.ndarray):
    """Return f(row_slice, col_slice) -> dense kernel block.

    ``row_vals`` are the left-hand points (test rows, or the knots themselves
    for a Gram matrix); columns always index the knots.  The har sum over
    knots runs over all of ``knot_vals`` regardless of the column slice.
    """
    p = knot_vals.shape[1]

    if spec.family == FAMILY_HAR and spec.order == 0 and p <= 64:
        col_masks = membership_masks(knot_vals, knot_vals)
        if row_vals is knot_vals:
            row_masks = col_masks
        else:
            row_masks = membership_masks(row_vals, knot_vals)
        pow2 = np.ldexp(1.0, np.arange(p + 1, dtype=np.int32))

        def evaluate(rows: slice, cols: slice) -> np.ndarray:
            rm = row_masks[rows]
            out = np.empty((rm.shape[0], cols.stop - cols.start))
            for c0 in range(cols.start, cols.stop, _COL_CHUNK):
                c1 = min(c0 + _COL_CHUNK, cols.stop)
                counts = np.bitwise_count(rm[:, None, :] & col_masks[c0:c1][None, :, :])
                out[:, c0 - cols.start : c1 - cols.start] = pow2[counts].sum(axis=2)
            return out

        return evaluate

    if spec.family == FAMILY_HAR and spec.order == 0:
        # wide-p fallback: accumulate integer membership counts per feature
        pow2 = np.ldexp(1.0, np.arange(p + 1, dtype=np.int32))

        def evaluate(rows: slice, cols: slice) -> np.ndarray:
            rv = row_vals[rows]
            out = np.empty((rv.shape[0], cols.stop - cols.start))
            for c0 in range(cols.start, cols.stop, _COL_CHUNK):
                c1 = min(c0 + _COL_CHUNK, cols.stop)
                cv = knot_vals[c0:c1]
                counts = np.zeros((rv.shape[0], c1 - c0, knot_vals.shape[0]), dtype=np.int16)
                for j in range(p):
                    meet = np.minimum(rv[:, j][:, None], cv[None, :, j])
                    counts += knot_vals[None, None, :, j] <= meet[:, :, None]
                out[:, c0 - cols.start : c1 - cols.start] = pow2[counts].sum(axis=2)
            return out

        return evaluate

    if spec.family == FAMILY_HAR:
        t = spec.order
        tfac2 = _FACTORIALS[t] * _FACTORIALS[t]

        def evaluate(rows: slice, cols: slice) -> np.ndarray:
            rv = row_vals[rows]
            out = np.empty((rv.shape[0], cols.stop - cols.start))
            for c0 in range(cols.start, cols.stop, _COL_CHUNK):
                c1 = min(c0 + _COL_CHUNK, cols.stop)
                cv = knot_vals[c0:c1]
                acc = np.ones((rv.shape[0], c1 - c0, knot_vals.shape[0]))
                for j in range(p):
                    da = rv[:, j][:, None] - knot_vals[None, :, j]
                    db = cv[:, j][:, None] - knot_vals[None, :, j]
                    ha = np.maximum(da, 0.0) ** t
                    hb = np.maximum(db, 0.0) ** t
                    shell = np.zeros((rv.shape[0], c1 - c0))
                    xx = rv[:, j][:, None] * cv[None, :, j]
                    for tau in range(1, t + 1):
                        shell += xx**tau / (_FACTORIALS[tau] * _FACTORIALS[tau])
                    acc *= ha[:, None, :] * hb[None, :, :] / tfac2 + (shell + 1.0)[:, :, None]
                out[:, c0 - cols.start : c1 - cols.start] = acc.sum(axis=2)
            return out

        return evaluate

    if spec.family == FAMILY_SOBOLEV:
        norm = math.sinh(1.0) ** p

        def evaluate(rows: slice, cols: slice) -> np.ndarray:
            rv = row_vals[rows]
            cv = knot_vals[cols]
            acc = np.ones((rv.shape[0], cv.shape[0]))
            for j in range(p):
                a = rv[:, j][:, None]
                b = cv[None, :, j]
                acc *= np.cosh(np.minimum(a, b)) * np.cosh(1.0 - np.maximum(a, b))
            return acc / norm

        return evaluate

    bw = spec.bandwidth

    def evaluate(rows: slice, cols: slice) -> np.ndarray:
        rv = row_vals[rows]
        cv = knot_vals[cols]
        d2 = np.zeros((rv.shape[0], cv.shape[0]))
        for j in range(p):
            diff = rv[:, j][:, None] - cv[None, :, j]
            d2 += diff * diff
        return np.exp(-d2 / (2.0 * bw * bw))

    return evaluate


def _resolve_workers(threads: int | None) -> int:
    if threads is None or threads == 0:
        return os.cpu_count() or 1
    if not isinstance(threads, (int, np.integer)) or isinstance(threads, bool):
        raise InvalidParameterError(f"threads must be an integer, got {threads!r}")
    if threads < 0:
        raise InvalidParameterError(f"threads must be >= 0, got {threads}")
    return int(threads)


def _run_blocks(work, blocks, threads: int | None) -> None:
    workers = _resolve_workers(threads)
    if workers <= 1 or len(blocks) <= 1:
        for b in blocks:
            work(b)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # consume to re-raise worker exceptions
        for _ in pool.map(work, blocks):
            pass


def gram_matrix(knots: DesignMatrix, spec: KernelSpec, threads: int | None = None) -> GramMatrix:
    """Kernel matrix of the knots against themselves.

    Only the upper triangle is computed (in fixed row blocks, optionally in
    parallel); the lower triangle is mirrored in a sequential pass, so the
    result is exactly symmetric and bit-identical for any worker count.
    """
    vals = knots.values
    if _needs_cube(spec):
        _require_unit_cube(vals, "knots")
    n = knots.n
    K = np.empty((n, n), dtype=np.float64)
    evaluate = _block_evaluator(spec, vals, vals)

    def work(block):
        r0, r1 = block
        K[r0:r1, r0:n] = evaluate(slice(r0, r1), slice(r0, n))

    blocks = [(r0, min(r0 + _ROW_BLOCK, n)) for r0 in range(0, n, _ROW_BLOCK)]
    _run_blocks(work, blocks, threads)
    lower = np.tril_indices(n, -1)
    K[lower] = K.T[lower]
    K.setflags(write=False)
    return GramMatrix(values=K, spec=spec, knot_fingerprint=knots.fingerprint)


def cross_kernel_matrix(
    test: DesignMatrix,
    knots: DesignMatrix,
    spec: KernelSpec,
    threads: int | None = None,
) -> np.ndarray:
    """(m, n) matrix of kernel values between test rows and knot rows."""
    if test.p != knots.p:
        raise DimensionMismatchError(
            f"test has p={test.p} but knots have p={knots.p}"
        )
    if _needs_cube(spec):
        _require_unit_cube(knots.values, "knots")
        _require_unit_cube(test.values, "test points")
    m, n = test.n, knots.n
    out = np.empty((m, n), dtype=np.float64)
    evaluate = _block_evaluator(spec, knots.values, test.values)

    def work(block):
        r0, r1 = block
        out[r0:r1, :] = evaluate(slice(r0, r1), slice(0, n))

    blocks = [(r0, min(r0 + _ROW_BLOCK, m)) for r0 in range(0, m, _ROW_BLOCK)]
    _run_blocks(work, blocks, threads)
    return out
