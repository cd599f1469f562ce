"""Dual ridge solving, closed-form leave-one-out tuning, and persistence.

The model is f(x) = sum_b alpha_b k(x, X_b) with alpha = (K + lambda I)^-1 y.
Everything expensive about model selection collapses into linear algebra on
one Gram matrix per kernel candidate:

* leave-one-out residuals in closed form: e_i = alpha_i / [(K+lambda I)^-1]_ii,
  equal to literally refitting on the other n-1 rows with the kernel's knot
  set held fixed (only the regression row leaves; the kernel itself still
  sums over all n knots);

* an upper regularization bound lambda0 = max_i ||K_i|| * ||y|| / (eps max|y|)
  - eigmin(K), above which every in-sample prediction is provably below
  eps * max|y| in magnitude, so the search grid [1e-8 * lambda0, lambda0]
  brackets everything from near-interpolation to near-zero;

* a geometric grid over that interval scored by mean squared leave-one-out
  residual, ties broken toward the larger lambda.

One symmetric eigendecomposition per Gram serves the whole grid; alpha and
the inverse diagonal come from the same factorization so their rounding is
consistent.  `fit` itself uses a Cholesky factorization with an escalating
jitter retry for the near-singular lambda ~ 0 corner.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from .data import ScalingParams
from .exceptions import (
    DimensionMismatchError,
    InvalidInputError,
    InvalidParameterError,
    SchemaError,
    SingularSystemError,
    UndefinedScaleError,
)
from .kernels import (
    FAMILIES,
    FAMILY_HAR,
    FAMILY_RBF,
    FAMILY_SOBOLEV,
    DesignMatrix,
    GramMatrix,
    KernelSpec,
    cross_kernel_matrix,
    gram_matrix,
    membership_masks,
)

MODEL_FORMAT_VERSION = 1

DEFAULT_EPSILON = 1e-3
DEFAULT_GRID_COUNT = 50
#: Span of the lambda grid below lambda0, and the rbf bandwidth ladder.
GRID_SPAN = 1e-8
RBF_BANDWIDTHS = tuple(float(b) for b in np.geomspace(1e-3, 10.0, 13))

# order-0 prediction uses a bucket table of n * 2^p floats when it fits
_TABLE_BYTES_CAP = 200 * 2**20


def _check_y(y, n: int) -> np.ndarray:
    yv = np.asarray(y, dtype=np.float64).reshape(-1)
    if yv.shape[0] != n:
        raise DimensionMismatchError(f"y has length {yv.shape[0]}, expected {n}")
    if not np.all(np.isfinite(yv)):
        raise InvalidInputError("y contains NaN or infinite entries")
    return yv


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Everything needed to predict: knots, kernel, lambda, dual weights,
    the feature scaling that produced the knots, and provenance."""

    knots: DesignMatrix
    spec: KernelSpec
    lam: float
    alpha: np.ndarray
    scaling: ScalingParams
    y_max_abs: float
    y_norm: float
    gram_fingerprint: str

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.float64, copy=True).reshape(-1)
        if alpha.shape[0] != self.knots.n:
            raise DimensionMismatchError(
                f"alpha has length {alpha.shape[0]}, expected {self.knots.n}"
            )
        if not np.all(np.isfinite(alpha)):
            raise InvalidInputError("alpha contains NaN or infinite entries")
        if self.scaling.p != self.knots.p:
            raise DimensionMismatchError(
                f"scaling has p={self.scaling.p} but knots have p={self.knots.p}"
            )
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise InvalidParameterError(f"lambda must be finite and >= 0, got {self.lam}")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "lam", float(self.lam))


def _cholesky_with_jitter(K: np.ndarray, lam: float):
    """Factor K + lam I, retrying with jitter 1e-12 tr(K)/n escalated x10
    up to three times before giving up."""
    A = np.array(K, copy=True)
    idx = np.diag_indices_from(A)
    A[idx] += lam
    try:
        return cho_factor(A, lower=True)
    except LinAlgError:
        pass
    base = 1e-12 * float(np.trace(K)) / K.shape[0]
    if not (base > 0.0):
        base = 1e-12
    jitter = base
    for _ in range(3):
        B = np.array(A, copy=True)
        B[idx] += jitter
        try:
            return cho_factor(B, lower=True)
        except LinAlgError:
            jitter *= 10.0
    raise SingularSystemError(
        f"kernel system is numerically singular at lambda={lam:g}; "
        f"final jitter tried was {jitter / 10.0:.3e}"
    )


def fit(
    knots: DesignMatrix,
    y,
    spec: KernelSpec,
    lam: float,
    *,
    scaling: ScalingParams | None = None,
    gram: GramMatrix | None = None,
    threads: int | None = None,
) -> FittedModel:
    """Solve (K + lambda I) alpha = y for the given kernel.

    A precomputed ``gram`` is accepted to avoid rebuilding (its provenance
    must match the knots and spec).  ``scaling`` is carried on the model for
    the prediction pipeline; omitted means the knots are already native
    unit-cube coordinates (identity scaling).
    """
    yv = _check_y(y, knots.n)
    if not (lam >= 0.0 and math.isfinite(lam)):
        raise InvalidParameterError(f"lambda must be finite and >= 0, got {lam!r}")
    if gram is None:
        gram = gram_matrix(knots, spec, threads=threads)
    else:
        if gram.knot_fingerprint != knots.fingerprint:
            raise InvalidParameterError("gram was built from different knots")
        if gram.spec != spec:
            raise InvalidParameterError("gram was built for a different kernel spec")
    factor = _cholesky_with_jitter(gram.values, lam)
    alpha = cho_solve(factor, yv)
    if scaling is None:
        scaling = ScalingParams.identity(knots.p)
    return FittedModel(
        knots=knots,
        spec=spec,
        lam=float(lam),
        alpha=alpha,
        scaling=scaling,
        y_max_abs=float(np.max(np.abs(yv))),
        y_norm=float(np.linalg.norm(yv)),
        gram_fingerprint=gram.knot_fingerprint,
    )


# ---------------------------------------------------------------------------
# prediction

def _order0_contraction(test_vals: np.ndarray, knot_vals: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """sum_b alpha_b k0(x, X_b) without materializing the cross matrix.

    Knots are bucketed by their per-knot membership bitmask against each
    anchor knot; a per-bit doubling transform turns bucket sums into
    W[k, mu] = sum_b alpha_b 2^{|mu & mask(b, k)|}, and each prediction is a
    gather: sum_k W[k, mask(x, k)].  Exact reordering of the defining double
    sum (kernel values are integer powers of two).
    """
    n, p = knot_vals.shape
    size = 1 << p
    knot_masks = membership_masks(knot_vals, knot_vals).astype(np.int64)  # (b, k)
    flat_idx = np.arange(n, dtype=np.int64)[None, :] * size + knot_masks
    W = np.bincount(
        flat_idx.ravel(), weights=np.repeat(alpha, n), minlength=n * size
    ).reshape(n, size)
    for bit in range(p):
        W = W.reshape(n, -1, 2, 1 << bit)
        v0 = W[:, :, 0, :].copy()
        v1 = W[:, :, 1, :]
        W[:, :, 0, :] = v0 + v1
        W[:, :, 1, :] = v0 + 2.0 * v1
    W = W.reshape(n, size)
    out = np.empty(test_vals.shape[0])
    rows = np.arange(n)
    for r0 in range(0, test_vals.shape[0], 1024):
        r1 = min(r0 + 1024, test_vals.shape[0])
        masks = membership_masks(test_vals[r0:r1], knot_vals).astype(np.int64)
        out[r0:r1] = W[rows[None, :], masks].sum(axis=1)
    return out


def _use_contraction(model: FittedModel) -> bool:
    if model.spec.family != FAMILY_HAR or model.spec.order != 0:
        return False
    p = model.knots.p
    if p > 63:
        return False
    bytes_needed = model.knots.n * (1 << p) * 8
    return bytes_needed <= _TABLE_BYTES_CAP


def predict(model: FittedModel, test: DesignMatrix, *, threads: int | None = None) -> np.ndarray:
    """Predictions k(test, knots) @ alpha, one per test row.

    Test rows must already be scaled/clamped into the unit cube for the
    har/sobolev families.  For the order-0 adaptive kernel the cross matrix
    is contracted on the fly (same sum, bucketed associatively); the route is
    fixed per model, so values never depend on batch size or worker count.
    """
    if test.p != model.knots.p:
        raise DimensionMismatchError(
            f"test has p={test.p} but model was fit with p={model.knots.p}"
        )
    if _use_contraction(model):
        return _order0_contraction(test.values, model.knots.values, model.alpha)
    cross = cross_kernel_matrix(test, model.knots, model.spec, threads=threads)
    return cross @ model.alpha


# ---------------------------------------------------------------------------
# closed-form leave-one-out

def _loo_from_eigh(w: np.ndarray, V: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    shifted = w + lam
    if np.any(shifted <= 0.0):
        raise SingularSystemError(
            f"K + lambda I is not positive definite at lambda={lam:g}"
        )
    inv = 1.0 / shifted
    alpha = V @ ((V.T @ y) * inv)
    inv_diag = (V * V) @ inv
    return alpha / inv_diag


def loocv_errors(gram: GramMatrix, y, lam: float) -> np.ndarray:
    """Closed-form leave-one-out residuals e_i = alpha_i / [(K+lam I)^-1]_ii.

    Kernel knots stay fixed: e_i equals the residual at row i of a model
    refit on the other n-1 rows of the SAME Gram matrix.  Requires lam > 0.
    """
    yv = _check_y(y, gram.n)
    if not (lam > 0.0 and math.isfinite(lam)):
        raise InvalidParameterError(f"loocv requires lambda > 0, got {lam!r}")
    w, V = eigh(gram.values)
    return _loo_from_eigh(w, V, yv, lam)


# ---------------------------------------------------------------------------
# regularization bound and grid

def smallest_eigenvalue(K: np.ndarray, max_iterations: int = 200, rel_tol: float = 1e-6) -> float:
    """Smallest eigenvalue of a symmetric PSD matrix by inverse power
    iteration against a Cholesky factor of K + delta I.

    Converges when the Rayleigh quotient moves less than rel_tol relative;
    returns 0.0 on non-convergence or factorization failure, which is the
    conservative direction for the lambda0 bound (it only enlarges it).
    """
    n = K.shape[0]
    if n == 1:
        return float(K[0, 0])
    delta = 1e-8 * float(np.trace(K)) / n
    if not (delta > 0.0):
        delta = 1e-12
    idx = np.diag_indices(n)
    factor = None
    for _ in range(4):
        A = np.array(K, copy=True)
        A[idx] += delta
        try:
            factor = cho_factor(A, lower=True)
            break
        except LinAlgError:
            delta *= 10.0
    if factor is None:
        return 0.0
    v = np.random.Generator(np.random.PCG64(0x5EED)).standard_normal(n)
    v /= np.linalg.norm(v)
    mu_prev = None
    for _ in range(max_iterations):
        z = cho_solve(factor, v)
        norm_z = np.linalg.norm(z)
        if norm_z == 0.0:
            return 0.0
        v = z / norm_z
        mu = float(v @ (K @ v))
        if mu_prev is not None and abs(mu - mu_prev) <= rel_tol * max(abs(mu), 1e-30):
            return mu
        mu_prev = mu
    return 0.0


def lambda_max(gram: GramMatrix, y, epsilon: float = DEFAULT_EPSILON) -> float:
    """Upper end of the regularization search:

        lambda0 = max_i ||K_i||_2 * ||y||_2 / (epsilon * max_i |y_i|) - eigmin(K)

    At lambda >= lambda0 every in-sample prediction satisfies
    |yhat_i| <= epsilon * max|y| (Cauchy-Schwarz on K_i alpha plus the
    operator-norm bound ||alpha|| <= ||y|| / (eigmin + lambda)).
    """
    yv = _check_y(y, gram.n)
    if not (0.0 < epsilon < 1.0):
        raise InvalidParameterError(f"epsilon must be in (0, 1), got {epsilon!r}")
    y_max = float(np.max(np.abs(yv)))
    if y_max == 0.0:
        raise UndefinedScaleError("cannot scale the bound: y is identically zero")
    row_norm = float(np.max(np.linalg.norm(gram.values, axis=1)))
    eig_min = smallest_eigenvalue(gram.values)
    return row_norm * float(np.linalg.norm(yv)) / (epsilon * y_max) - eig_min


def lambda_grid(lambda0: float, count: int = DEFAULT_GRID_COUNT) -> np.ndarray:
    """Geometric grid of `count` values from lambda0 * 1e-8 up to lambda0,
    ascending, endpoint exact."""
    if not (lambda0 > 0.0 and math.isfinite(lambda0)):
        raise InvalidParameterError(f"lambda0 must be finite and > 0, got {lambda0!r}")
    if not isinstance(count, (int, np.integer)) or isinstance(count, bool) or count < 2:
        raise InvalidParameterError(f"grid count must be an integer >= 2, got {count!r}")
    return lambda0 * np.geomspace(GRID_SPAN, 1.0, int(count))


# ---------------------------------------------------------------------------
# tuning

@dataclass(frozen=True, eq=False)
class TuningResult:
    """The candidate (kernel, lambda) grid, its leave-one-out scores (mean
    squared residual), and the selected index."""

    candidates: tuple
    scores: np.ndarray
    selected: int

    @property
    def winner(self) -> tuple:
        return self.candidates[self.selected]


def _family_specs(family: str, order: int) -> list:
    if family == FAMILY_HAR:
        return [KernelSpec.har(order)]
    if family == FAMILY_SOBOLEV:
        return [KernelSpec.sobolev()]
    if family == FAMILY_RBF:
        return [KernelSpec.rbf(bw) for bw in RBF_BANDWIDTHS]
    raise InvalidParameterError(f"unknown kernel family {family!r}; expected one of {FAMILIES}")


def tune(
    knots: DesignMatrix,
    y,
    family: str,
    *,
    order: int = 0,
    epsilon: float = DEFAULT_EPSILON,
    grid_count: int = DEFAULT_GRID_COUNT,
    scaling: ScalingParams | None = None,
    threads: int | None = None,
) -> tuple[TuningResult, FittedModel]:
    """Grid-search lambda (and bandwidth, for rbf) by closed-form LOOCV.

    har/sobolev build one Gram matrix; rbf loops its fixed bandwidth ladder,
    recomputing lambda0 per bandwidth.  Scores are mean squared leave-one-out
    residuals; ties break toward the larger lambda.  Returns the scored grid
    and the refit at the winner.  A degenerate grid_count of 1 scores only
    lambda0 itself.
    """
    yv = _check_y(y, knots.n)
    if not isinstance(grid_count, (int, np.integer)) or isinstance(grid_count, bool) or grid_count < 1:
        raise InvalidParameterError(f"grid count must be an integer >= 1, got {grid_count!r}")
    specs = _family_specs(family, order)

    candidates = []
    scores = []
    best = None  # (index, score, lam, gram)
    for spec in specs:
        gram = gram_matrix(knots, spec, threads=threads)
        lam0 = lambda_max(gram, yv, epsilon)
        if grid_count == 1:
            grid = np.array([lam0])
        else:
            grid = lambda_grid(lam0, int(grid_count))
        w, V = eigh(gram.values)
        for lam in grid:
            errors = _loo_from_eigh(w, V, yv, float(lam))
            score = float(np.mean(errors**2))
            index = len(candidates)
            candidates.append((spec, float(lam)))
            scores.append(score)
            if (
                best is None
                or score < best[1]
                or (score == best[1] and float(lam) > best[2])
            ):
                best = (index, score, float(lam), gram)

    result = TuningResult(
        candidates=tuple(candidates),
        scores=np.array(scores),
        selected=best[0],
    )
    spec_sel, lam_sel = result.winner
    model = fit(
        knots,
        yv,
        spec_sel,
        lam_sel,
        scaling=scaling,
        gram=best[3],
        threads=threads,
    )
    return result, model


# ---------------------------------------------------------------------------
# persistence

def model_to_dict(model: FittedModel, metadata: dict | None = None) -> dict:
    """Versioned JSON-ready form.  Floats survive exactly: json uses repr,
    the shortest decimal that round-trips to the same double."""
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kernel": model.spec.to_dict(),
        "lambda": model.lam,
        "scaling": model.scaling.to_dict(),
        "knots": model.knots.values.tolist(),
        "alpha": model.alpha.tolist(),
        "y_stats": {"max_abs": model.y_max_abs, "norm": model.y_norm},
        "gram_fingerprint": model.gram_fingerprint,
        "metadata": dict(metadata) if metadata else {},
    }


def save_model(model: FittedModel, path, metadata: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, metadata), fh, indent=2)
        fh.write("\n")


def model_from_dict(doc: dict) -> tuple[FittedModel, dict]:
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise SchemaError(
            f"unsupported model format version {version!r}; this build reads "
            f"version {MODEL_FORMAT_VERSION}"
        )
    for key in ("kernel", "lambda", "scaling", "knots", "alpha", "gram_fingerprint"):
        if key not in doc:
            raise SchemaError(f"model file is missing required key {key!r}")
    knots = DesignMatrix(np.asarray(doc["knots"], dtype=np.float64))
    if knots.fingerprint != doc["gram_fingerprint"]:
        raise SchemaError(
            "knot fingerprint mismatch: model file is corrupt or was edited"
        )
    spec = KernelSpec.from_dict(doc["kernel"])
    scaling = ScalingParams.from_dict(doc["scaling"])
    stats = doc.get("y_stats", {})
    model = FittedModel(
        knots=knots,
        spec=spec,
        lam=float(doc["lambda"]),
        alpha=np.asarray(doc["alpha"], dtype=np.float64),
        scaling=scaling,
        y_max_abs=float(stats.get("max_abs", 0.0)),
        y_norm=float(stats.get("norm", 0.0)),
        gram_fingerprint=doc["gram_fingerprint"],
    )
    return model, doc.get("metadata", {})


def load_model(path) -> tuple[FittedModel, dict]:
    """Read a model file back; predictions from the loaded model are
    bit-identical to the original (floats round-trip exactly)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected a JSON object at top level")
    return model_from_dict(doc)
