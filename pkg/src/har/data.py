"""Dataset ingestion, unit-cube scaling, seeded splits, and metrics.

All randomness in the package flows through `rng_from`: one 64-bit master
seed plus a structured key yields an independent PCG64 stream, so every
experiment cell can state exactly where its draws came from.
"""

from __future__ import annotations

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    InvalidInputError,
    InvalidParameterError,
    NonNumericColumnError,
    SchemaError,
)

#: Identity of the base generator, echoed into run artifacts.
GENERATOR_NAME = "numpy.random.PCG64"


def rng_from(seed: int, *key) -> np.random.Generator:
    """Deterministic child stream of a master seed.

    Key parts (ints or strings) become the SeedSequence spawn key; strings
    hash through sha256 to a 32-bit word, ints are masked to 32 bits.  Same
    (seed, key) always gives the same stream; distinct keys give streams that
    are independent by SeedSequence construction.
    """
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise InvalidParameterError(f"seed must be an integer, got {seed!r}")
    if seed < 0:
        raise InvalidParameterError(f"seed must be >= 0, got {seed}")
    parts = []
    for part in key:
        if isinstance(part, str):
            digest = hashlib.sha256(part.encode("utf-8")).digest()
            parts.append(int.from_bytes(digest[:4], "big"))
        elif isinstance(part, (int, np.integer)) and not isinstance(part, bool):
            parts.append(int(part) & 0xFFFFFFFF)
        else:
            raise InvalidParameterError(
                f"rng key parts must be ints or strings, got {part!r}"
            )
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(parts))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Numeric regression data: features (n, p), target (n,), names, and the
    count of rows dropped during ingestion."""

    features: np.ndarray
    target: np.ndarray
    feature_names: tuple
    target_name: str
    n_dropped: int = 0

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64, copy=True)
        targ = np.array(self.target, dtype=np.float64, copy=True)
        if feats.ndim != 2:
            raise DimensionMismatchError(f"features must be 2-D, got shape {feats.shape}")
        if targ.ndim != 1 or targ.shape[0] != feats.shape[0]:
            raise DimensionMismatchError(
                f"target shape {targ.shape} does not match features {feats.shape}"
            )
        if feats.shape[0] < 1 or feats.shape[1] < 1:
            raise InvalidInputError(f"dataset needs n >= 1 and p >= 1, got {feats.shape}")
        if not (np.all(np.isfinite(feats)) and np.all(np.isfinite(targ))):
            raise InvalidInputError("dataset contains NaN or infinite entries")
        if len(self.feature_names) != feats.shape[1]:
            raise DimensionMismatchError(
                f"{len(self.feature_names)} feature names for {feats.shape[1]} columns"
            )
        feats.setflags(write=False)
        targ.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "target", targ)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


def read_table(path) -> tuple[list, np.ndarray, int]:
    """Parse a headed CSV into (column names, float rows, dropped-row count).

    Cells must be numeric or blank.  A blank or non-finite cell (nan/inf)
    drops its whole row, counted and warned about once; a non-blank cell that
    fails to parse as a number rejects the file, naming the column.  The row
    array may have zero rows (header-only file).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row") from None
        header = [name.strip() for name in header]
        if any(not name for name in header):
            raise SchemaError(f"{path}: blank column name in header")
        if len(set(header)) != len(header):
            raise SchemaError(f"{path}: duplicate column names in header")
        width = len(header)
        kept = []
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue  # trailing blank line
            if len(row) != width:
                raise SchemaError(
                    f"{path}:{lineno}: expected {width} cells, got {len(row)}"
                )
            parsed = np.empty(width)
            missing = False
            for j, cell in enumerate(row):
                text = cell.strip()
                if not text:
                    missing = True
                    continue
                try:
                    value = float(text)
                except ValueError:
                    raise NonNumericColumnError(
                        f"{path}: column {header[j]!r} holds non-numeric value "
                        f"{text!r} (row {lineno})"
                    ) from None
                if not math.isfinite(value):
                    missing = True
                    continue
                parsed[j] = value
            if missing:
                dropped += 1
                continue
            kept.append(parsed)
    rows = np.array(kept) if kept else np.empty((0, width))
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} rows with missing or non-finite cells")
    return header, rows, dropped


def load_csv(path, target: str | None = None) -> Dataset:
    """Load a CSV into a Dataset.  The target is the named column, or the
    last column when no name is given."""
    header, rows, dropped = read_table(path)
    if target is None:
        t_idx = len(header) - 1
    else:
        if target not in header:
            raise SchemaError(f"{path}: no column named {target!r} (have {header})")
        t_idx = header.index(target)
    if len(header) < 2:
        raise SchemaError(f"{path}: need at least one feature column besides the target")
    if rows.shape[0] < 1:
        raise InvalidInputError(f"{path}: no usable data rows")
    f_idx = [j for j in range(len(header)) if j != t_idx]
    return Dataset(
        features=rows[:, f_idx],
        target=rows[:, t_idx],
        feature_names=tuple(header[j] for j in f_idx),
        target_name=header[t_idx],
        n_dropped=dropped,
    )


@dataclass(frozen=True, eq=False)
class ScalingParams:
    """Per-feature (min, max) pairs learned from training rows."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.array(self.mins, dtype=np.float64, copy=True).reshape(-1)
        maxs = np.array(self.maxs, dtype=np.float64, copy=True).reshape(-1)
        if mins.shape != maxs.shape:
            raise DimensionMismatchError("mins and maxs must have the same length")
        if not (np.all(np.isfinite(mins)) and np.all(np.isfinite(maxs))):
            raise InvalidInputError("scaling bounds contain NaN or infinite entries")
        if np.any(maxs < mins):
            raise InvalidInputError("scaling has max < min for some feature")
        mins.setflags(write=False)
        maxs.setflags(write=False)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def p(self) -> int:
        return self.mins.shape[0]

    @classmethod
    def identity(cls, p: int) -> "ScalingParams":
        return cls(mins=np.zeros(p), maxs=np.ones(p))

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingParams":
        return cls(mins=np.asarray(d["mins"]), maxs=np.asarray(d["maxs"]))


def fit_scaling(features: np.ndarray) -> ScalingParams:
    """Column-wise min/max of the training rows."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise DimensionMismatchError(f"features must be (n, p) with n >= 1, got {feats.shape}")
    if not np.all(np.isfinite(feats)):
        raise InvalidInputError("features contain NaN or infinite entries")
    return ScalingParams(mins=feats.min(axis=0), maxs=feats.max(axis=0))


def apply_scaling(features: np.ndarray, params: ScalingParams) -> np.ndarray:
    """Map each column through (v - min) / (max - min), clamped to [0, 1].

    A constant training column (max == min) maps everything to 0.5.  Rows
    outside the training range (test data) clamp to the cube boundary.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise DimensionMismatchError(f"features must be 2-D, got shape {feats.shape}")
    if feats.shape[1] != params.p:
        raise DimensionMismatchError(
            f"features have p={feats.shape[1]} but scaling has p={params.p}"
        )
    if not np.all(np.isfinite(feats)):
        raise InvalidInputError("features contain NaN or infinite entries")
    span = params.maxs - params.mins
    safe = np.where(span == 0.0, 1.0, span)
    scaled = (feats - params.mins[None, :]) / safe[None, :]
    scaled = np.where((span == 0.0)[None, :], 0.5, scaled)
    return np.clip(scaled, 0.0, 1.0)


@dataclass(frozen=True)
class SplitSpec:
    """How to split: train fraction, seed, and an optional row cap applied
    before anything else."""

    train_fraction: float = 0.8
    seed: int = 0
    max_rows: int | None = None

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise InvalidParameterError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )
        if self.max_rows is not None and self.max_rows < 2:
            raise InvalidParameterError(f"max_rows must be >= 2, got {self.max_rows}")


def split_dataset(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded permutation split.

    Rows beyond ``max_rows`` are discarded first; then a permutation drawn
    from the split seed assigns the first ceil(train_fraction * n) permuted
    rows to train and the rest to test.  Same spec, same split, always.
    """
    n = dataset.n
    if spec.max_rows is not None:
        n = min(n, spec.max_rows)
    perm = rng_from(spec.seed, "split").permutation(n)
    n_train = math.ceil(spec.train_fraction * n)
    if n_train >= n:
        raise InvalidParameterError(
            f"train_fraction {spec.train_fraction} leaves no test rows for n={n}"
        )
    train_idx = perm[:n_train]
    test_idx = perm[n_train:]

    def take(idx):
        return Dataset(
            features=dataset.features[idx],
            target=dataset.target[idx],
            feature_names=dataset.feature_names,
            target_name=dataset.target_name,
        )

    return take(train_idx), take(test_idx)


def rmse(predictions, targets) -> float:
    """Root mean squared error."""
    a = np.asarray(predictions, dtype=np.float64).reshape(-1)
    b = np.asarray(targets, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        raise InvalidInputError("rmse of empty arrays is undefined")
    return float(np.sqrt(np.mean((a - b) ** 2)))
