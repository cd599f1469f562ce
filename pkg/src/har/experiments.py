"""Seeded empirical studies: fit shapes in 1-D, convergence rate in 10-D,
and a multi-dataset RMSE comparison.

Three runners, each a pure function of (config, seed):

* `run_demo` draws a small 1-D training set from a piecewise mean (linear
  left of zero, sinusoidal right), tunes each kernel family on it, and
  tabulates predictions over a dense grid next to the true mean.

* `run_convergence` draws 10-D training sets of increasing size from a
  two-interaction mean, tunes the order-0 adaptive kernel on each, and
  reports mean test RMSE against the benchmark curve
  n^{-1/3} (log n)^{2(p-1)/3}.

* `run_benchmark` splits user-supplied CSV datasets 80/20, tunes every
  kernel family on the same split, and aggregates test RMSE over repeats.

Every random draw flows through `rng_from(seed, *key)` with a fixed string
key per purpose, so cells are independent of execution order: the test draw
for replication r uses key ("convergence", "test", r), the training draw
for size n uses ("convergence", "train", n, r), and the split seed for a
benchmark dataset uses ("bench", name, r, "split-seed").  Serial and
parallel schedules therefore produce identical reports.  Within one
generator, features are drawn before noise.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    GENERATOR_NAME,
    Dataset,
    ScalingParams,
    SplitSpec,
    apply_scaling,
    fit_scaling,
    load_csv,
    rmse,
    rng_from,
    split_dataset,
)
from .exceptions import InvalidInputError, InvalidParameterError
from .kernels import FAMILIES, FAMILY_HAR, DesignMatrix
from .solver import DEFAULT_EPSILON, DEFAULT_GRID_COUNT, predict, tune

DEMO_N = 50
DEMO_NOISE_SD = 0.3
DEMO_GRID_SIZE = 401

INTERACTION_P = 10
INTERACTION_NOISE_SD = 0.1
INTERACTION_RAMP = 0.05
#: threshold placing the second interaction's ramp so each product has mean 1/2
INTERACTION_X0 = 1.0 - 0.5 ** 0.2 - INTERACTION_RAMP

DEFAULT_N_VALUES = (100, 200, 400, 800, 1600)
DEFAULT_REPLICATIONS = 10
DEFAULT_TEST_SIZE = 10_000

DEFAULT_REPEATS = 5
BENCH_TRAIN_FRACTION = 0.8
BENCH_MAX_ROWS = 2000


# ---------------------------------------------------------------------------
# data-generating processes

def demo_mean(x: np.ndarray) -> np.ndarray:
    """-x left of zero, sin(2 pi x) right of it; continuous at 0."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.0, -x, np.sin(2.0 * np.pi * x))


def simulate_demo_1d(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """n draws of X ~ Unif[-1, 1], Y = mean(X) + N(0, 0.3^2)."""
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n!r}")
    rng = rng_from(seed, "demo")
    x = rng.uniform(-1.0, 1.0, size=n)
    y = demo_mean(x) + DEMO_NOISE_SD * rng.standard_normal(n)
    return x, y


def interaction_mean(X: np.ndarray) -> np.ndarray:
    """Product of features 1-5 minus a product of steep ramps of features
    6-10; each factor group multiplies to mean about one half."""
    X = np.asarray(X, dtype=np.float64)
    smooth = np.prod(X[:, :5], axis=1)
    ramps = np.clip((X[:, 5:10] - INTERACTION_X0) / INTERACTION_RAMP, 0.0, 1.0)
    return smooth - np.prod(ramps, axis=1)


def simulate_interaction_10d(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """n draws of X ~ Unif[0,1]^10, Y = mean(X) + N(0, 0.1^2)."""
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n!r}")
    rng = rng_from(seed, "interaction")
    X = rng.uniform(size=(n, INTERACTION_P))
    y = interaction_mean(X) + INTERACTION_NOISE_SD * rng.standard_normal(n)
    return X, y


def theoretical_rate(n: int, p: int = INTERACTION_P) -> float:
    """Benchmark decay curve n^{-1/3} (ln n)^{2(p-1)/3}."""
    return float(n) ** (-1.0 / 3.0) * math.log(n) ** (2.0 * (p - 1) / 3.0)


# ---------------------------------------------------------------------------
# 1-D demo

@dataclass(frozen=True, eq=False)
class DemoResult:
    grid: np.ndarray
    truth: np.ndarray
    predictions: dict
    chosen: dict
    train_x: np.ndarray
    train_y: np.ndarray
    config: dict


def run_demo(
    seed: int,
    *,
    n: int = DEMO_N,
    grid_size: int = DEMO_GRID_SIZE,
    grid_count: int = DEFAULT_GRID_COUNT,
    epsilon: float = DEFAULT_EPSILON,
    threads: int | None = None,
) -> DemoResult:
    """Tune all three kernel families on one 1-D draw and tabulate their
    fits over `grid_size` evenly spaced points spanning [-1, 1]."""
    if grid_size < 2:
        raise InvalidParameterError(f"grid_size must be >= 2, got {grid_size!r}")
    x_train, y_train = simulate_demo_1d(n, seed)
    scaling = fit_scaling(x_train[:, None])
    knots = DesignMatrix(apply_scaling(x_train[:, None], scaling))

    grid = np.linspace(-1.0, 1.0, grid_size)
    grid_scaled = DesignMatrix(apply_scaling(grid[:, None], scaling))

    predictions = {}
    chosen = {}
    for family in FAMILIES:
        result, model = tune(
            knots, y_train, family,
            order=0, epsilon=epsilon, grid_count=grid_count,
            scaling=scaling, threads=threads,
        )
        predictions[family] = predict(model, grid_scaled, threads=threads)
        chosen[family] = {
            "kernel": model.spec.to_dict(),
            "lambda": model.lam,
            "loocv_score": float(result.scores[result.selected]),
        }
    config = {
        "operation": "demo",
        "seed": int(seed),
        "n": int(n),
        "grid_size": int(grid_size),
        "grid_count": int(grid_count),
        "epsilon": float(epsilon),
        "generator": GENERATOR_NAME,
    }
    return DemoResult(
        grid=grid, truth=demo_mean(grid), predictions=predictions,
        chosen=chosen, train_x=x_train, train_y=y_train, config=config,
    )


# ---------------------------------------------------------------------------
# convergence study

@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    mean_rmse: float
    theoretical_rate: float
    ratio: float


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    rows: tuple
    config: dict
    rmse_table: dict = field(default_factory=dict)

    def __post_init__(self):
        last = 0
        for row in self.rows:
            if row.n <= last:
                raise InvalidInputError("row sample sizes must be strictly increasing")
            last = row.n
            for v in (row.mean_rmse, row.theoretical_rate, row.ratio):
                if not math.isfinite(v):
                    raise InvalidInputError(f"non-finite report value at n={row.n}")


def run_convergence(
    seed: int,
    *,
    n_values=DEFAULT_N_VALUES,
    replications: int = DEFAULT_REPLICATIONS,
    test_size: int = DEFAULT_TEST_SIZE,
    grid_count: int = DEFAULT_GRID_COUNT,
    epsilon: float = DEFAULT_EPSILON,
    threads: int | None = None,
    progress=None,
) -> ConvergenceReport:
    """Tuned order-0 fits at each training size, averaged over replications.

    Each replication draws one test set, shared across all training sizes of
    that replication, so the RMSE differences across n come from training
    alone.  Training features are drawn on the unit cube and used unscaled.
    `progress`, if given, is called with a short string after each cell.
    """
    n_values = tuple(int(v) for v in n_values)
    if len(n_values) == 0 or any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise InvalidParameterError("n_values must be non-empty and strictly increasing")
    if replications < 1:
        raise InvalidParameterError(f"replications must be >= 1, got {replications!r}")
    if test_size < 1:
        raise InvalidParameterError(f"test_size must be >= 1, got {test_size!r}")

    errors = np.zeros((len(n_values), replications))
    for r in range(replications):
        test_seed_rng = rng_from(seed, "convergence", "test", r)
        X_test = test_seed_rng.uniform(size=(test_size, INTERACTION_P))
        y_test = interaction_mean(X_test) + INTERACTION_NOISE_SD * test_seed_rng.standard_normal(test_size)
        test = DesignMatrix(X_test)
        for i, n in enumerate(n_values):
            train_rng = rng_from(seed, "convergence", "train", n, r)
            X_train = train_rng.uniform(size=(n, INTERACTION_P))
            y_train = interaction_mean(X_train) + INTERACTION_NOISE_SD * train_rng.standard_normal(n)
            _, model = tune(
                DesignMatrix(X_train), y_train, FAMILY_HAR,
                order=0, epsilon=epsilon, grid_count=grid_count, threads=threads,
            )
            errors[i, r] = rmse(predict(model, test, threads=threads), y_test)
            if progress is not None:
                progress(f"convergence n={n} replication {r + 1}/{replications} rmse={errors[i, r]:.4f}")

    rows = []
    for i, n in enumerate(n_values):
        mean_rmse = float(errors[i].mean())
        rate = theoretical_rate(n)
        rows.append(ConvergenceRow(n=n, mean_rmse=mean_rmse, theoretical_rate=rate, ratio=mean_rmse / rate))
    config = {
        "operation": "convergence",
        "seed": int(seed),
        "n_values": list(n_values),
        "replications": int(replications),
        "test_size": int(test_size),
        "grid_count": int(grid_count),
        "epsilon": float(epsilon),
        "p": INTERACTION_P,
        "generator": GENERATOR_NAME,
    }
    rmse_table = {str(n): [float(v) for v in errors[i]] for i, n in enumerate(n_values)}
    return ConvergenceReport(rows=tuple(rows), config=config, rmse_table=rmse_table)


# ---------------------------------------------------------------------------
# dataset benchmark

@dataclass(frozen=True)
class BenchmarkCell:
    dataset: str
    method: str
    n: int
    p: int
    mean_rmse: float
    sd_rmse: float
    wall_clock_seconds: float
    rmses: tuple


@dataclass(frozen=True, eq=False)
class BenchmarkReport:
    cells: tuple
    failures: tuple
    repeats: int
    config: dict


def _bench_one_dataset(
    name: str,
    dataset: Dataset,
    methods,
    repeats: int,
    seed: int,
    *,
    train_fraction: float,
    max_rows,
    grid_count: int,
    epsilon: float,
    threads,
    progress,
) -> list:
    per_method = {m: [] for m in methods}
    walls = {m: 0.0 for m in methods}
    n_used = p_used = None
    for r in range(repeats):
        split_seed = int(rng_from(seed, "bench", name, r, "split-seed").integers(0, 2**32))
        spec = SplitSpec(train_fraction=train_fraction, seed=split_seed, max_rows=max_rows)
        train, test = split_dataset(dataset, spec)
        n_used, p_used = train.n + test.n, train.p
        scaling = fit_scaling(train.features)
        knots = DesignMatrix(apply_scaling(train.features, scaling))
        test_scaled = DesignMatrix(apply_scaling(test.features, scaling))
        for method in methods:
            t0 = time.perf_counter()
            _, model = tune(
                knots, train.target, method,
                order=0, epsilon=epsilon, grid_count=grid_count,
                scaling=scaling, threads=threads,
            )
            err = rmse(predict(model, test_scaled, threads=threads), test.target)
            walls[method] += time.perf_counter() - t0
            per_method[method].append(err)
            if progress is not None:
                progress(f"bench {name} {method} repeat {r + 1}/{repeats} rmse={err:.4f}")
    cells = []
    for method in methods:
        vals = np.array(per_method[method])
        sd = float(vals.std(ddof=1)) if repeats > 1 else 0.0
        cells.append(BenchmarkCell(
            dataset=name, method=method, n=n_used, p=p_used,
            mean_rmse=float(vals.mean()), sd_rmse=sd,
            wall_clock_seconds=walls[method], rmses=tuple(float(v) for v in vals),
        ))
    return cells


def run_benchmark(
    dataset_paths,
    seed: int,
    *,
    methods=FAMILIES,
    repeats: int = DEFAULT_REPEATS,
    train_fraction: float = BENCH_TRAIN_FRACTION,
    max_rows=BENCH_MAX_ROWS,
    grid_count: int = DEFAULT_GRID_COUNT,
    epsilon: float = DEFAULT_EPSILON,
    threads: int | None = None,
    progress=None,
) -> BenchmarkReport:
    """Tune every method on shared splits of each dataset, `repeats` times.

    Within a repeat all methods see the same train/test rows.  A dataset
    that fails to load or fit is recorded under `failures` and the run
    continues.  Target column is the last column of each file.
    """
    if repeats < 1:
        raise InvalidParameterError(f"repeats must be >= 1, got {repeats!r}")
    methods = tuple(methods)
    for m in methods:
        if m not in FAMILIES:
            raise InvalidParameterError(f"unknown method {m!r}; expected one of {FAMILIES}")
    cells = []
    failures = []
    for path in dataset_paths:
        name = Path(path).stem
        try:
            dataset = load_csv(path)
            cells.extend(_bench_one_dataset(
                name, dataset, methods, repeats, seed,
                train_fraction=train_fraction, max_rows=max_rows,
                grid_count=grid_count, epsilon=epsilon,
                threads=threads, progress=progress,
            ))
        except Exception as exc:
            failures.append((name, f"{type(exc).__name__}: {exc}"))
    config = {
        "operation": "bench",
        "seed": int(seed),
        "datasets": [str(p) for p in dataset_paths],
        "methods": list(methods),
        "repeats": int(repeats),
        "train_fraction": float(train_fraction),
        "max_rows": None if max_rows is None else int(max_rows),
        "grid_count": int(grid_count),
        "epsilon": float(epsilon),
        "generator": GENERATOR_NAME,
    }
    return BenchmarkReport(cells=tuple(cells), failures=tuple(failures), repeats=int(repeats), config=config)


# ---------------------------------------------------------------------------
# report files

def _fmt(v) -> str:
    # repr of a python float is the shortest decimal that round-trips
    return repr(float(v))


def write_demo_csv(result: DemoResult, path) -> None:
    families = list(result.predictions)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "truth", *families])
        for i in range(result.grid.shape[0]):
            writer.writerow([
                _fmt(result.grid[i]), _fmt(result.truth[i]),
                *(_fmt(result.predictions[f][i]) for f in families),
            ])


def write_demo_json(result: DemoResult, path, config: dict | None = None) -> None:
    doc = {
        "config": config if config is not None else result.config,
        "chosen": result.chosen,
        "train": {
            "x": [float(v) for v in result.train_x],
            "y": [float(v) for v in result.train_y],
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_convergence_csv(report: ConvergenceReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "mean_rmse", "theoretical_rate", "ratio"])
        for row in report.rows:
            writer.writerow([row.n, _fmt(row.mean_rmse), _fmt(row.theoretical_rate), _fmt(row.ratio)])


def write_convergence_json(report: ConvergenceReport, path, config: dict | None = None) -> None:
    doc = {
        "config": config if config is not None else report.config,
        "rows": [
            {"n": row.n, "mean_rmse": row.mean_rmse,
             "theoretical_rate": row.theoretical_rate, "ratio": row.ratio}
            for row in report.rows
        ],
        "rmse_by_replication": report.rmse_table,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_benchmark_csv(report: BenchmarkReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dataset", "method", "n", "p", "mean_rmse", "sd_rmse", "wall_clock_seconds"])
        for c in report.cells:
            writer.writerow([
                c.dataset, c.method, c.n, c.p,
                _fmt(c.mean_rmse), _fmt(c.sd_rmse), _fmt(c.wall_clock_seconds),
            ])


def write_benchmark_json(report: BenchmarkReport, path, config: dict | None = None) -> None:
    doc = {
        "config": config if config is not None else report.config,
        "cells": [
            {"dataset": c.dataset, "method": c.method, "n": c.n, "p": c.p,
             "mean_rmse": c.mean_rmse, "sd_rmse": c.sd_rmse,
             "wall_clock_seconds": c.wall_clock_seconds, "rmses": list(c.rmses)}
            for c in report.cells
        ],
        "failures": [{"dataset": name, "error": msg} for name, msg in report.failures],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
