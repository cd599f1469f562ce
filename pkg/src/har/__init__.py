"""Adaptive-kernel ridge regression with closed-form tuning.

The regression function is a kernel ridge fit whose kernel is built from
the training points themselves: each training row contributes a
tensor-product spline term (order 0 gives indicator sections, higher
orders polynomial splines), so the function class adapts its knots to the
data.  Fitting is a single symmetric solve; model selection uses exact
leave-one-out residuals and a data-derived upper bound on the
regularization grid.  Fixed-form mixed Sobolev and Gaussian kernels are
included for comparison.
"""

from .basis import (
    BasisExpansion,
    basis_dimension,
    expand,
    expansion_matrix,
    explicit_predict,
    explicit_ridge_fit,
)
from .data import (
    GENERATOR_NAME,
    Dataset,
    ScalingParams,
    SplitSpec,
    apply_scaling,
    fit_scaling,
    load_csv,
    read_table,
    rmse,
    rng_from,
    split_dataset,
)
from .exceptions import (
    DimensionMismatchError,
    HarError,
    InvalidInputError,
    InvalidParameterError,
    NonNumericColumnError,
    SchemaError,
    SingularSystemError,
    UndefinedScaleError,
    UnsupportedSizeError,
)
from .experiments import (
    BenchmarkReport,
    ConvergenceReport,
    DemoResult,
    demo_mean,
    interaction_mean,
    run_benchmark,
    run_convergence,
    run_demo,
    simulate_demo_1d,
    simulate_interaction_10d,
    theoretical_rate,
)
from .kernels import (
    FAMILIES,
    DesignMatrix,
    GramMatrix,
    KernelSpec,
    cross_kernel_matrix,
    gram_matrix,
    har_kernel,
    kernel_value,
    mixed_sobolev_kernel,
    rbf_kernel,
)
from .solver import (
    FittedModel,
    TuningResult,
    fit,
    lambda_grid,
    lambda_max,
    load_model,
    loocv_errors,
    predict,
    save_model,
    tune,
)

__version__ = "0.1.0"

__all__ = [
    "BasisExpansion",
    "basis_dimension",
    "expand",
    "expansion_matrix",
    "explicit_predict",
    "explicit_ridge_fit",
    "GENERATOR_NAME",
    "Dataset",
    "ScalingParams",
    "SplitSpec",
    "apply_scaling",
    "fit_scaling",
    "load_csv",
    "read_table",
    "rmse",
    "rng_from",
    "split_dataset",
    "DimensionMismatchError",
    "HarError",
    "InvalidInputError",
    "InvalidParameterError",
    "NonNumericColumnError",
    "SchemaError",
    "SingularSystemError",
    "UndefinedScaleError",
    "UnsupportedSizeError",
    "BenchmarkReport",
    "ConvergenceReport",
    "DemoResult",
    "demo_mean",
    "interaction_mean",
    "run_benchmark",
    "run_convergence",
    "run_demo",
    "simulate_demo_1d",
    "simulate_interaction_10d",
    "theoretical_rate",
    "FAMILIES",
    "DesignMatrix",
    "GramMatrix",
    "KernelSpec",
    "cross_kernel_matrix",
    "gram_matrix",
    "har_kernel",
    "kernel_value",
    "mixed_sobolev_kernel",
    "rbf_kernel",
    "FittedModel",
    "TuningResult",
    "fit",
    "lambda_grid",
    "lambda_max",
    "load_model",
    "loocv_errors",
    "predict",
    "save_model",
    "tune",
    "__version__",
]
