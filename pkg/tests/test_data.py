import numpy as np
import pytest

from har.data import (
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
from har.exceptions import (
    DimensionMismatchError,
    InvalidInputError,
    InvalidParameterError,
    NonNumericColumnError,
    SchemaError,
)


# ---------------------------------------------------------------------------
# seeded randomness

def test_rng_determinism_and_key_separation():
    a = rng_from(7, "x").standard_normal(5)
    b = rng_from(7, "x").standard_normal(5)
    c = rng_from(7, "y").standard_normal(5)
    d = rng_from(8, "x").standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert GENERATOR_NAME == "numpy.random.PCG64"


def test_rng_mixed_key_parts():
    a = rng_from(1, "cell", 3, 9).uniform()
    b = rng_from(1, "cell", 3, 9).uniform()
    c = rng_from(1, "cell", 9, 3).uniform()
    assert a == b and a != c


def test_rng_seed_validation():
    with pytest.raises(InvalidParameterError):
        rng_from(-1, "x")
    with pytest.raises(InvalidParameterError):
        rng_from(1.5, "x")


# ---------------------------------------------------------------------------
# csv ingestion

def test_read_three_row_example(write_csv):
    path = write_csv("t.csv", ["a", "b", "y"], [[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    ds = load_csv(path)
    assert ds.n == 3 and ds.p == 2
    assert np.array_equal(ds.target, [3.0, 6.0, 9.0])
    assert ds.feature_names == ("a", "b") and ds.target_name == "y"


def test_header_only_file(write_csv):
    path = write_csv("h.csv", ["a", "y"], [])
    names, rows, dropped = read_table(path)
    assert names == ["a", "y"] and rows.shape[0] == 0 and dropped == 0
    with pytest.raises(InvalidInputError):
        load_csv(path)


def test_blank_cell_drops_row_with_warning(write_csv):
    path = write_csv("b.csv", ["a", "y"], [[1, 2], ["", 4], [5, 6]])
    with pytest.warns(UserWarning, match="dropped 1 row"):
        ds = load_csv(path)
    assert ds.n == 2 and ds.n_dropped == 1


def test_non_finite_cell_drops_row(write_csv):
    path = write_csv("inf.csv", ["a", "y"], [[1, 2], ["inf", 4], ["nan", 5]])
    with pytest.warns(UserWarning):
        ds = load_csv(path)
    assert ds.n == 1


def test_ragged_row_rejected_with_line_number(write_csv):
    path = write_csv("r.csv", ["a", "b", "y"], [[1, 2, 3], [4, 5]])
    with pytest.raises(SchemaError, match=":3:"):
        read_table(path)


def test_non_numeric_column_named(write_csv):
    path = write_csv("n.csv", ["a", "color", "y"], [[1, "red", 3]])
    with pytest.raises(NonNumericColumnError, match="color"):
        read_table(path)


def test_header_problems(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(SchemaError):
        read_table(empty)
    dup = tmp_path / "d.csv"
    dup.write_text("a,a\n1,2\n")
    with pytest.raises(SchemaError, match="duplicate"):
        read_table(dup)
    blank = tmp_path / "bl.csv"
    blank.write_text("a,,c\n1,2,3\n")
    with pytest.raises(SchemaError, match="blank"):
        read_table(blank)


def test_target_selection(write_csv):
    path = write_csv("t2.csv", ["a", "b", "y"], [[1, 2, 3], [4, 5, 6]])
    ds = load_csv(path, target="b")
    assert ds.target_name == "b"
    assert np.array_equal(ds.target, [2.0, 5.0])
    assert ds.feature_names == ("a", "y")
    with pytest.raises(SchemaError, match="'z'"):
        load_csv(path, target="z")


def test_single_column_rejected(write_csv):
    path = write_csv("one.csv", ["y"], [[1], [2]])
    with pytest.raises(SchemaError):
        load_csv(path)


def test_dataset_invariants():
    with pytest.raises(InvalidInputError):
        Dataset(
            features=np.array([[np.nan]]), target=np.array([1.0]),
            feature_names=("a",), target_name="y",
        )
    with pytest.raises(DimensionMismatchError):
        Dataset(
            features=np.array([[1.0, 2.0]]), target=np.array([1.0]),
            feature_names=("a",), target_name="y",
        )


# ---------------------------------------------------------------------------
# scaling

def test_min_max_scaling_example():
    params = fit_scaling(np.array([[2.0], [4.0], [6.0]]))
    scaled = apply_scaling(np.array([[2.0], [4.0], [6.0]]), params)
    assert np.array_equal(scaled[:, 0], [0.0, 0.5, 1.0])
    # out-of-range test values clamp into the cube
    assert apply_scaling(np.array([[8.0]]), params)[0, 0] == 1.0
    assert apply_scaling(np.array([[-3.0]]), params)[0, 0] == 0.0


def test_constant_feature_maps_to_half():
    params = fit_scaling(np.array([[5.0], [5.0], [5.0]]))
    scaled = apply_scaling(np.array([[5.0], [9.0]]), params)
    assert np.all(scaled == 0.5)


def test_training_range_maps_to_full_interval():
    rng = rng_from(50, "data", "range")
    X = rng.uniform(-10, 10, size=(20, 3))
    params = fit_scaling(X)
    scaled = apply_scaling(X, params)
    assert np.all((scaled >= 0.0) & (scaled <= 1.0))
    assert np.allclose(scaled.min(axis=0), 0.0)
    assert np.allclose(scaled.max(axis=0), 1.0)


def test_scaling_params_round_trip():
    params = ScalingParams(mins=np.array([0.0, -2.0]), maxs=np.array([1.0, 3.0]))
    back = ScalingParams.from_dict(params.to_dict())
    assert np.array_equal(back.mins, params.mins)
    assert np.array_equal(back.maxs, params.maxs)
    with pytest.raises(InvalidInputError):
        ScalingParams(mins=np.array([1.0]), maxs=np.array([0.0]))


# ---------------------------------------------------------------------------
# splitting

def _toy_dataset(n):
    return Dataset(
        features=np.arange(n, dtype=np.float64)[:, None],
        target=np.arange(n, dtype=np.float64),
        feature_names=("a",),
        target_name="y",
    )


def test_split_is_deterministic_partition():
    ds = _toy_dataset(10)
    spec = SplitSpec(train_fraction=0.8, seed=3)
    tr1, te1 = split_dataset(ds, spec)
    tr2, te2 = split_dataset(ds, spec)
    assert np.array_equal(tr1.features, tr2.features)
    assert tr1.n == 8 and te1.n == 2
    combined = np.sort(np.concatenate([tr1.target, te1.target]))
    assert np.array_equal(combined, np.arange(10.0))


def test_split_truncates_before_permuting():
    ds = _toy_dataset(30)
    spec = SplitSpec(train_fraction=0.5, seed=1, max_rows=20)
    tr, te = split_dataset(ds, spec)
    assert tr.n + te.n == 20
    assert np.max(np.concatenate([tr.target, te.target])) < 20


def test_split_validation():
    with pytest.raises(InvalidParameterError):
        SplitSpec(train_fraction=0.0, seed=1)
    with pytest.raises(InvalidParameterError):
        SplitSpec(train_fraction=1.0, seed=1)
    with pytest.raises(InvalidParameterError):
        SplitSpec(train_fraction=0.5, seed=1, max_rows=1)
    # ceil(0.9 * 2) == 2 leaves no test rows
    with pytest.raises(InvalidParameterError):
        split_dataset(_toy_dataset(2), SplitSpec(train_fraction=0.9, seed=1))


# ---------------------------------------------------------------------------
# metrics

def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5), rel=1e-15)
    assert rmse([5.0, 6.0, 7.0], [3.0, 4.0, 5.0]) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(DimensionMismatchError):
        rmse([1.0], [1.0, 2.0])
