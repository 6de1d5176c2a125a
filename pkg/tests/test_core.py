import numpy as np
import pytest
from hypothesis import given, strategies as st

from xailab.core import (DataError, Dataset, Feature, FeatureSchema, FunctionModel, SyntheticConfig,
                         fit_standardization, generate_synthetic, load_csv, split, write_csv)


def _write(tmp_path, text, schema):
    p = tmp_path / "d.csv"
    p.write_text(text)
    sp = tmp_path / "s.json"
    schema.save(sp)
    return p, sp


def test_load_two_rows(tmp_path, tiny_schema):
    p, sp = _write(tmp_path, "a,b,group,label\n0.5,1,x,0\n-2,3.25,y,1\n", tiny_schema)
    ds = load_csv(p, sp)
    assert ds.X.shape == (2, 3)
    assert ds.X[1].tolist() == [-2.0, 3.25, 1.0]
    assert ds.y.tolist() == [0, 1]


def test_missing_label_column_is_named(tmp_path, tiny_schema):
    p, sp = _write(tmp_path, "a,b,group\n0.5,1,x\n", tiny_schema)
    with pytest.raises(DataError, match="'label'"):
        load_csv(p, sp)


def test_bad_cell_names_row_and_column(tmp_path, tiny_schema):
    p, sp = _write(tmp_path, "a,b,group,label\n0.5,1,x,0\n1,oops,y,1\n", tiny_schema)
    with pytest.raises(DataError, match=r"row 2, column 'b'"):
        load_csv(p, sp)
    p, sp = _write(tmp_path, "a,b,group,label\n0.5,1,z,0\n", tiny_schema)
    with pytest.raises(DataError, match="unknown category"):
        load_csv(p, sp)


def test_schema_keys(tiny_schema):
    d = tiny_schema.to_dict()
    assert set(d) == {"features", "sensitive", "uncorrelated", "label"}
    assert d["features"][2] == {"name": "group", "kind": "categorical", "categories": ["x", "y"]}
    assert FeatureSchema.from_dict(d) == tiny_schema


def test_schema_invariants():
    with pytest.raises(DataError):
        FeatureSchema((Feature("a"), Feature("a")), 0)
    with pytest.raises(DataError):
        FeatureSchema((Feature("a"), Feature("b")), 0, (0,))
    with pytest.raises(DataError):
        FeatureSchema((Feature("a"),), 3)
    with pytest.raises(DataError):
        Feature("c", "categorical", ("only",))


def test_dataset_invariants(tiny_schema):
    with pytest.raises(DataError):
        Dataset(tiny_schema, np.zeros((2, 2)), [0, 1])
    with pytest.raises(DataError):
        Dataset(tiny_schema, np.zeros((2, 3)), [0, 2])
    with pytest.raises(DataError):
        Dataset(tiny_schema, [[0, 0, 2.0]], [0])
    with pytest.raises(DataError):
        Dataset(tiny_schema, [[0, 0, 0.5]], [0])


def test_synthetic_full_bias():
    ds = generate_synthetic(SyntheticConfig(n_rows=500, bias_strength=1.0, seed=3))
    assert np.all(ds.X[:, ds.schema.sensitive_index] == ds.y)


def test_synthetic_bias_concentration():
    ds = generate_synthetic(SyntheticConfig(n_rows=10_000, bias_strength=0.9, seed=11))
    agree = np.mean(ds.X[:, ds.schema.sensitive_index] == ds.y)
    assert 0.88 <= agree <= 0.92


def test_synthetic_uncorrelated_columns():
    ds = generate_synthetic(SyntheticConfig(n_rows=10_000, seed=2))
    for j in ds.schema.uncorrelated_indices:
        assert abs(np.corrcoef(ds.X[:, j], ds.y)[0, 1]) < 0.05


def test_synthetic_deterministic(tmp_path):
    a = generate_synthetic(SyntheticConfig(n_rows=300, seed=9))
    b = generate_synthetic(SyntheticConfig(n_rows=300, seed=9))
    write_csv(a, tmp_path / "a.csv")
    write_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_synthetic_rejects_bad_bias():
    with pytest.raises(DataError):
        SyntheticConfig(bias_strength=0.5)


def test_split_sizes_and_determinism(synth):
    ds = synth.subset(np.arange(100))
    tr, te = split(ds, 0.2, 4)
    assert (len(tr), len(te)) == (80, 20)
    tr2, te2 = split(ds, 0.2, 4)
    assert np.array_equal(te.X, te2.X) and np.array_equal(tr.y, tr2.y)


def test_split_empty_errors(tiny_schema):
    empty = Dataset(tiny_schema, np.empty((0, 3)), np.empty(0, dtype=int))
    with pytest.raises(DataError):
        split(empty, 0.2, 0)


@given(st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
def test_split_preserves_rows(n, frac, seed):
    rng = np.random.default_rng(seed)
    schema = FeatureSchema((Feature("a"), Feature("b")), 0)
    ds = Dataset(schema, rng.standard_normal((n, 2)), rng.integers(0, 2, n))
    tr, te = split(ds, frac, seed)
    both = np.vstack([tr.X, te.X])
    key = lambda A: sorted(map(tuple, A))
    assert key(both) == key(ds.X)
    assert sorted(np.concatenate([tr.y, te.y])) == sorted(ds.y)


def test_standardization_population_std():
    schema = FeatureSchema((Feature("v"), Feature("c", "categorical", ("0", "1"))), 1)
    ds = Dataset(schema, [[0.0, 0], [2.0, 0]], [0, 1])
    st_ = fit_standardization(ds)
    assert st_.mean[0] == 1.0 and st_.std[0] == 1.0
    assert st_.frequencies[1].tolist() == [1.0, 0.0]


def test_standardization_rejects_constant():
    schema = FeatureSchema((Feature("v"), Feature("w")), 0)
    with pytest.raises(DataError, match="'w'"):
        fit_standardization(Dataset(schema, [[0.0, 3.0], [1.0, 3.0]], [0, 1]))


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=20), st.data())
def test_csv_round_trip(tmp_path_factory, values, data):
    tmp = tmp_path_factory.mktemp("rt")
    schema = FeatureSchema((Feature("v"), Feature("c", "categorical", ("lo", "mid", "hi"))), 1)
    codes = data.draw(st.lists(st.integers(0, 2), min_size=len(values), max_size=len(values)))
    labels = data.draw(st.lists(st.integers(0, 1), min_size=len(values), max_size=len(values)))
    ds = Dataset(schema, np.column_stack([values, codes]), labels)
    write_csv(ds, tmp / "d.csv", tmp / "s.json")
    back = load_csv(tmp / "d.csv", tmp / "s.json")
    assert np.array_equal(back.X[:, 1], ds.X[:, 1])
    np.testing.assert_allclose(back.X[:, 0], ds.X[:, 0], rtol=1e-12, atol=0)
    assert np.array_equal(back.y, ds.y)


def test_predict_proba_contract():
    m = FunctionModel(lambda X: 1.4 * X[:, 0] - 0.2)
    X = np.linspace(-1, 1, 11)[:, None]
    p = m.predict_proba(X)
    assert np.all((p >= 0) & (p <= 1))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert np.array_equal(p, m.predict_proba(X))
