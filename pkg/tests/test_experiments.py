import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from xailab.adversarial import train_ood_detector
from xailab.core import DataError, Dataset, Feature, FeatureSchema, FunctionModel, fit_standardization, split
from xailab.experiments import (ExplainerSuite, ScaffoldIngredients, emit_report,
                                power_pca, run_pca, run_sensitivity_sweep, run_top3, separability, top3_tally)
from xailab.explainers import LimeConfig, ShapConfig
from xailab.models import ForestHyper, make_biased_rule, make_unbiased_rule
from xailab.perturb import kmeans_background


@pytest.fixture(scope="module")
def setup(synth):
    train, test = split(synth, 0.25, 1)
    stats = fit_standardization(train)
    bg = kmeans_background(train, 4, 0)
    suite = ExplainerSuite(stats, ShapConfig(bg), LimeConfig(n_samples=300))
    f = make_biased_rule(synth.schema)
    psi = make_unbiased_rule(synth.schema, synth.schema.uncorrelated_indices[0])
    td = train_ood_detector(train, "both", "forest", ForestHyper(n_trees=20, max_depth=12, seed=0), seed=0,
                            n_per_instance=2, stats=stats, background=bg)
    return train, test, suite, ScaffoldIngredients(f, psi, td.detector, td.eval_set)


def _read(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_top3_small_feature_count():
    schema = FeatureSchema((Feature("a"), Feature("b")), 0)
    rng = np.random.default_rng(0)
    data = Dataset(schema, rng.standard_normal((20, 2)), rng.integers(0, 2, 20))
    stats = fit_standardization(data)
    suite = ExplainerSuite(stats, ShapConfig(np.zeros(2)), LimeConfig(n_samples=100))
    model = FunctionModel(lambda X: 0.5 + 0.1 * np.tanh(X[:, 0]))
    rep = run_top3([("m", model)], ["lime", "shap"], data, 5, 0, suite=suite)
    for fr in rep.fractions.values():
        assert fr == {"a": 1.0, "b": 1.0}


def test_top3_tallies(setup, tmp_path):
    _, test, suite, ing = setup
    rep = run_top3([("biased", ing.f)], ["lime", "shap", "shlime"], test, 20, 3, suite=suite)
    for key, fr in rep.fractions.items():
        assert all(0 <= v <= 1 for v in fr.values())
        assert sum(fr.values()) == pytest.approx(3.0)
    assert rep.fraction("biased", "lime", "sensitive") >= 0.95
    assert rep.fraction("biased", "shap", "sensitive") >= 0.95
    # tallies are recomputable from the attribution export
    emit_report(rep, tmp_path)
    rows = _read(tmp_path / "attributions.csv")
    names = test.schema.names
    for (m, e), fr in rep.fractions.items():
        w = [[float(r[f"phi_{n}"]) for n in names] for r in rows if r["classifier_tag"] == m and r["explainer_tag"] == e]
        assert top3_tally(w, names) == fr
    assert {r["sign_policy"] for r in rows if r["explainer_tag"] == "shlime"} == {"signed_product"}


def test_top3_bad_request(setup):
    _, test, suite, ing = setup
    with pytest.raises(DataError):
        run_top3([("f", ing.f)], ["lime"], test, len(test) + 1, suite=suite)
    with pytest.raises(ValueError):
        run_top3([("f", ing.f)], ["nope"], test, 2, suite=suite)


def test_top3_cell_errors_are_reported(setup):
    _, test, suite, ing = setup
    wide = ExplainerSuite(suite.stats, ShapConfig(np.zeros((1, 3))), suite.lime)
    rep = run_top3([("f", ing.f)], ["lime", "shap"], test, 3, suite=wide)
    assert ("f", "shap") in rep.errors and ("f", "lime") in rep.fractions


def test_sweep_shape_and_determinism(setup, tmp_path):
    _, test, suite, ing = setup
    args = ([0.5, 0.7, 0.9], ["lime", "shap", "shlime"], ing, test, 6, 8)
    res = run_sensitivity_sweep(*args, suite=suite)
    assert len(res.rows) == 9
    for r in res.rows:
        assert 0 <= r.detection_rate <= 1
        assert abs(r.f1_achieved - r.f1_target) <= 0.02
    emit_report(res, tmp_path / "a", test.schema.names)
    emit_report(res, tmp_path / "b", test.schema.names)
    par = run_sensitivity_sweep(*args, suite=suite, parallel=3)
    emit_report(par, tmp_path / "c", test.schema.names)
    for name in ("sweep.csv", "attributions.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
    assert len(_read(tmp_path / "a" / "sweep.csv")) == 9


def test_sweep_skips_unreachable_level(setup):
    _, test, suite, ing = setup
    strict = ScaffoldIngredients(ing.f, ing.psi, ing.detector, ing.eval_set, 1e-4)
    res = run_sensitivity_sweep([0.6, 0.9999], ["lime"], strict, test, 3, 0, suite=suite)
    assert 0.9999 in res.failures
    assert [r.f1_target for r in res.rows] == [0.6]


def test_sweep_targets_must_ascend(setup):
    _, test, suite, ing = setup
    with pytest.raises(ValueError):
        run_sensitivity_sweep([0.9, 0.5], ["lime"], ing, test, 2, suite=suite)


def test_power_pca_matches_eigh():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((300, 5)) @ rng.standard_normal((5, 5))
    comps, vals, total = power_pca(X, 2, seed=1)
    Xc = X - X.mean(axis=0)
    w, v = np.linalg.eigh(Xc.T @ Xc / len(X))
    np.testing.assert_allclose(vals, w[::-1][:2], rtol=1e-8)
    for k in range(2):
        assert abs(abs(comps[k] @ v[:, -1 - k]) - 1) < 1e-8
    np.testing.assert_allclose(comps @ comps.T, np.eye(2), atol=1e-9)
    assert total == pytest.approx(w.sum())


def test_pca_two_dimensional_is_lossless():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 2)) * [3.0, 1.0]
    comps, _, _ = power_pca(X, 2)
    P = (X - X.mean(axis=0)) @ comps.T
    d = lambda A: np.linalg.norm(A[:, None] - A[None], axis=-1)
    np.testing.assert_allclose(d(P), d(X), atol=1e-6)


def test_pca_rank_deficient():
    X = np.outer(np.arange(10.0), [1.0, 2.0, 3.0])
    with pytest.raises(DataError):
        power_pca(X, 2)
    with pytest.raises(DataError):
        power_pca(np.zeros((2, 3)), 2)


@given(st.integers(0, 2**32 - 1))
def test_pca_row_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 4)) * [4, 2, 1, 0.5]
    perm = rng.permutation(40)
    a, va, _ = power_pca(X, 2, seed=0)
    b, vb, _ = power_pca(X[perm], 2, seed=0)
    np.testing.assert_allclose(va, vb, rtol=1e-8)
    np.testing.assert_allclose(np.abs(a @ b.T), np.eye(2), atol=1e-6)


def test_run_pca_projection(synth, tmp_path):
    proj = run_pca(synth, "lime", 1, 2)
    assert proj.coords.shape == (2 * len(synth), 2)
    ev = proj.explained
    assert 0 <= ev[1] <= ev[0] <= 1 and ev.sum() <= 1
    np.testing.assert_allclose(proj.components @ proj.components.T, np.eye(2), atol=1e-9)
    emit_report(proj, tmp_path)
    rows = _read(tmp_path / "pca.csv")
    assert len(rows) == len(proj.coords) and {r["label"] for r in rows} == {"real", "perturbed"}
    meta = _read(tmp_path / "pca_meta.csv")[0]
    assert float(meta["ev1"]) == ev[0]
    acc = separability(proj, seed=0)
    assert 0 <= acc <= 1
