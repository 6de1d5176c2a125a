import numpy as np
import pytest
from hypothesis import given, strategies as st

from xailab.core import fit_standardization
from xailab.ensemble import ShlimeConfig, combine, explain_shlime_basic
from xailab.explainers import ExplanationError, LimeConfig, ShapConfig, explain_kernel_shap, explain_lime, \
    rank_features
from xailab.models import make_biased_rule
from xailab.perturb import kmeans_background

vec = st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=10)


def test_signed_product_example():
    np.testing.assert_allclose(combine([0.4, 0.1], [0.5, 0.0]), [0.2, 0.0])
    np.testing.assert_allclose(combine([-0.4, 0.1], [-0.5, 0.2], "lime_sign_shap_magnitude"), [-0.2, 0.02])


@given(vec, st.data())
def test_zero_veto(a, data):
    b = data.draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=len(a), max_size=len(a)))
    zero = data.draw(st.integers(0, len(a) - 1))
    a[zero] = 0.0
    for policy in ("signed_product", "lime_sign_shap_magnitude"):
        assert combine(a, b, policy)[zero] == 0
        assert np.all(combine(np.zeros(len(a)), b, policy) == 0)


@given(vec, st.data())
def test_rank_robustness(a, data):
    b = data.draw(st.lists(st.floats(-5, 5, allow_nan=False), min_size=len(a), max_size=len(a)))
    a, b = np.array(a), np.array(b)
    i = int(np.argmax(np.abs(a)))
    others = np.delete(np.arange(a.size), i)
    if np.all(np.abs(a[i]) > np.abs(a[others]) + 1e-6) and np.all(np.abs(b[i]) > np.abs(b[others]) + 1e-6):
        assert rank_features(combine(a, b))[0] == i


def test_config_rejects_policy():
    with pytest.raises(ValueError):
        ShlimeConfig(ShapConfig(np.zeros(2)), sign_policy="mean")
    with pytest.raises(ValueError):
        combine([1.0], [1.0, 2.0])


def test_shlime_biased_rule(synth):
    stats = fit_standardization(synth)
    bg = kmeans_background(synth, 10, 0)
    f = make_biased_rule(synth.schema)
    cfg = ShlimeConfig(ShapConfig(bg), LimeConfig(n_samples=1000))
    s = synth.schema.sensitive_index
    hits = sum(rank_features(explain_shlime_basic(f, synth.X[i], stats, cfg, seed=i))[0] == s for i in range(100))
    assert hits >= 95


def test_shlime_composition_and_determinism(synth):
    stats = fit_standardization(synth)
    bg = kmeans_background(synth, 5, 0)
    f = make_biased_rule(synth.schema)
    cfg = ShlimeConfig(ShapConfig(bg), LimeConfig(n_samples=400), "lime_sign_shap_magnitude")
    x = synth.X[7]
    out = explain_shlime_basic(f, x, stats, cfg, seed=11)
    lime = explain_lime(f, x, stats, cfg.lime, 11)
    shap = explain_kernel_shap(f, x, cfg.shap, 12)
    np.testing.assert_array_equal(out.weights, lime.weights * np.abs(shap.weights))
    assert out.intercept == shap.intercept and out.tag == "shlime"
    assert out.meta["sign_policy"] == "lime_sign_shap_magnitude"
    again = explain_shlime_basic(f, x, stats, cfg, seed=11)
    assert np.array_equal(again.weights, out.weights)


def test_errors_labelled_by_source(synth):
    stats = fit_standardization(synth)
    f = make_biased_rule(synth.schema)
    bad_lime = ShlimeConfig(ShapConfig(synth.X[:2]), LimeConfig(n_samples=50, kernel_width=1e-200))
    with pytest.raises(ExplanationError, match="^lime: "):
        explain_shlime_basic(f, synth.X[0], stats, bad_lime)
    bad_shap = ShlimeConfig(ShapConfig(synth.X[:2, :5]), LimeConfig(n_samples=50))
    with pytest.raises(ExplanationError, match="^shap: "):
        explain_shlime_basic(f, synth.X[0], stats, bad_shap)
