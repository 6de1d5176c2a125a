import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xailab.core import Feature, FeatureSchema, SyntheticConfig, generate_synthetic

settings.register_profile("xailab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("xailab")


@pytest.fixture(scope="session")
def synth():
    return generate_synthetic(SyntheticConfig(n_rows=400, seed=5))


@pytest.fixture
def tiny_schema():
    feats = (Feature("a"), Feature("b"), Feature("group", "categorical", ("x", "y")))
    return FeatureSchema(feats, 2, (), "label")


def linear_proba(w, b):
    """Linear probability model with no clipping inside the tested range."""
    from xailab.core import FunctionModel
    w = np.asarray(w, dtype=float)
    return FunctionModel(lambda X: b + X @ w, "linear")


# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: (int(c.rstrip("abc")), c)):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
