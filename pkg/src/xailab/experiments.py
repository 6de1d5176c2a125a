"""Experiment drivers: top-3 tallies, detector-F1 sweeps, PCA separability, and report files."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adversarial import CalibrationError, OODDetector, build_scaffold, degrade_detector
from .core import BlackBoxModel, Dataset, DataError, Feature, FeatureSchema, StandardizationStats
from .ensemble import ShlimeConfig, explain_shlime_basic
from .explainers import AttributionVector, ExplanationError, LimeConfig, ShapConfig, exact_shapley, \
    explain_kernel_shap, explain_lime, rank_features
from .models import LogisticHyper, train_logistic
from .perturb import build_ood_training_set

EXPLAINER_TAGS = ("lime", "shap", "shlime", "exact")


def derive_seed(seed, *keys) -> int:
    """Deterministic 32-bit child seed for ``(seed, *keys)``."""
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(k) for k in keys]]).generate_state(1)[0])


# --------------------------------------------------------------------------
# Explainer dispatch
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExplainerSuite:
    """Everything needed to run any explainer tag on any model.

    With instance seed ``s``, LIME runs with ``s`` and SHAP with ``s + 1``,
    which are exactly the two halves SHLIME uses for the same ``s``.
    """
    stats: StandardizationStats
    shap: ShapConfig
    lime: LimeConfig = field(default_factory=LimeConfig)
    sign_policy: str = "signed_product"

    def explain(self, tag: str, model: BlackBoxModel, x, seed: int) -> AttributionVector:
        if tag == "lime":
            return explain_lime(model, x, self.stats, self.lime, seed)
        if tag == "shap":
            return explain_kernel_shap(model, x, self.shap, seed + 1)
        if tag == "shlime":
            return explain_shlime_basic(model, x, self.stats,
                                        ShlimeConfig(self.shap, self.lime, self.sign_policy), seed)
        if tag == "exact":
            return exact_shapley(model, x, self.shap.background)
        raise ValueError(f"unknown explainer tag {tag!r}")


@dataclass(frozen=True)
class AttributionRecord:
    """One explanation, kept so every tally can be recomputed from the raw vectors."""
    experiment: str
    classifier_tag: str
    explainer_tag: str
    f1_target: float | None
    row_id: int
    seed: int
    intercept: float
    weights: tuple
    sign_policy: str = ""


def _sample_rows(test: Dataset, n_explain: int, seed) -> tuple[np.ndarray, np.ndarray]:
    if n_explain < 1:
        raise ValueError("n_explain must be >= 1")
    if n_explain > len(test):
        raise DataError(f"n_explain={n_explain} exceeds the {len(test)} test rows")
    rng = np.random.default_rng(derive_seed(seed, 0))
    rows = np.sort(rng.choice(len(test), size=n_explain, replace=False))
    seeds = np.array([derive_seed(seed, 1, r) for r in rows], dtype=np.int64)
    return rows, seeds


def _explain_cell(suite, tag, model, X, rows, seeds, experiment, classifier_tag, f1_target=None):
    recs = []
    for r, s in zip(rows, seeds):
        a = suite.explain(tag, model, X[r], int(s))
        recs.append(AttributionRecord(experiment, classifier_tag, tag, f1_target, int(r), int(s),
                                      float(a.intercept), tuple(float(w) for w in a.weights),
                                      suite.sign_policy if tag == "shlime" else ""))
    return recs


# --------------------------------------------------------------------------
# Top-3 occurrence
# --------------------------------------------------------------------------

@dataclass
class Top3Report:
    feature_names: list
    n_explain: int
    seed: int
    fractions: dict  # (classifier_tag, explainer_tag) -> {feature name: fraction}
    records: list
    errors: dict  # (classifier_tag, explainer_tag) -> message

    def fraction(self, classifier_tag, explainer_tag, feature) -> float:
        return self.fractions[(classifier_tag, explainer_tag)][feature]


def top3_tally(weight_rows, feature_names) -> dict:
    """Fraction of attribution vectors in which each feature ranks in the top 3."""
    m = len(feature_names)
    counts = np.zeros(m)
    weight_rows = list(weight_rows)
    for w in weight_rows:
        counts[rank_features(np.asarray(w))[:min(3, m)]] += 1
    n = max(len(weight_rows), 1)
    return {name: float(c / n) for name, c in zip(feature_names, counts)}


def run_top3(models, explainers, test: Dataset, n_explain: int = 100, seed=0, *,
             suite: ExplainerSuite) -> Top3Report:
    """Explain the same ``n_explain`` sampled test rows with every (model, explainer) pair."""
    for tag in explainers:
        if tag not in EXPLAINER_TAGS:
            raise ValueError(f"unknown explainer tag {tag!r}")
    rows, seeds = _sample_rows(test, n_explain, seed)
    names = test.schema.names
    fractions, records, errors = {}, [], {}
    for mtag, model in models:
        for etag in explainers:
            try:
                recs = _explain_cell(suite, etag, model, test.X, rows, seeds, "top3", mtag)
            except ExplanationError as exc:
                errors[(mtag, etag)] = str(exc)
                continue
            records.extend(recs)
            fractions[(mtag, etag)] = top3_tally((r.weights for r in recs), names)
    return Top3Report(names, n_explain, int(seed), fractions, records, errors)


# --------------------------------------------------------------------------
# Detector-F1 sensitivity sweep
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaffoldIngredients:
    f: BlackBoxModel
    psi: BlackBoxModel
    detector: OODDetector
    eval_set: Dataset  # labelled real/perturbed rows the F1 is measured on
    tolerance: float = 0.02


@dataclass(frozen=True)
class SweepRow:
    f1_target: float
    f1_achieved: float
    flip_rate: float
    noise_seed: int
    explainer_tag: str
    detection_rate: float
    n_instances: int


@dataclass
class SweepResult:
    f1_targets: list
    explainers: list
    seed: int
    rows: list  # SweepRow, ordered by target then explainer
    records: list
    failures: dict  # f1_target -> message (calibration) or (f1_target, tag) -> message

    def rate(self, f1_target, explainer_tag) -> float:
        for r in self.rows:
            if r.explainer_tag == explainer_tag and math.isclose(r.f1_target, f1_target):
                return r.detection_rate
        raise KeyError((f1_target, explainer_tag))


def detection_rate(weight_rows, sensitive_index: int) -> float:
    """Fraction of attribution vectors whose top-ranked feature is the sensitive one."""
    weight_rows = list(weight_rows)
    if not weight_rows:
        return float("nan")
    hits = sum(int(rank_features(np.asarray(w))[0] == sensitive_index) for w in weight_rows)
    return hits / len(weight_rows)


def run_sensitivity_sweep(f1_targets, explainers, ingredients: ScaffoldIngredients, test: Dataset,
                          n_explain: int = 100, seed=0, *, suite: ExplainerSuite,
                          parallel: int = 1) -> SweepResult:
    """Degrade the detector to each target F1 and measure how often each explainer ranks
    the sensitive feature first on the resulting scaffold."""
    targets = [float(t) for t in f1_targets]
    if any(b <= a for a, b in zip(targets, targets[1:])):
        raise ValueError("f1_targets must be strictly ascending")
    for tag in explainers:
        if tag not in EXPLAINER_TAGS:
            raise ValueError(f"unknown explainer tag {tag!r}")
    rows, seeds = _sample_rows(test, n_explain, seed)
    sens = test.schema.sensitive_index
    failures = {}
    calibrated = []
    for k, t in enumerate(targets):
        noise_seed = derive_seed(seed, 2, k)
        try:
            det = degrade_detector(ingredients.detector, t, ingredients.eval_set,
                                   ingredients.tolerance, noise_seed)
        except CalibrationError as exc:
            failures[t] = str(exc)
            continue
        calibrated.append((t, det, det.f1_on(ingredients.eval_set)))

    cells = [(t, det, f1, tag) for t, det, f1 in calibrated for tag in explainers]

    def work(cell):
        t, det, f1, tag = cell
        e = build_scaffold(ingredients.f, ingredients.psi, det)
        try:
            return _explain_cell(suite, tag, e, test.X, rows, seeds, "sweep", "scaffold", t), None
        except ExplanationError as exc:
            return None, str(exc)

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=int(parallel)) as pool:
            outcomes = list(pool.map(work, cells))
    else:
        outcomes = [work(c) for c in cells]

    out_rows, records = [], []
    for (t, det, f1, tag), (recs, err) in zip(cells, outcomes):
        if err is not None:
            failures[(t, tag)] = err
            continue
        records.extend(recs)
        out_rows.append(SweepRow(t, float(f1), float(det.flip_rate), int(det.noise_seed), tag,
                                 detection_rate((r.weights for r in recs), sens), len(recs)))
    return SweepResult(targets, list(explainers), int(seed), out_rows, records, failures)


# --------------------------------------------------------------------------
# PCA by power iteration
# --------------------------------------------------------------------------

@dataclass
class PcaProjection:
    coords: np.ndarray  # (n, 2)
    labels: np.ndarray  # 0 real, 1 perturbed
    explained: np.ndarray  # variance fractions of the two components
    components: np.ndarray  # (2, M), orthonormal rows
    mode: str = ""
    seed: int = 0
    n_per_instance: int = 1


def _orient(v):
    # sign convention: the largest-magnitude entry is positive
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def power_pca(X, k: int = 2, seed=0, tol: float = 1e-10, max_iter: int = 1000):
    """Top-``k`` principal directions of ``X`` by power iteration with deflation.

    Returns ``(components, eigenvalues, total_variance)``; components are rows.
    Iteration stops when successive directions have cosine >= 1 - tol.
    """
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    if n < 3:
        raise DataError("PCA needs at least 3 rows")
    if k > m:
        raise DataError(f"cannot extract {k} components from {m} columns")
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / n
    total = float(np.trace(C))
    sv = np.linalg.svd(Xc, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * 1e-10)) if sv[0] > 0 else 0
    if rank < k:
        raise DataError(f"rank-deficient input: fewer than {k} nonzero singular values")
    rng = np.random.default_rng(seed)
    comps, vals = [], []
    for _ in range(k):
        v = rng.standard_normal(m)
        for u in comps:
            v -= (u @ v) * u
        v /= np.linalg.norm(v)
        for _ in range(max_iter):
            w = C @ v
            for u in comps:  # keep exactly orthogonal to earlier directions
                w -= (u @ w) * u
            norm = np.linalg.norm(w)
            if norm == 0:
                break
            w /= norm
            done = abs(w @ v) >= 1 - tol
            v = w
            if done:
                break
        v = _orient(v)
        lam = float(v @ C @ v)
        comps.append(v)
        vals.append(lam)
        C = C - lam * np.outer(v, v)
    return np.array(comps), np.array(vals), total


def run_pca(real: Dataset, mode: str = "lime", n_per_instance: int = 1, seed=0, *,
            stats: StandardizationStats | None = None, background=None) -> PcaProjection:
    """Project real rows and their perturbations onto the top two principal components.

    Every column is z-scored with the real rows' mean and standard deviation
    before the combined matrix is centred.
    """
    if len(real) < 3:
        raise DataError("PCA needs at least 3 real rows")
    ood = build_ood_training_set(real, mode, n_per_instance, seed, stats=stats, background=background)
    mu = real.X.mean(axis=0)
    sd = real.X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = (ood.X - mu) / sd
    comps, vals, total = power_pca(Z, 2, derive_seed(seed, 3))
    coords = (Z - Z.mean(axis=0)) @ comps.T
    explained = np.clip(vals / total, 0.0, 1.0) if total > 0 else np.zeros(2)
    return PcaProjection(coords, ood.y.copy(), explained, comps, mode, int(seed), int(n_per_instance))


def separability(proj: PcaProjection, seed=0, test_fraction: float = 0.3,
                 hyper: LogisticHyper | None = None) -> float:
    """Held-out accuracy of a logistic classifier on the two PCA coordinates."""
    schema = FeatureSchema((Feature("pc1"), Feature("pc2")), 0, (), "is_perturbed")
    data = Dataset(schema, proj.coords, proj.labels)
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(data))
    n_test = max(1, int(round(test_fraction * len(data))))
    test, train = data.subset(idx[:n_test]), data.subset(idx[n_test:])
    model = train_logistic(train, hyper or LogisticHyper(learning_rate=0.5, epochs=1000))
    return float(np.mean(model.predict(test.X) == test.y))


# --------------------------------------------------------------------------
# Report files
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8", newline="")


def attributions_csv(records, feature_names) -> str:
    header = ["experiment", "classifier_tag", "explainer_tag", "f1_target", "row_id", "seed",
              "sign_policy", "intercept", *[f"phi_{n}" for n in feature_names]]
    rows = [[r.experiment, r.classifier_tag, r.explainer_tag, r.f1_target, r.row_id, r.seed,
             r.sign_policy, r.intercept, *r.weights] for r in records]
    return _csv_text(header, rows)


def top3_csv(report: Top3Report) -> str:
    rows = [[m, e, name, frac] for (m, e), fr in report.fractions.items() for name, frac in fr.items()]
    return _csv_text(["classifier_tag", "explainer_tag", "feature_name", "top3_fraction"], rows)


def sweep_csv(result: SweepResult) -> str:
    rows = [[r.f1_target, r.f1_achieved, r.explainer_tag, r.detection_rate, r.n_instances]
            for r in result.rows]
    return _csv_text(["f1_target", "f1_achieved", "explainer_tag", "detection_rate", "n_instances"], rows)


def pca_csv(proj: PcaProjection) -> str:
    rows = [[i, c[0], c[1], "perturbed" if lab else "real"]
            for i, (c, lab) in enumerate(zip(proj.coords, proj.labels))]
    return _csv_text(["point_id", "pc1", "pc2", "label"], rows)


def pca_meta_csv(proj: PcaProjection) -> str:
    return _csv_text(["ev1", "ev2"], [[proj.explained[0], proj.explained[1]]])


def write_manifest(out_dir, manifest: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.json"
    _write(path, json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serialisable")


def result_summary(result) -> dict:
    """Seeds, achieved F1s and failures of a result, for the run manifest."""
    if isinstance(result, Top3Report):
        return {"kind": "top3", "seed": result.seed, "n_explain": result.n_explain,
                "instance_seeds": sorted({r.seed for r in result.records}),
                "errors": {f"{m}/{e}": msg for (m, e), msg in result.errors.items()}}
    if isinstance(result, SweepResult):
        return {"kind": "sweep", "seed": result.seed, "f1_targets": result.f1_targets,
                "levels": [{"f1_target": r.f1_target, "f1_achieved": r.f1_achieved, "flip_rate": r.flip_rate,
                            "noise_seed": r.noise_seed, "explainer_tag": r.explainer_tag} for r in result.rows],
                "instance_seeds": sorted({r.seed for r in result.records}),
                "failures": {(str(k) if not isinstance(k, tuple) else f"{k[0]}/{k[1]}"): v
                             for k, v in result.failures.items()}}
    if isinstance(result, PcaProjection):
        return {"kind": "pca", "seed": result.seed, "mode": result.mode, "n_per_instance": result.n_per_instance,
                "explained_variance": [float(v) for v in result.explained]}
    raise TypeError(f"cannot summarise {type(result).__name__}")


def emit_report(result, out_dir, feature_names=None, manifest: dict | None = None) -> list[Path]:
    """Write the result's CSV files (and the manifest, first, when given). Returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if manifest is not None:
        written.append(write_manifest(out, manifest))
    files = {}
    if isinstance(result, Top3Report):
        files["top3.csv"] = top3_csv(result)
        files["attributions.csv"] = attributions_csv(result.records, result.feature_names)
    elif isinstance(result, SweepResult):
        if feature_names is None:
            raise ValueError("feature_names is required for sweep attributions")
        files["sweep.csv"] = sweep_csv(result)
        files["attributions.csv"] = attributions_csv(result.records, feature_names)
    elif isinstance(result, PcaProjection):
        files["pca.csv"] = pca_csv(result)
        files["pca_meta.csv"] = pca_meta_csv(result)
    else:
        raise TypeError(f"cannot emit {type(result).__name__}")
    for name, text in files.items():
        _write(out / name, text)
        written.append(out / name)
    return written
