"""Scaffolding attack: route real inputs to a biased model, perturbations to an innocuous one."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .core import BlackBoxModel, Dataset, DataError, split
from .models import ForestHyper, LogisticHyper, classification_metrics, model_to_dict, train_forest, \
    train_logistic
from .perturb import build_ood_training_set

FLIP_POLICIES = ("miss", "symmetric")
_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix(h: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        h = h + np.uint64(0x9E3779B97F4A7C15)
        h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return h ^ (h >> np.uint64(31))


def row_uniforms(X: np.ndarray, seed: int) -> np.ndarray:
    """A uniform [0, 1) draw per row that depends only on the row's values and ``seed``."""
    bits = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)) + 0.0).view(np.uint64)
    h = np.full(bits.shape[0], np.uint64(seed) & _MASK64, dtype=np.uint64)
    for j in range(bits.shape[1]):
        h = _splitmix(h ^ bits[:, j])
    return (h >> np.uint64(11)).astype(np.float64) / float(2 ** 53)


@dataclass(frozen=True)
class OODDetector:
    """Thresholded real-vs-perturbed classifier with optional decision flips.

    With ``flip_rate > 0`` each row's decision is inverted when its row hash
    falls below the rate, so repeated queries of a row always agree.
    """
    model: BlackBoxModel
    threshold: float = 0.5
    flip_rate: float = 0.0
    noise_seed: int = 0
    heldout_f1: float | None = None
    mode: str = "lime"
    learner: str = "forest"
    flip_policy: str = "miss"

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if not 0 <= self.flip_rate < 1:
            raise ValueError("flip_rate must lie in [0, 1)")
        if self.flip_policy not in FLIP_POLICIES:
            raise ValueError(f"flip_policy must be one of {FLIP_POLICIES}")

    def is_ood(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = self.model.predict_proba(X)[:, 1] >= self.threshold
        if self.flip_rate > 0:
            hit = row_uniforms(X, self.noise_seed) < self.flip_rate
            if self.flip_policy == "symmetric":
                out ^= hit
            else:
                out &= ~hit
        return out

    def f1_on(self, eval_set: Dataset) -> float:
        return classification_metrics(eval_set.y, self.is_ood(eval_set.X)).f1

    def describe(self) -> dict:
        return {"learner": self.learner, "mode": self.mode, "threshold": self.threshold,
                "flip_policy": self.flip_policy, "flip_rate": self.flip_rate, "noise_seed": self.noise_seed,
                "heldout_f1": self.heldout_f1}


@dataclass(frozen=True)
class TrainedDetector:
    detector: OODDetector
    eval_set: Dataset  # held-out real rows and their perturbations


def train_ood_detector(X: Dataset, mode: str = "lime", learner: str = "forest", hyper=None, seed=0, *,
                       n_per_instance: int = 1, eval_fraction: float = 0.25,
                       stats=None, background=None) -> TrainedDetector:
    """Fit a real-vs-perturbed classifier and measure its F1 on held-out instances.

    Real rows are split before perturbation, so no held-out instance (or any
    of its perturbations) is seen in training.
    """
    if len(X) == 0:
        raise DataError("cannot train a detector on an empty dataset")
    ss = np.random.SeedSequence(seed)
    s_split, s_train, s_eval = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    fit_rows, eval_rows = split(X, eval_fraction, s_split)
    kw = {"stats": stats, "background": background}
    train_set = build_ood_training_set(fit_rows, mode, n_per_instance, s_train, **kw)
    eval_set = build_ood_training_set(eval_rows, mode, 1, s_eval, **kw)
    if np.unique(train_set.y).size < 2:
        raise DataError("OOD training set has a single label; perturbations never leave the data")
    if learner == "forest":
        model = train_forest(train_set, hyper or ForestHyper(seed=s_train))
    elif learner == "logistic":
        model = train_logistic(train_set, hyper or LogisticHyper())
    else:
        raise ValueError(f"unknown learner {learner!r}")
    det = OODDetector(model, 0.5, 0.0, 0, None, mode, learner)
    det = replace(det, heldout_f1=det.f1_on(eval_set))
    return TrainedDetector(det, eval_set)


class CalibrationError(RuntimeError):
    pass


def degrade_detector(detector: OODDetector, target_f1: float, eval_set: Dataset,
                     tolerance: float = 0.02, seed=0, max_steps: int = 50) -> OODDetector:
    """Copy of ``detector`` whose flip rate brings its F1 on ``eval_set`` to ``target_f1``.

    The flip rate is found by bisection; F1 falls as the rate rises. The
    search interval is [0, 0.5] for symmetric flips (0.5 is a coin toss) and
    [0, 1) for miss-only flips.
    """
    if not 0 < target_f1 <= 1:
        raise ValueError("target_f1 must lie in (0, 1]")
    base = replace(detector, flip_rate=0.0, noise_seed=int(seed))
    base_f1 = base.f1_on(eval_set)
    if target_f1 > base_f1 + tolerance:
        raise CalibrationError(f"target F1 {target_f1:.3f} exceeds the detector's F1 {base_f1:.3f}")
    if abs(base_f1 - target_f1) <= tolerance:
        return base
    lo, hi = 0.0, (0.5 if detector.flip_policy == "symmetric" else 1.0 - 1e-12)
    top = replace(base, flip_rate=hi)
    if top.f1_on(eval_set) > target_f1 + tolerance:
        raise CalibrationError(f"target F1 {target_f1:.3f} is below what a flip rate of {hi:.2f} reaches")
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        cand = replace(base, flip_rate=mid)
        f1 = cand.f1_on(eval_set)
        if abs(f1 - target_f1) <= tolerance:
            return cand
        if f1 > target_f1:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"bisection did not reach F1 {target_f1:.3f} +/- {tolerance}")


class ScaffoldModel(BlackBoxModel):
    """``e(x) = f(x)`` when the detector deems ``x`` real, ``psi(x)`` otherwise."""

    def __init__(self, f: BlackBoxModel, psi: BlackBoxModel, detector: OODDetector):
        self.f = f
        self.psi = psi
        self.detector = detector

    def _proba1(self, X):
        ood = self.detector.is_ood(X)
        out = self.f.predict_proba(X)[:, 1]
        if ood.any():
            out[ood] = self.psi.predict_proba(X[ood])[:, 1]
        return out

    def describe(self, seed=None) -> dict:
        return {"f": _model_summary(self.f), "psi": _model_summary(self.psi),
                "detector": self.detector.describe(), "seed": seed}


def _model_summary(model):
    d = model_to_dict(model) if hasattr(model, "to_dict") else {"type": type(model).__name__}
    d.pop("trees", None)
    return d


def build_scaffold(f: BlackBoxModel, psi: BlackBoxModel, detector: OODDetector) -> ScaffoldModel:
    return ScaffoldModel(f, psi, detector)


def fidelity(e: BlackBoxModel, f: BlackBoxModel, X) -> float:
    """Fraction of rows on which ``e`` and ``f`` predict the same class."""
    rows = X.X if isinstance(X, Dataset) else np.atleast_2d(X)
    if rows.shape[0] == 0:
        raise ValueError("fidelity needs at least one row")
    return float(np.mean(e.predict(rows) == f.predict(rows)))


def save_scaffold_description(scaffold: ScaffoldModel, path, seed=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"format_version": 1, **scaffold.describe(seed)}, fh, indent=2)
