"""Neighbourhood sampling for LIME and Kernel SHAP, and the OOD training set."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2

from .core import Dataset, DataError, Feature, FeatureSchema, StandardizationStats, fit_standardization

LIME_RESAMPLE_PROB = 0.5


@dataclass(frozen=True)
class PerturbationBatch:
    """Sampled rows around ``origin``.

    In SHAP mode ``masks[k, j] == 1`` means row ``k`` keeps the origin value
    of feature ``j``; otherwise it takes ``background[background_index[k], j]``.
    LIME batches carry no masks.
    """
    origin: np.ndarray
    rows: np.ndarray
    seed: int
    masks: np.ndarray | None = None
    background: np.ndarray | None = None
    background_index: np.ndarray | None = None

    @property
    def mode(self) -> str:
        return "lime" if self.masks is None else "shap"


def _check_n(n):
    if int(n) < 1:
        raise ValueError("n must be >= 1")


def lime_perturb(origin, stats: StandardizationStats, n: int, seed) -> PerturbationBatch:
    """Gaussian noise on continuous columns, 50% resampling on categorical ones."""
    _check_n(n)
    origin = np.asarray(origin, dtype=float)
    rng = np.random.default_rng(seed)
    rows = origin + rng.standard_normal((n, origin.size)) * stats.std
    cat = np.flatnonzero(stats.categorical)
    for j in cat:
        p = stats.frequencies[j]
        resample = rng.random(n) < LIME_RESAMPLE_PROB
        draws = rng.choice(p.size, size=n, p=p)
        rows[:, j] = np.where(resample, draws, origin[j])
    return PerturbationBatch(origin, rows, int(seed))


def sample_masks(m: int, n: int, rng) -> np.ndarray:
    """Coalition size uniform on 1..m-1, then a uniformly random subset of that size."""
    sizes = rng.integers(1, m, size=n)
    keys = rng.random((n, m))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    return (ranks < sizes[:, None]).astype(np.int8)


def apply_masks(origin, background, masks, background_index=None) -> np.ndarray:
    """Map coalitions to feature space: kept features from origin, others from background."""
    origin = np.asarray(origin, dtype=float)
    bg = np.atleast_2d(np.asarray(background, dtype=float))
    masks = np.asarray(masks)
    if background_index is None:
        background_index = np.zeros(masks.shape[0], dtype=int)
    fill = bg[background_index]
    return np.where(masks.astype(bool), origin, fill)


def shap_perturb(origin, background, n: int, seed) -> PerturbationBatch:
    """Random coalitions around ``origin``.

    ``background`` is one reference row or a matrix of them; with a matrix,
    each sample substitutes from a uniformly chosen reference row.
    """
    _check_n(n)
    origin = np.asarray(origin, dtype=float)
    bg = np.atleast_2d(np.asarray(background, dtype=float))
    m = origin.size
    if m < 2:
        raise DataError("coalition sampling needs at least 2 features")
    if bg.shape[1] != m:
        raise DataError("background width differs from origin width")
    rng = np.random.default_rng(seed)
    masks = sample_masks(m, n, rng)
    bidx = rng.integers(0, bg.shape[0], size=n)
    rows = apply_masks(origin, bg, masks, bidx)
    return PerturbationBatch(origin, rows, int(seed), masks, bg, bidx)


def kmeans_background(dataset: Dataset, k: int = 10, seed=0) -> np.ndarray:
    """Summarise the data by ``k`` cluster centres to use as SHAP reference rows.

    Centres are computed in standardized units and mapped back, so categorical
    columns end up holding averaged (generally fractional) codes.
    """
    X = dataset.X
    k = min(int(k), len(dataset))
    mu, sd = X.mean(axis=0), X.std(axis=0)
    sd[sd == 0] = 1.0
    centres, _ = kmeans2((X - mu) / sd, k, minit="++", seed=np.random.default_rng(seed))
    return centres * sd + mu


def medoid(dataset: Dataset) -> np.ndarray:
    """Row minimising the summed standardized Euclidean distance to all rows."""
    X = dataset.X
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = X / sd
    sq = (Z ** 2).sum(axis=1)
    d = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * Z @ Z.T, 0.0))
    return X[int(np.argmin(d.sum(axis=1)))].copy()


def ood_schema(schema: FeatureSchema) -> FeatureSchema:
    """Same columns, all treated as numeric, labelled real (0) vs perturbed (1)."""
    feats = tuple(Feature(f.name) for f in schema.features)
    return FeatureSchema(feats, schema.sensitive_index, schema.uncorrelated_indices, "is_ood")


def _row_keys(X):
    X = np.ascontiguousarray(np.asarray(X, dtype=float) + 0.0)  # folds -0.0 into 0.0
    return [r.tobytes() for r in X]


def build_ood_training_set(X: Dataset, mode: str, n_per_instance: int, seed, *,
                           stats: StandardizationStats | None = None, background=None) -> Dataset:
    """Real rows labelled 0, their perturbations labelled 1.

    A perturbed row that exactly equals some real row is labelled 0. ``mode``
    is ``"lime"``, ``"shap"`` or ``"both"``. In ``"both"`` each instance's
    samples are split evenly between schemes; an odd leftover sample goes to
    LIME on even instances and to SHAP on odd ones, so even ``n_per_instance=1``
    yields both kinds.
    """
    if len(X) == 0:
        raise DataError("cannot build an OOD set from an empty dataset")
    if mode not in ("lime", "shap", "both"):
        raise ValueError(f"unknown perturbation mode {mode!r}")
    ss = np.random.SeedSequence(seed)
    inst_seeds = ss.generate_state(len(X), dtype=np.uint64)
    if mode in ("lime", "both") and stats is None:
        stats = fit_standardization(X)
    if mode in ("shap", "both") and background is None:
        background = kmeans_background(X, seed=int(inst_seeds[0]))
    parts = []
    for i, (x, s) in enumerate(zip(X.X, inst_seeds)):
        if mode == "both":
            n_lime = n_per_instance // 2 + (n_per_instance % 2 if i % 2 == 0 else 0)
        else:
            n_lime = n_per_instance if mode == "lime" else 0
        n_shap = n_per_instance - n_lime
        if n_lime:
            parts.append(lime_perturb(x, stats, n_lime, int(s)).rows)
        if n_shap:
            parts.append(shap_perturb(x, background, n_shap, int(s) ^ 0x5A5A).rows)
    perturbed = np.vstack(parts) if parts else np.empty((0, X.X.shape[1]))
    real = set(_row_keys(X.X))
    labels = np.array([0 if k in real else 1 for k in _row_keys(perturbed)], dtype=int)
    rows = np.vstack([X.X, perturbed])
    y = np.concatenate([np.zeros(len(X), dtype=int), labels])
    order = np.random.default_rng(ss.spawn(1)[0]).permutation(rows.shape[0])
    return Dataset(ood_schema(X.schema), rows[order], y[order])
