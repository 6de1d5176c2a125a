"""LIME and Kernel SHAP surrogates, a brute-force Shapley oracle, and feature ranking.

Both surrogates fit an additive model ``g(z) = phi_0 + sum_i phi_i z_i`` by
weighted least squares. They differ in how the neighbourhood is sampled and
weighted: LIME uses Gaussian noise and an exponential distance kernel, Kernel
SHAP uses feature coalitions weighted by the Shapley kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .core import BlackBoxModel, StandardizationStats
from .perturb import LIME_RESAMPLE_PROB, lime_perturb, sample_masks

LIME_RESAMPLE_PROB_KEEP = 1.0 - LIME_RESAMPLE_PROB

INFINITE_WEIGHT = math.inf
TAGS = ("lime", "shap", "shlime", "exact")


class ExplanationError(RuntimeError):
    pass


@dataclass(frozen=True)
class AttributionVector:
    intercept: float
    weights: np.ndarray
    tag: str
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown explainer tag {self.tag!r}")
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size

    @property
    def total(self) -> float:
        """phi_0 + sum(phi_i): the surrogate's output with every feature present."""
        return float(self.intercept + self.weights.sum())


def _p1(model: BlackBoxModel, X) -> np.ndarray:
    return model.predict_proba(X)[:, 1]


def rank_features(attr, atol: float = 1e-10) -> np.ndarray:
    """Feature indices by decreasing ``|phi|``; ties (within ``atol``) by ascending index."""
    w = attr.weights if isinstance(attr, AttributionVector) else np.asarray(attr, dtype=float)
    mag = np.abs(w)
    order = np.argsort(-mag, kind="stable")
    # Coalesce magnitudes closer than atol into one tie group, then sort groups by index.
    group = np.zeros(order.size, dtype=int)
    for k in range(1, order.size):
        same = mag[order[k - 1]] - mag[order[k]] <= atol
        group[k] = group[k - 1] + (0 if same else 1)
    return order[np.lexsort((order, group))]


# --------------------------------------------------------------------------
# LIME
# --------------------------------------------------------------------------

def lime_kernel(distance, sigma: float):
    """Exponential kernel ``exp(-d^2 / sigma^2)``."""
    if sigma <= 0:
        raise ValueError("kernel width must be positive")
    d = np.asarray(distance, dtype=float)
    with np.errstate(over="ignore", divide="ignore"):
        return np.exp(-(d ** 2) / sigma ** 2)


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 5000
    kernel_width: float | None = None  # default 0.75 * sqrt(M)
    max_features: int | None = None  # sparsity budget K; default M
    ridge: float = 1e-3

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise ValueError("kernel_width must be positive")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")

    def resolve(self, m: int) -> tuple[float, int]:
        k = m if self.max_features is None else self.max_features
        if k > m:
            raise ValueError(f"max_features={k} exceeds feature count {m}")
        return (0.75 * math.sqrt(m) if self.kernel_width is None else self.kernel_width), k


def lime_design(rows, origin, stats: StandardizationStats):
    """Surrogate design matrix and kernel distances for LIME samples.

    Continuous columns are z-scored. A categorical column is the indicator
    "sample keeps the origin's category", centred and scaled by its variance
    under the sampler, so every column has unit spread and coefficients are
    comparable across kinds. Distances count a changed category as 1 and a
    continuous offset in standard deviations.
    """
    rows = np.asarray(rows, dtype=float)
    origin = np.asarray(origin, dtype=float)
    cat = stats.categorical
    design = (rows - stats.mean) / stats.std
    same = (rows == origin).astype(float)
    offset = (rows - origin) / stats.std
    for j in np.flatnonzero(cat):
        keep = LIME_RESAMPLE_PROB_KEEP + LIME_RESAMPLE_PROB * stats.frequencies[j][int(origin[j])]
        sd = np.sqrt(keep * (1.0 - keep))
        design[:, j] = (same[:, j] - keep) / sd if sd > 0 else 0.0
        offset[:, j] = 1.0 - same[:, j]
    return design, np.sqrt((offset ** 2).sum(axis=1))


def weighted_ridge(X, y, w, lam):
    """Weighted ridge with an unpenalised intercept; returns (intercept, coef).

    Weights are normalised to sum to one so ``lam`` is on the scale of the
    weighted feature variance.
    """
    wsum = w.sum()
    if not np.isfinite(wsum) or wsum <= 1e-300:
        raise ExplanationError("all kernel weights vanish; increase the kernel width")
    w = w / wsum
    xm = w @ X
    ym = w @ y
    Xc, yc = X - xm, y - ym
    A = Xc.T @ (Xc * w[:, None]) + lam * np.eye(X.shape[1])
    b = Xc.T @ (w * yc)
    try:
        coef = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise ExplanationError("singular weighted normal equations; increase the kernel width "
                               "or the ridge strength") from None
    return float(ym - xm @ coef), coef


def explain_lime(model: BlackBoxModel, origin, stats: StandardizationStats,
                 config: LimeConfig | None = None, seed=0) -> AttributionVector:
    config = config or LimeConfig()
    origin = np.asarray(origin, dtype=float)
    m = origin.size
    sigma, k = config.resolve(m)
    batch = lime_perturb(origin, stats, config.n_samples, seed)
    design, dist = lime_design(batch.rows, origin, stats)
    w = lime_kernel(dist, sigma)
    y = _p1(model, batch.rows)
    intercept, coef = weighted_ridge(design, y, w, config.ridge)
    if k < m:
        keep = np.sort(rank_features(coef)[:k])
        intercept, sub = weighted_ridge(design[:, keep], y, w, config.ridge)
        coef = np.zeros(m)
        coef[keep] = sub
    return AttributionVector(intercept, coef, "lime", {"seed": seed, "kernel_width": sigma})


# --------------------------------------------------------------------------
# Kernel SHAP
# --------------------------------------------------------------------------

def shapley_kernel_weight(m: int, s: int):
    """Shapley kernel ``(M-1) / (C(M,s) s (M-s))`` as an exact fraction.

    The empty and full coalitions have infinite weight; they are returned as
    :data:`INFINITE_WEIGHT` and must be handled as equality constraints.
    """
    if not 0 <= s <= m:
        raise ValueError("coalition size out of range")
    if s == 0 or s == m:
        return INFINITE_WEIGHT
    return Fraction(m - 1, math.comb(m, s) * s * (m - s))


@dataclass(frozen=True)
class ShapConfig:
    background: np.ndarray
    n_coalitions: int = 2048
    exact_threshold: int = 10

    def __post_init__(self):
        bg = np.atleast_2d(np.asarray(self.background, dtype=float))
        bg.setflags(write=False)
        object.__setattr__(self, "background", bg)
        if self.exact_threshold > 20:
            raise ValueError("exact_threshold must be <= 20")
        if self.n_coalitions < 2:
            raise ValueError("n_coalitions must be >= 2")


def coalition_values(model: BlackBoxModel, origin, background, masks) -> np.ndarray:
    """Mean model output over reference rows for each coalition mask."""
    bg = np.atleast_2d(background)
    k = bg.shape[0]
    n = masks.shape[0]
    out = np.empty(n)
    chunk = max(1, 65536 // k)
    for start in range(0, n, chunk):
        mk = masks[start:start + chunk]
        rows = np.where(mk[:, None, :].astype(bool), origin, bg[None, :, :]).reshape(-1, origin.size)
        out[start:start + chunk] = _p1(model, rows).reshape(mk.shape[0], k).mean(axis=1)
    return out


def _all_masks(m: int) -> np.ndarray:
    """Every coalition of size 1..m-1, ordered by size."""
    masks = []
    for s in range(1, m):
        for combo in combinations(range(m), s):
            z = np.zeros(m, dtype=np.int8)
            z[list(combo)] = 1
            masks.append(z)
    return np.array(masks, dtype=np.int8).reshape(-1, m)


def _constrained_wls(masks, y, weights, delta):
    """Minimise sum w (y - z.phi)^2 subject to sum(phi) = delta.

    The last coefficient is eliminated through the constraint and the rest
    solved from normal equations on the sqrt-weighted design.
    """
    m = masks.shape[1]
    z = masks.astype(float)
    A = z[:, :-1] - z[:, -1:]
    b = y - z[:, -1] * delta
    sw = np.sqrt(weights)
    Aw, bw = A * sw[:, None], b * sw
    if np.linalg.matrix_rank(Aw) < m - 1:
        raise ExplanationError(f"coalition design is rank deficient; at least {m} distinct "
                               f"coalitions (with varied sizes) are required")
    head = np.linalg.solve(Aw.T @ Aw, Aw.T @ bw)
    return np.append(head, delta - head.sum())


def explain_kernel_shap(model: BlackBoxModel, origin, config: ShapConfig, seed=0) -> AttributionVector:
    """Kernel SHAP with the empty/full coalitions imposed as hard constraints.

    Features whose origin value matches every reference row cannot change the
    model output and get exactly zero. The remaining ``M'`` features are
    enumerated exhaustively when ``M' <= exact_threshold`` (or when all
    coalitions fit in the sampling budget); otherwise ``n_coalitions`` masks
    are drawn with uniform size and importance-weighted back to the kernel.
    """
    origin = np.asarray(origin, dtype=float)
    bg = config.background
    m = origin.size
    if m < 2:
        raise ExplanationError("Kernel SHAP needs at least 2 features")
    if bg.shape[1] != m:
        raise ExplanationError("background width differs from origin width")
    phi0 = float(_p1(model, bg).mean())
    fx = float(_p1(model, origin)[0])
    varying = np.flatnonzero((bg != origin).any(axis=0))
    phi = np.zeros(m)
    mv = varying.size
    mode = "exact"
    if mv == 1:
        phi[varying] = fx - phi0
    elif mv >= 2:
        n_all = 2 ** mv - 2
        if mv <= config.exact_threshold or n_all <= config.n_coalitions:
            sub = _all_masks(mv)
            sizes = sub.sum(axis=1)
            weights = np.array([float(shapley_kernel_weight(mv, int(s))) for s in sizes])
        else:
            mode = "sampled"
            if config.n_coalitions < 2 * m:
                raise ExplanationError(f"n_coalitions must be >= 2M = {2 * m}")
            sub = sample_masks(mv, config.n_coalitions, np.random.default_rng(seed))
            sizes = sub.sum(axis=1)
            # uniform-size proposal -> Shapley kernel target
            weights = 1.0 / (sizes * (mv - sizes))
        full = np.ones((sub.shape[0], m), dtype=np.int8)
        full[:, varying] = sub
        y = coalition_values(model, origin, bg, full) - phi0
        phi[varying] = _constrained_wls(sub, y, weights, fx - phi0)
    return AttributionVector(phi0, phi, "shap", {"seed": seed, "mode": mode, "n_varying": int(mv)})


def exact_shapley(model: BlackBoxModel, origin, background, max_features: int = 20) -> AttributionVector:
    """Brute-force Shapley values over all 2^M coalitions.

    ``v(S)`` is the mean model output when features in ``S`` take the origin's
    values and the rest take each reference row's values.
    """
    origin = np.asarray(origin, dtype=float)
    bg = np.atleast_2d(np.asarray(background, dtype=float))
    m = origin.size
    if m > max_features:
        raise ExplanationError(f"exact Shapley limited to {max_features} features (got {m})")
    codes = np.arange(2 ** m)
    masks = ((codes[:, None] >> np.arange(m)) & 1).astype(np.int8)
    v = coalition_values(model, origin, bg, masks)
    size = masks.sum(axis=1)
    coef = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m)
                     for s in range(m)])
    phi = np.zeros(m)
    for i in range(m):
        without = codes[(codes >> i) & 1 == 0]
        phi[i] = np.sum(coef[size[without]] * (v[without | (1 << i)] - v[without]))
    return AttributionVector(float(v[0]), phi, "exact")
