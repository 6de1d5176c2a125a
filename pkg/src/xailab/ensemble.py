"""SHLIME BASIC: per-feature product of LIME and Kernel SHAP attributions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import BlackBoxModel, StandardizationStats
from .explainers import AttributionVector, ExplanationError, LimeConfig, ShapConfig, explain_kernel_shap, \
    explain_lime

SIGN_POLICIES = ("signed_product", "lime_sign_shap_magnitude")


@dataclass(frozen=True)
class ShlimeConfig:
    shap: ShapConfig
    lime: LimeConfig = field(default_factory=LimeConfig)
    sign_policy: str = "signed_product"

    def __post_init__(self):
        if self.sign_policy not in SIGN_POLICIES:
            raise ValueError(f"sign_policy must be one of {SIGN_POLICIES}")


def combine(lime_weights, shap_weights, sign_policy: str = "signed_product") -> np.ndarray:
    """Multiply attributions feature by feature.

    ``signed_product`` keeps the sign of the raw product;
    ``lime_sign_shap_magnitude`` scales LIME by ``|SHAP|`` and keeps LIME's sign.
    """
    a = np.asarray(lime_weights, dtype=float)
    b = np.asarray(shap_weights, dtype=float)
    if a.shape != b.shape:
        raise ValueError("attribution vectors differ in length")
    if sign_policy == "signed_product":
        return a * b
    if sign_policy == "lime_sign_shap_magnitude":
        return a * np.abs(b)
    raise ValueError(f"unknown sign policy {sign_policy!r}")


def explain_shlime_basic(model: BlackBoxModel, origin, stats: StandardizationStats, config: ShlimeConfig,
                         seed=0) -> AttributionVector:
    """LIME (seed) and Kernel SHAP (seed + 1) explanations, multiplied together.

    The intercept is carried over from the SHAP explanation.
    """
    try:
        lime = explain_lime(model, origin, stats, config.lime, seed)
    except ExplanationError as exc:
        raise ExplanationError(f"lime: {exc}") from exc
    try:
        shap = explain_kernel_shap(model, origin, config.shap, seed + 1)
    except ExplanationError as exc:
        raise ExplanationError(f"shap: {exc}") from exc
    phi = combine(lime.weights, shap.weights, config.sign_policy)
    return AttributionVector(shap.intercept, phi, "shlime",
                             {"seed": seed, "sign_policy": config.sign_policy,
                              "lime": lime.weights, "shap": shap.weights})
