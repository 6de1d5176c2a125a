"""Local explainers (LIME, Kernel SHAP, their product), the scaffolding attack that fools
them, and the experiments that measure how well it works."""

__version__ = "0.1.0"

from .core import (DataError, Dataset, Feature, FeatureSchema, FunctionModel, BlackBoxModel,  # noqa: E402
                   StandardizationStats, SyntheticConfig, fit_standardization, generate_synthetic, load_csv,
                   split, write_csv)
from .models import (ForestHyper, ForestModel, LogisticHyper, LogisticModel, RuleModel,  # noqa: E402
                     classification_metrics, evaluate, load_model, make_biased_rule, make_unbiased_rule,
                     save_model, train_forest, train_logistic)
from .perturb import (build_ood_training_set, kmeans_background, lime_perturb, medoid,  # noqa: E402
                      shap_perturb)
from .explainers import (AttributionVector, ExplanationError, LimeConfig, ShapConfig,  # noqa: E402
                         exact_shapley, explain_kernel_shap, explain_lime, rank_features)
from .adversarial import (OODDetector, ScaffoldModel, build_scaffold, degrade_detector,  # noqa: E402
                          fidelity, train_ood_detector)
from .ensemble import ShlimeConfig, explain_shlime_basic  # noqa: E402
from .experiments import (ExplainerSuite, ScaffoldIngredients, emit_report, run_pca,  # noqa: E402
                          run_sensitivity_sweep, run_top3, separability)

__all__ = [
    "__version__",
    "DataError",
    "Dataset",
    "Feature",
    "FeatureSchema",
    "FunctionModel",
    "BlackBoxModel",
    "StandardizationStats",
    "SyntheticConfig",
    "fit_standardization",
    "generate_synthetic",
    "load_csv",
    "split",
    "write_csv",
    "ForestHyper",
    "ForestModel",
    "LogisticHyper",
    "LogisticModel",
    "RuleModel",
    "classification_metrics",
    "evaluate",
    "load_model",
    "make_biased_rule",
    "make_unbiased_rule",
    "save_model",
    "train_forest",
    "train_logistic",
    "build_ood_training_set",
    "kmeans_background",
    "lime_perturb",
    "medoid",
    "shap_perturb",
    "AttributionVector",
    "ExplanationError",
    "LimeConfig",
    "ShapConfig",
    "exact_shapley",
    "explain_kernel_shap",
    "explain_lime",
    "rank_features",
    "OODDetector",
    "ScaffoldModel",
    "build_scaffold",
    "degrade_detector",
    "fidelity",
    "train_ood_detector",
    "ShlimeConfig",
    "explain_shlime_basic",
    "ExplainerSuite",
    "ScaffoldIngredients",
    "emit_report",
    "run_pca",
    "run_sensitivity_sweep",
    "run_top3",
    "separability",
]
