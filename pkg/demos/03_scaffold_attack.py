# %% [markdown]
# Hiding a biased model behind a scaffold
# =======================================
#
# e(x) answers with the biased rule f on rows the detector believes are real
# and with an innocuous rule psi (which reads `unrelated_0`) everywhere else.
# Real users see f; explainers, which query mostly perturbed rows, see psi.

# %%
from xailab import (ExplainerSuite, ForestHyper, ShapConfig, SyntheticConfig, build_scaffold, fidelity,
                    fit_standardization, generate_synthetic, kmeans_background, make_biased_rule,
                    make_unbiased_rule, run_top3, split, train_ood_detector)

data = generate_synthetic(SyntheticConfig(n_rows=2000, seed=1))
train, test = split(data, 0.2, 0)
stats = fit_standardization(train)
background = kmeans_background(train, 10, 0)
schema = data.schema

f = make_biased_rule(schema)
psi = make_unbiased_rule(schema, schema.uncorrelated_indices[0])
trained = train_ood_detector(train, "both", "forest", ForestHyper(n_trees=50, max_depth=16, seed=0), seed=0,
                             n_per_instance=4, stats=stats, background=background)
e = build_scaffold(f, psi, trained.detector)
print("detector F1:", round(trained.detector.heldout_f1, 3))
print("fidelity to f on real test rows:", fidelity(e, f, test))

# %% top-3 occurrence, 40 test rows
suite = ExplainerSuite(stats, ShapConfig(background))
report = run_top3([("biased", f), ("scaffold", e)], ["lime", "shap"], test, n_explain=40, seed=0, suite=suite)
for (model, explainer), fractions in report.fractions.items():
    top = sorted(fractions.items(), key=lambda kv: -kv[1])[:3]
    print(f"{model:>9s} / {explainer:<5s}", ", ".join(f"{n} {v:.2f}" for n, v in top),
          f"| sensitive {fractions['sensitive']:.2f}")

# %% [markdown]
# LIME is fooled almost completely. SHAP's coalitions are harder to flag, and
# the ones that slip through still leak some weight onto `sensitive`.
