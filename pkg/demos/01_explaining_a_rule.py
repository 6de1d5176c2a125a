# %% [markdown]
# Explaining a model that only looks at one column
# ================================================
#
# The biased rule predicts class 1 exactly when `sensitive == 1`. Any honest
# explainer should put all of its weight there. We check LIME, Kernel SHAP
# and the brute-force Shapley oracle on a handful of rows.

# %%
import numpy as np

from xailab import (LimeConfig, ShapConfig, SyntheticConfig, exact_shapley, explain_kernel_shap, explain_lime,
                    fit_standardization, generate_synthetic, kmeans_background, make_biased_rule, rank_features)

data = generate_synthetic(SyntheticConfig(n_rows=2000, bias_strength=0.9, seed=1))
names = data.schema.names
print(names)
print("P(label == sensitive) =", np.mean(data.X[:, data.schema.sensitive_index] == data.y))

f = make_biased_rule(data.schema)
stats = fit_standardization(data)
background = kmeans_background(data, k=10, seed=0)  # 10 reference rows

# %% LIME on one row
x = data.X[0]
lime = explain_lime(f, x, stats, LimeConfig(n_samples=5000), seed=0)
for j in rank_features(lime)[:4]:
    print(f"  {names[j]:>12s} {lime.weights[j]:+.4f}")

# %% Kernel SHAP (11 features -> all 2046 coalitions are enumerated)
shap = explain_kernel_shap(f, x, ShapConfig(background), seed=0)
print("mode:", shap.meta["mode"])
print("phi_0 + sum(phi) =", shap.total, " f(x) =", f.predict_proba(x)[0, 1])
for j in rank_features(shap)[:4]:
    print(f"  {names[j]:>12s} {shap.weights[j]:+.4f}")

# %% The brute-force oracle agrees to machine precision
exact = exact_shapley(f, x, background)
print("max |kernel - exact| =", np.abs(shap.weights - exact.weights).max())

# %% Over 50 rows, how often is `sensitive` ranked first?
s = data.schema.sensitive_index
hits = {"lime": 0, "shap": 0}
for i in range(50):
    hits["lime"] += rank_features(explain_lime(f, data.X[i], stats, LimeConfig(n_samples=2000), seed=i))[0] == s
    hits["shap"] += rank_features(explain_kernel_shap(f, data.X[i], ShapConfig(background), seed=i))[0] == s
print({k: v / 50 for k, v in hits.items()})
