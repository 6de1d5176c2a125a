# %% [markdown]
# Config-driven runs and the manifest
# ===================================
#
# `xailab run CONFIG` writes a manifest before anything else and the result
# CSVs last. The manifest holds the fully resolved config, so it can be fed
# straight back to `xailab run`.

# %%
import json
import tempfile
from pathlib import Path

from xailab.cli import main

work = Path(tempfile.mkdtemp())
config = {
    "seed": 11,
    "dataset": {"synthetic": {"n_rows": 600}},
    "explainers": {"lime": {"n_samples": 1000}},
    "experiment": {"kind": "sweep", "explainers": ["lime", "shap"], "n_explain": 5, "f1_targets": [0.5, 0.7]},
}
(work / "config.json").write_text(json.dumps(config))

main(["run", str(work / "config.json"), "--out", str(work / "first")])
main(["run", str(work / "first" / "manifest.json"), "--out", str(work / "second")])

# %%
print((work / "first" / "sweep.csv").read_text())
for name in ("sweep.csv", "attributions.csv"):
    same = (work / "first" / name).read_bytes() == (work / "second" / name).read_bytes()
    print(name, "identical" if same else "DIFFERENT")

manifest = json.loads((work / "first" / "manifest.json").read_text())
print(json.dumps(manifest["result"]["levels"][:2], indent=1))
