"""Command-line entry point: ``xailab gen-data | run | version``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import copy
import datetime as _dt
import json
import os
import sys
import traceback
from dataclasses import dataclass, replace
from pathlib import Path

from . import __version__
from .adversarial import build_scaffold, train_ood_detector
from .core import DataError, FeatureSchema, SyntheticConfig, fit_standardization, generate_synthetic, \
    load_csv, split, write_csv
from .ensemble import SIGN_POLICIES
from .experiments import EXPLAINER_TAGS, ExplainerSuite, ScaffoldIngredients, derive_seed, emit_report, \
    result_summary, run_pca, run_sensitivity_sweep, run_top3, write_manifest
from .explainers import LimeConfig, ShapConfig
from .models import ForestHyper, LogisticHyper, make_biased_rule, make_unbiased_rule
from .perturb import kmeans_background

SEED_ENV = "XAILAB_SEED"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# --------------------------------------------------------------------------
# Config validation
# --------------------------------------------------------------------------

DEFAULTS = {
    "seed": 0,
    "split": {"test_fraction": 0.2},
    "models": {
        "psi_feature": None,  # default: first uncorrelated feature
        "detector": {"learner": "forest", "mode": "both", "n_per_instance": 4, "eval_fraction": 0.25,
                     "flip_policy": "miss",
                     "forest": {"n_trees": 50, "max_depth": 16, "max_features": "sqrt", "min_samples_leaf": 1},
                     "logistic": {"learning_rate": 0.1, "epochs": 500, "l2": 0.0}},
    },
    "explainers": {
        "lime": {"n_samples": 5000, "kernel_width": None, "max_features": None, "ridge": 1e-3},
        "shap": {"background_k": 10, "n_coalitions": 2048, "exact_threshold": 10},
        "shlime": {"sign_policy": "signed_product"},
    },
    "experiment": {"kind": "top3", "explainers": ["lime", "shap"], "n_explain": 100,
                   "f1_targets": [0.5, 0.6, 0.7, 0.8, 0.9], "tolerance": 0.02,
                   "pca_mode": "lime", "pca_n_per_instance": 1},
}
SYNTHETIC_DEFAULTS = {"n_rows": 2000, "n_noise_features": 8, "bias_strength": 0.9, "n_uncorrelated": 2,
                      "seed": None, "noise_grid": 1.0}


def _merge(defaults: dict, given, path: str) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(path, "expected an object")
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        sub = f"{path}.{key}"
        if key not in defaults:
            raise ConfigError(sub, "unknown field")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], val, sub)
        else:
            out[key] = val
    return out


def _num(cfg, path, key, kind=float, lo=None, hi=None, optional=False):
    v = cfg[key]
    p = f"{path}.{key}"
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not isinstance(v, int)):
        raise ConfigError(p, f"expected {'an integer' if kind is int else 'a number'}, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(p, f"must be >= {lo}")
    if hi is not None and v > hi:
        raise ConfigError(p, f"must be <= {hi}")
    return kind(v)


def _choice(cfg, path, key, options):
    v = cfg[key]
    if v not in options:
        raise ConfigError(f"{path}.{key}", f"must be one of {list(options)}, got {v!r}")
    return v


def validate_config(raw: dict, base_dir: Path | None = None) -> dict:
    """Fill defaults, check every field and return the resolved config.

    The resolved config is self-contained: CSV paths are made absolute and
    the synthetic seed is filled in, so it can be rerun verbatim.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config", "expected a JSON object")
    raw = dict(raw)
    if "dataset" not in raw:
        raise ConfigError("config.dataset", "missing (give exactly one of 'synthetic' or 'csv')")
    ds = raw.pop("dataset")
    out_dir = raw.pop("out", None)
    cfg = _merge(DEFAULTS, raw, "config")
    seed = _num(cfg, "config", "seed", int, lo=0)
    cfg["seed"] = seed

    if not isinstance(ds, dict) or len(ds) != 1 or next(iter(ds)) not in ("synthetic", "csv"):
        raise ConfigError("config.dataset", "must hold exactly one of 'synthetic' or 'csv'")
    if "synthetic" in ds:
        syn = _merge(SYNTHETIC_DEFAULTS, ds["synthetic"], "config.dataset.synthetic")
        p = "config.dataset.synthetic"
        _num(syn, p, "n_rows", int, lo=10)
        _num(syn, p, "n_noise_features", int, lo=0)
        _num(syn, p, "bias_strength", float, lo=0, hi=1)
        _num(syn, p, "n_uncorrelated", int, lo=1)
        _num(syn, p, "noise_grid", float, lo=0)
        syn["seed"] = seed if syn["seed"] is None else _num(syn, p, "seed", int, lo=0)
        cfg["dataset"] = {"synthetic": syn}
    else:
        c = ds["csv"]
        if not isinstance(c, dict) or set(c) != {"data", "schema"}:
            raise ConfigError("config.dataset.csv", "needs exactly the fields 'data' and 'schema'")
        resolved = {}
        for key in ("data", "schema"):
            if not isinstance(c[key], str):
                raise ConfigError(f"config.dataset.csv.{key}", "expected a path string")
            pth = Path(c[key])
            if not pth.is_absolute() and base_dir is not None:
                pth = base_dir / pth
            resolved[key] = str(pth.resolve())
        cfg["dataset"] = {"csv": resolved}
    cfg["out"] = out_dir

    _num(cfg["split"], "config.split", "test_fraction", float, lo=0.01, hi=0.99)
    det = cfg["models"]["detector"]
    p = "config.models.detector"
    _choice(det, p, "learner", ("forest", "logistic"))
    _choice(det, p, "mode", ("lime", "shap", "both"))
    _choice(det, p, "flip_policy", ("miss", "symmetric"))
    _num(det, p, "n_per_instance", int, lo=1)
    _num(det, p, "eval_fraction", float, lo=0.01, hi=0.99)
    _num(det["forest"], p + ".forest", "n_trees", int, lo=1)
    _num(det["forest"], p + ".forest", "max_depth", int, lo=1)
    _num(det["forest"], p + ".forest", "min_samples_leaf", int, lo=1)
    mf = det["forest"]["max_features"]
    if not (mf in ("sqrt", "all") or (isinstance(mf, int) and not isinstance(mf, bool) and mf >= 1)):
        raise ConfigError(p + ".forest.max_features", "must be 'sqrt', 'all' or a positive integer")
    _num(det["logistic"], p + ".logistic", "learning_rate", float, lo=1e-12)
    _num(det["logistic"], p + ".logistic", "epochs", int, lo=1)
    _num(det["logistic"], p + ".logistic", "l2", float, lo=0)

    ex = cfg["explainers"]
    _num(ex["lime"], "config.explainers.lime", "n_samples", int, lo=2)
    _num(ex["lime"], "config.explainers.lime", "kernel_width", float, lo=1e-12, optional=True)
    _num(ex["lime"], "config.explainers.lime", "max_features", int, lo=1, optional=True)
    _num(ex["lime"], "config.explainers.lime", "ridge", float, lo=0)
    _num(ex["shap"], "config.explainers.shap", "background_k", int, lo=1)
    _num(ex["shap"], "config.explainers.shap", "n_coalitions", int, lo=2)
    _num(ex["shap"], "config.explainers.shap", "exact_threshold", int, lo=1, hi=20)
    _choice(ex["shlime"], "config.explainers.shlime", "sign_policy", SIGN_POLICIES)

    e = cfg["experiment"]
    p = "config.experiment"
    _choice(e, p, "kind", ("top3", "sweep", "pca"))
    if not isinstance(e["explainers"], list) or not e["explainers"]:
        raise ConfigError(p + ".explainers", "expected a non-empty list")
    for i, tag in enumerate(e["explainers"]):
        if tag not in EXPLAINER_TAGS:
            raise ConfigError(f"{p}.explainers[{i}]", f"unknown explainer tag {tag!r}; "
                                                      f"choose from {list(EXPLAINER_TAGS)}")
    _num(e, p, "n_explain", int, lo=1)
    _num(e, p, "tolerance", float, lo=0)
    if not isinstance(e["f1_targets"], list) or not e["f1_targets"]:
        raise ConfigError(p + ".f1_targets", "expected a non-empty list")
    for i, t in enumerate(e["f1_targets"]):
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not 0 < t <= 1:
            raise ConfigError(f"{p}.f1_targets[{i}]", f"must be a number in (0, 1], got {t!r}")
    if any(b <= a for a, b in zip(e["f1_targets"], e["f1_targets"][1:])):
        raise ConfigError(p + ".f1_targets", "must be strictly ascending")
    _choice(e, p, "pca_mode", ("lime", "shap", "both"))
    _num(e, p, "pca_n_per_instance", int, lo=1)
    return cfg


def _check_feature_names(cfg: dict, schema: FeatureSchema) -> None:
    name = cfg["models"]["psi_feature"]
    if name is None:
        if not schema.uncorrelated_indices:
            raise ConfigError("config.models.psi_feature", "schema has no uncorrelated feature to default to")
        return
    if name not in schema.names:
        raise ConfigError("config.models.psi_feature", f"unknown feature {name!r}")


def load_config(path) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} does not parse: {exc}") from exc
    if isinstance(raw, dict) and "artifact_version" in raw and "config" in raw:
        raw = raw["config"]  # a manifest: rerun its resolved config
    return raw


# --------------------------------------------------------------------------
# Pipeline
# --------------------------------------------------------------------------

@dataclass
class Pipeline:
    cfg: dict
    seed: int
    parallel: int = 1

    def dataset(self):
        ds = self.cfg["dataset"]
        if "synthetic" in ds:
            return generate_synthetic(SyntheticConfig(**ds["synthetic"]))
        return load_csv(ds["csv"]["data"], ds["csv"]["schema"])

    def run(self):
        cfg, seed = self.cfg, self.seed
        data = self.dataset()
        _check_feature_names(cfg, data.schema)
        exp = cfg["experiment"]
        if exp["kind"] == "pca":
            return run_pca(data, exp["pca_mode"], exp["pca_n_per_instance"], derive_seed(seed, 13)), data.schema

        train, test = split(data, cfg["split"]["test_fraction"], derive_seed(seed, 10))
        stats = fit_standardization(train)
        sh = cfg["explainers"]["shap"]
        background = kmeans_background(train, sh["background_k"], derive_seed(seed, 11))
        lime = LimeConfig(**cfg["explainers"]["lime"])
        suite = ExplainerSuite(stats, ShapConfig(background, sh["n_coalitions"], sh["exact_threshold"]), lime,
                               cfg["explainers"]["shlime"]["sign_policy"])

        schema = data.schema
        f = make_biased_rule(schema)
        psi_name = cfg["models"]["psi_feature"]
        psi_idx = schema.uncorrelated_indices[0] if psi_name is None else schema.index_of(psi_name)
        psi = make_unbiased_rule(schema, psi_idx)

        d = cfg["models"]["detector"]
        det_seed = derive_seed(seed, 12)
        if d["learner"] == "forest":
            fh = dict(d["forest"])
            fh["max_features"] = None if fh["max_features"] == "all" else fh["max_features"]
            hyper = ForestHyper(**fh, seed=det_seed)
        else:
            hyper = LogisticHyper(**d["logistic"])
        trained = train_ood_detector(train, d["mode"], d["learner"], hyper, det_seed,
                                     n_per_instance=d["n_per_instance"], eval_fraction=d["eval_fraction"],
                                     stats=stats, background=background)
        detector = replace(trained.detector, flip_policy=d["flip_policy"])

        if exp["kind"] == "top3":
            models = [("biased", f), ("scaffold", build_scaffold(f, psi, detector))]
            return run_top3(models, exp["explainers"], test, exp["n_explain"], derive_seed(seed, 14),
                            suite=suite), schema
        ingredients = ScaffoldIngredients(f, psi, detector, trained.eval_set, exp["tolerance"])
        return run_sensitivity_sweep(exp["f1_targets"], exp["explainers"], ingredients, test, exp["n_explain"],
                                     derive_seed(seed, 15), suite=suite, parallel=self.parallel), schema


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _runtime_tag(exc: BaseException) -> str:
    mod = type(exc).__module__
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("xailab."):
            mod = name
    return mod.rsplit(".", 1)[-1]


def cmd_run(args) -> int:
    raw = load_config(args.config)
    cfg = validate_config(raw, Path(args.config).resolve().parent)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            cfg["seed"] = int(env)
        except ValueError:
            raise ConfigError(SEED_ENV, f"expected an integer, got {env!r}") from None
        if "synthetic" in cfg["dataset"] and not (isinstance(raw.get("dataset"), dict) and
                                                  "seed" in raw["dataset"].get("synthetic", {})):
            cfg["dataset"]["synthetic"]["seed"] = cfg["seed"]
    out = Path(args.out or cfg["out"] or "xailab_out")
    cfg["out"] = None  # the manifest must not pin an output location
    manifest = {"artifact_version": __version__, "config": cfg, "seed": cfg["seed"], "status": "running",
                "started": _now(), "command": "run"}
    write_manifest(out, manifest)
    result, schema = Pipeline(cfg, cfg["seed"], parallel=max(1, args.parallel)).run()
    emit_report(result, out, schema.names)
    manifest.update(status="complete", finished=_now(), result=result_summary(result))
    write_manifest(out, manifest)
    print(f"wrote results to {out}")
    return 0


def cmd_gen_data(args) -> int:
    config = SyntheticConfig(n_rows=args.rows, n_noise_features=args.noise_features, bias_strength=args.bias,
                             n_uncorrelated=args.uncorrelated, seed=args.seed)
    data = generate_synthetic(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(data, out / "data.csv", out / "schema.json")
    print(f"wrote {len(data)} rows to {out / 'data.csv'} and {out / 'schema.json'}")
    return 0


def cmd_version(args) -> int:
    print(f"xailab {__version__}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xailab", description="Explainer robustness experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic biased dataset and its schema")
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--bias", type=float, default=0.9, help="P(label == sensitive attribute)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise-features", type=int, default=8)
    g.add_argument("--uncorrelated", type=int, default=2)
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run", help="run an experiment from a JSON config (or a previous manifest)")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--parallel", type=int, default=1, help="concurrent sweep cells")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("version", help="print the package version")
    v.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # usage errors exit 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, DataError) as exc:
        if args.command == "gen-data":
            print(f"usage error: {exc}", file=sys.stderr)
            return 2
        print(f"error [{_runtime_tag(exc)}]: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report and exit non-zero
        print(f"error [{_runtime_tag(exc)}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
