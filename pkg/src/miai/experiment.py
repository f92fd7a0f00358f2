"""Experiment configs, presets and the end-to-end runner."""

from __future__ import annotations

import copy
import json
import logging
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import metrics
from .attacks import (ConfidenceModelingAttack, ConfidenceScoreAttack, FredriksonAttack, NaiveAttack,
                      RandomGuessingAttack, split_targets)
from .dataset import Dataset, Schema, builtin_schema, load_csv, preprocess_adult, preprocess_gss, split
from .models import confusion_matrix, importance, train_decision_tree, train_neural_net
from .oracle import HTTPOracle, LocalOracle, Oracle, QueryLedger

logger = logging.getLogger(__name__)

DATA_ENV = "MIAI_DATA_DIR"

# capability matrix: which knowledge each attack needs / may use
REQUIRES = {
    "naive": {"priors"},
    "random": set(),
    "fjrmia": {"priors", "confusion"},
    "cmmia": {"ds_a"},
    "csmia": set(),
    "csmia_partial": {"unknown"},
}
ALLOWED = {
    "naive": {"priors"},
    "random": {"priors"},
    "fjrmia": {"priors", "confusion"},
    "cmmia": {"ds_a"},
    "csmia": {"priors", "confusion"},
    "csmia_partial": {"unknown", "priors", "confusion"},
}
TABLE_ORDER = ("naive", "random", "fjrmia", "cmmia", "csmia", "csmia_partial")
EACH_BY_IMPORTANCE = "each-by-importance"
PREPROCESSORS = {"adult": preprocess_adult, "gss": preprocess_gss, "none": lambda d: d}


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def data_dir() -> Path:
    return Path(os.environ.get(DATA_ENV, "data"))


@dataclass
class ExperimentConfig:
    dataset: dict
    model: dict = field(default_factory=lambda: {"family": "decision-tree"})
    oracle: dict = field(default_factory=lambda: {"kind": "local", "cache": False})
    attacks: list = field(default_factory=list)
    analysis: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    name: str = "experiment"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"dataset", "model", "oracle", "attacks", "analysis", "output", "name"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "dataset" not in d:
            raise ConfigError("config needs a dataset section")
        return cls(**copy.deepcopy(d))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return {"name": self.name, "dataset": self.dataset, "model": self.model, "oracle": self.oracle,
                "attacks": self.attacks, "analysis": self.analysis, "output": self.output}

    def override_seed(self, seed: int) -> "ExperimentConfig":
        cfg = ExperimentConfig.from_dict(self.to_dict())
        cfg.dataset["split_seed"] = seed
        cfg.model["seed"] = seed
        for a in cfg.attacks:
            if a["name"] == "random":
                a.setdefault("params", {})["seed"] = seed
        return cfg

    def validate(self) -> None:
        ds = self.dataset
        if "csv" not in ds:
            raise ConfigError("dataset.csv is required")
        for key in ("csv", "schema"):
            if key in ds and not Path(ds[key]).exists():
                raise ConfigError(f"dataset.{key}: no such file {ds[key]}")
        if ds.get("preprocess", "none") not in PREPROCESSORS:
            raise ConfigError(f"unknown preprocessing preset {ds.get('preprocess')!r}")
        if self.model.get("family") not in ("decision-tree", "neural-net"):
            raise ConfigError(f"unknown model family {self.model.get('family')!r}")
        if "path" in self.model and not Path(self.model["path"]).exists():
            raise ConfigError(f"model.path: no such file {self.model['path']}")
        kind = self.oracle.get("kind", "local")
        if kind not in ("local", "http"):
            raise ConfigError(f"unknown oracle kind {kind!r}")
        if kind == "http" and "url" not in self.oracle:
            raise ConfigError("an http oracle needs oracle.url")
        if not self.attacks:
            raise ConfigError("no attacks configured")
        for a in self.attacks:
            validate_attack(a, has_ds_a="n_A" in ds)


def validate_attack(spec: dict, has_ds_a: bool = True) -> None:
    """Check an attack's knowledge flags against the capability matrix."""
    name = spec.get("name")
    if name not in REQUIRES:
        raise ConfigError(f"unknown attack {name!r}")
    know = {k for k, v in spec.get("knowledge", {}).items() if v}
    missing = REQUIRES[name] - know
    if missing:
        raise ConfigError(
            f"attack {name!r} requires {sorted(missing)} by the adversary capability matrix")
    forbidden = know - ALLOWED[name]
    if forbidden:
        raise ConfigError(f"attack {name!r} may not use {sorted(forbidden)}")
    if "ds_a" in know and not has_ds_a:
        raise ConfigError(f"attack {name!r} needs DS_A but dataset.n_A is not set")
    unknown = spec.get("knowledge", {}).get("unknown")
    if unknown and name == "csmia_partial" and unknown != EACH_BY_IMPORTANCE:
        if isinstance(unknown, str):
            unknown = [unknown]
        sets = unknown if isinstance(unknown[0], (list, tuple)) else [unknown]
        for s in sets:
            if not 1 <= len(s) <= 2:
                raise ConfigError("each unknown-attribute set must name one or two attributes")


# -- presets -----------------------------------------------------------------

def _dataset_section(name: str) -> dict:
    root = data_dir() / name
    if name == "adult":
        return {"name": "adult", "csv": str(root / "adult.csv"), "preprocess": "adult",
                "n_A": 10_000, "split_seed": 0}
    return {"name": "gss", "csv": str(root / "gss.csv"), "preprocess": "gss", "n_A": 5_079, "split_seed": 0}


STANDARD_ATTACKS = [
    {"name": "naive", "knowledge": {"priors": "DS_T"}},
    {"name": "random", "params": {"p_positive": 0.5, "seed": 0}},
    {"name": "fjrmia", "knowledge": {"priors": "DS_T", "confusion": "DS_T"}},
    {"name": "cmmia", "knowledge": {"ds_a": True}},
    {"name": "csmia"},
]
PARTIAL_PAIRS = [["occupation", "capital-gain"], ["occupation", "hours-per-week"], ["occupation", "capital-loss"]]


def preset(name: str) -> ExperimentConfig:
    presets = {
        "gss-dt": ("gss", "decision-tree"),
        "gss-nn": ("gss", "neural-net"),
        "adult-dt": ("adult", "decision-tree"),
        "adult-nn": ("adult", "neural-net"),
        "adult-partial": ("adult", "decision-tree"),
    }
    if name not in presets:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(presets)}")
    ds, family = presets[name]
    if name == "adult-partial":
        attacks = [{"name": "csmia"},
                   {"name": "csmia_partial", "knowledge": {"unknown": EACH_BY_IMPORTANCE}},
                   {"name": "csmia_partial", "knowledge": {"unknown": PARTIAL_PAIRS}}]
    else:
        attacks = copy.deepcopy(STANDARD_ATTACKS)
    analysis = {"per_class": True}
    if ds == "adult":
        analysis["groups"] = "edu"
    return ExperimentConfig(dataset=_dataset_section(ds), model={"family": family, "seed": 0},
                            attacks=attacks, analysis=analysis, name=name)


# -- running -----------------------------------------------------------------

@dataclass
class Prepared:
    full: Dataset
    ds_a: Dataset | None
    ds_t: Dataset


def prepare(cfg: ExperimentConfig) -> Prepared:
    ds = cfg.dataset
    schema = Schema.load(ds["schema"]) if "schema" in ds else builtin_schema(ds.get("name", "adult"))
    data = PREPROCESSORS[ds.get("preprocess", "none")](load_csv(ds["csv"], schema))
    if "n_A" in ds:
        ds_a, ds_t = split(data, int(ds["n_A"]), int(ds.get("split_seed", 0)))
    else:
        ds_a, ds_t = None, Dataset(data.schema, data.frame, "DS_T")
    return Prepared(data, ds_a, ds_t)


def train(cfg: ExperimentConfig, ds_t: Dataset):
    from .models import TargetModel

    m = cfg.model
    if "path" in m:
        return TargetModel.load(m["path"])
    params = dict(m.get("params", {}))
    if m["family"] == "decision-tree":
        return train_decision_tree(ds_t, **params)
    params.setdefault("seed", m.get("seed", 0))
    return train_neural_net(ds_t, **params)


def connect(cfg: ExperimentConfig, model, ledger: QueryLedger) -> Oracle:
    o = cfg.oracle
    kw = {"cache": bool(o.get("cache", False)), "ledger": ledger, "expose_scores": bool(o.get("expose_scores", False))}
    if o.get("kind", "local") == "http":
        return HTTPOracle(o["url"], **kw)
    return LocalOracle(model, **kw)


def _source(which: str, prep: Prepared) -> Dataset:
    if which in ("DS_T", True):
        return prep.ds_t
    if which == "DS_A" and prep.ds_a is not None:
        return prep.ds_a
    raise ConfigError(f"unknown knowledge source {which!r}")


def _unknown_sets(spec, model, schema: Schema) -> list[tuple[str, ...]]:
    unknown = spec["knowledge"]["unknown"]
    if unknown == EACH_BY_IMPORTANCE:
        names = [a.name for a in schema.features]
        if model is not None and model.family == "decision-tree":
            imp = importance(model)
            names.sort(key=lambda n: -imp.get(n, 0.0))
        return [(n,) for n in names]
    if isinstance(unknown, str):
        return [(unknown,)]
    if unknown and isinstance(unknown[0], (list, tuple)):
        return [tuple(u) for u in unknown]
    return [tuple(unknown)]


def build_attacks(spec: dict, prep: Prepared, oracle: Oracle, model) -> list[tuple[str, Any]]:
    """Instantiate (label, fitted attack) pairs for one attack spec."""
    name = spec["name"]
    know = spec.get("knowledge", {})
    params = dict(spec.get("params", {}))
    schema = prep.ds_t.schema
    domain = schema.sensitive.domain
    priors = _source(know["priors"], prep).priors() if know.get("priors") else None
    if name == "naive":
        return [(name, NaiveAttack(priors, domain).fit())]
    if name == "random":
        return [(name, RandomGuessingAttack(domain, schema.positive, **params))]
    if name == "fjrmia":
        src = _source(know["confusion"], prep)
        if model is None:
            raise ConfigError("fjrmia against a remote oracle needs a local model to derive the confusion matrix")
        return [(name, FredriksonAttack(oracle, priors, confusion_matrix(model, src)).fit())]
    if name == "cmmia":
        return [(name, ConfidenceModelingAttack(oracle, **params).fit(prep.ds_a))]
    if name == "csmia":
        return [(name, ConfidenceScoreAttack(oracle))]
    return [(f"csmia_partial[{'+'.join(u)}]", ConfidenceScoreAttack(oracle, unknown=u).fit())
            for u in _unknown_sets(spec, model, schema)]


def _prediction_rows(preds) -> list[dict]:
    return [p.to_dict() for p in preds]


def run(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Execute prepare -> train -> attack -> score and return the report bundle.

    When ``out_dir`` is given the bundle, prediction dumps and plot data are
    written there; on failure nothing is left behind.
    """
    cfg.validate()
    stage = "prepare"
    try:
        prep = prepare(cfg)
        stage = "train"
        model = None if cfg.oracle.get("kind") == "http" and "path" not in cfg.model else train(cfg, prep.ds_t)
        stage = "connect"
        ledger = QueryLedger()
        oracle = connect(cfg, model, ledger)
        X, y = split_targets(prep.ds_t)
        truth = prep.ds_t.sensitive_values
        positive = prep.ds_t.schema.positive

        results, predictions = {}, {}
        for spec in sorted(cfg.attacks, key=lambda s: TABLE_ORDER.index(s["name"])):
            stage = f"attack:{spec['name']}"
            for label, attack in build_attacks(spec, prep, oracle, model):
                with oracle.run(label):
                    preds = attack.attack(X, y)
                stage = f"score:{label}"
                report = metrics.score(preds, truth, positive)
                if cfg.analysis.get("per_class"):
                    metrics.slices_with(report, metrics.per_class_breakdown(
                        preds, truth, prep.ds_t.labels, positive, prep.ds_t.schema.target.domain), "class")
                if cfg.analysis.get("groups") == "edu":
                    metrics.slices_with(report, metrics.group_analysis(
                        preds, truth, metrics.edu_grouping(prep.ds_t.frame), positive), "group")
                results[label] = report
                predictions[label] = preds
                stage = f"attack:{spec['name']}"

        bundle = {
            "name": cfg.name,
            "config": cfg.to_dict(),
            "seeds": {"split": cfg.dataset.get("split_seed"), "model": cfg.model.get("seed")},
            "sizes": {"n": prep.full.n, "n_A": prep.ds_a.n if prep.ds_a is not None else 0, "n_T": prep.ds_t.n},
            "model": {"family": model.family if model else "remote",
                      "importance": importance(model) if model is not None and model.family == "decision-tree" else None,
                      "confusion": confusion_matrix(model, prep.ds_t).to_dict() if model is not None else None},
            "ledger": ledger.snapshot(),
            "reports": {k: v.to_dict() for k, v in results.items()},
            "comparison": comparison_rows(results),
        }
        if out_dir is not None:
            stage = "write"
            write_bundle(bundle, predictions, results, out_dir)
        return bundle
    except ExperimentError:
        raise
    except Exception as e:
        raise ExperimentError(stage, e) from e


def comparison_rows(results: dict) -> list[dict]:
    rows = []
    for label, rep in results.items():
        c = rep.counts
        rows.append({"attack": label, "tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn, **rep.percent()})
    return rows


def plot_rows(results: dict) -> list[dict]:
    """Long-format (attack, slice, metric, value) rows for external plotting."""
    out = []
    for label, rep in results.items():
        for row in rep.rows("all"):
            for m in metrics.METRICS:
                out.append({"attack": label, "slice": row["slice"], "metric": m, "value": row[m]})
    return out


def write_bundle(bundle: dict, predictions: dict, results: dict, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".miai-", dir=out_dir.parent))
    try:
        (tmp / "report.json").write_text(json.dumps(bundle, indent=1, sort_keys=True, default=str))
        (tmp / "comparison.csv").write_text(metrics.rows_to_csv(bundle["comparison"]))
        (tmp / "plot_data.csv").write_text(metrics.rows_to_csv(plot_rows(results)))
        for label, rep in results.items():
            safe = label.replace("/", "_")
            (tmp / f"report_{safe}.csv").write_text(rep.to_csv())
            rows = _prediction_rows(predictions[label])
            (tmp / f"predictions_{safe}.csv").write_text(metrics.rows_to_csv(rows))
            (tmp / f"predictions_{safe}.json").write_text(json.dumps(rows, default=str))
        (tmp / "run_info.json").write_text(json.dumps({"finished": time.strftime("%Y-%m-%dT%H:%M:%S")}))
        if out_dir.exists():
            shutil.rmtree(out_dir)
        tmp.rename(out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def format_table(rows: list[dict]) -> str:
    cols = ["attack", "tp", "tn", "fp", "fn", *metrics.METRICS]
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in cols} if rows else {c: len(c) for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    for r in rows:
        lines.append("  ".join(str(r[c]).ljust(widths[c]) for c in cols))
    return "\n".join(lines)
