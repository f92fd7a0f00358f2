"""Command-line entry point: ``miai <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment, metrics
from .attacks import split_targets
from .dataset import Schema, builtin_schema, convert_uci_adult, load_csv, split
from .experiment import ConfigError, ExperimentConfig, ExperimentError
from .models import TargetModel, confusion_matrix, train_decision_tree, train_neural_net
from .oracle import HTTPOracle, LocalOracle, QueryLedger, serve

log = logging.getLogger("miai")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_prepare_data(args) -> int:
    out = Path(args.out_dir or experiment.data_dir() / args.dataset)
    out.mkdir(parents=True, exist_ok=True)
    if args.dataset == "adult":
        if not args.raw:
            raise SystemExit("prepare-data adult needs --raw adult.data [adult.test]")
        n = convert_uci_adult(args.raw, out / "adult.csv")
        log.info("wrote %d raw rows to %s", n, out / "adult.csv")
        raw_csv = out / "adult.csv"
    else:
        raw_csv = Path(args.raw[0]) if args.raw else out / "gss.csv"
    schema = Schema.load(args.schema) if args.schema else builtin_schema(args.dataset)
    data = experiment.PREPROCESSORS[args.dataset](load_csv(raw_csv, schema))
    data.schema.dump(out / "schema.json")
    data.frame.to_csv(out / "clean.csv", index=False)
    print(f"{data.n} records after preprocessing -> {out / 'clean.csv'}")
    if args.n_a:
        ds_a, ds_t = split(data, args.n_a, args.seed)
        ds_a.frame.to_csv(out / "ds_a.csv", index=False)
        ds_t.frame.to_csv(out / "ds_t.csv", index=False)
        print(f"split seed {args.seed}: DS_A {ds_a.n}, DS_T {ds_t.n}")
    return 0


def _dataset(path, schema_path):
    return load_csv(path, Schema.load(schema_path))


def cmd_train_target(args) -> int:
    ds = _dataset(args.data, args.schema)
    if args.family == "decision-tree":
        model = train_decision_tree(ds, max_depth=args.max_depth, min_leaf_count=args.min_leaf)
    else:
        model = train_neural_net(ds, hidden=tuple(args.hidden), epochs=args.epochs,
                                 learning_rate=args.learning_rate, seed=args.seed)
    model.save(args.out)
    cm = confusion_matrix(model, ds)
    acc = sum(cm.counts[i][i] for i in range(len(cm.labels))) / cm.total
    print(f"{args.family} trained on {ds.n} records, training accuracy {100 * acc:.2f}% -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    serve(TargetModel.load(args.model), args.bind, args.expose_scores)
    return 0


def _attack_spec(args) -> dict:
    know = {}
    if args.priors_from:
        know["priors"] = args.priors_from
    if args.confusion_from:
        know["confusion"] = args.confusion_from
    if args.ds_a:
        know["ds_a"] = True
    if args.unknown:
        know["unknown"] = args.unknown.split(",")
    params = {}
    if args.attack == "random":
        params = {"p_positive": 0.5 if args.p_positive is None else args.p_positive,
                  "seed": args.seed or 0}
    return {"name": args.attack, "knowledge": know, "params": params}


ATTACK_CONFIG_KEYS = {"attack", "model", "url", "schema", "targets", "ds_a", "knowledge", "seed", "cache",
                      "p_positive", "out"}


def _merge_attack_config(args) -> None:
    """Fill unset ``attack`` options from a JSON run config; flags given on the command line win."""
    cfg = json.loads(Path(args.config).read_text())
    extra = set(cfg) - ATTACK_CONFIG_KEYS
    if extra:
        raise ConfigError(f"unknown attack config keys: {sorted(extra)}")
    know = cfg.pop("knowledge", {})
    cfg.setdefault("priors_from", know.get("priors"))
    cfg.setdefault("confusion_from", know.get("confusion"))
    if know.get("ds_a") and isinstance(know["ds_a"], str):
        cfg.setdefault("ds_a", know["ds_a"])
    if know.get("unknown"):
        u = know["unknown"]
        cfg.setdefault("unknown", u if isinstance(u, str) else ",".join(u))
    for key, value in cfg.items():
        if getattr(args, key, None) in (None, False):
            setattr(args, key, value)
    for key in ("attack", "schema", "targets", "out"):
        if not getattr(args, key, None):
            raise ConfigError(f"attack run needs {key!r}")
    if args.attack not in experiment.REQUIRES:
        raise ConfigError(f"unknown attack {args.attack!r}")


def cmd_attack(args) -> int:
    if args.config:
        _merge_attack_config(args)
    elif not (args.attack and args.schema and args.targets and args.out):
        raise ConfigError("attack needs --attack, --schema, --targets and --out (or --config)")
    spec = _attack_spec(args)
    experiment.validate_attack(spec, has_ds_a=bool(args.ds_a))
    ds_t = _dataset(args.targets, args.schema)
    ds_a = _dataset(args.ds_a, args.schema) if args.ds_a else None
    if ds_a is not None:
        ds_a = type(ds_a)(ds_a.schema, ds_a.frame, "DS_A")
    model = TargetModel.load(args.model) if args.model else None
    ledger = QueryLedger()
    if args.url:
        oracle = HTTPOracle(args.url, cache=args.cache, ledger=ledger)
    elif model is not None:
        oracle = LocalOracle(model, cache=args.cache, ledger=ledger)
    else:
        raise SystemExit("attack needs --model or --url")
    prep = experiment.Prepared(ds_t, ds_a, ds_t)
    X, y = split_targets(ds_t)
    rows = []
    for label, attack in experiment.build_attacks(spec, prep, oracle, model):
        with oracle.run(label):
            preds = attack.attack(X, y)
        rows.extend({"attack": label, **p.to_dict()} for p in preds)
    out = Path(args.out)
    if out.suffix == ".json":
        _write(out, json.dumps(rows, default=str))
    else:
        _write(out, metrics.rows_to_csv(rows))
    print(f"{len(rows)} predictions -> {out}; queries {json.dumps(ledger.snapshot(), sort_keys=True)}")
    return 0


def _load_predictions(path: Path) -> list[dict]:
    if path.suffix == ".json":
        return json.loads(path.read_text())
    import csv

    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def cmd_evaluate(args) -> int:
    ds = _dataset(args.truth, args.schema)
    rows = _load_predictions(Path(args.predictions))
    by_attack: dict = {}
    for r in rows:
        by_attack.setdefault(r.get("attack", "attack"), {})[int(r["record_id"])] = r["value"]
    truth = ds.sensitive_values
    results = {}
    for label, preds in by_attack.items():
        rep = metrics.score(preds, truth, ds.schema.positive, by_case=False)
        if args.per_class:
            metrics.slices_with(rep, metrics.per_class_breakdown(preds, truth, ds.labels, ds.schema.positive,
                                                                 ds.schema.target.domain), "class")
        if args.group == "edu":
            metrics.slices_with(rep, metrics.group_analysis(preds, truth, metrics.edu_grouping(ds.frame),
                                                            ds.schema.positive), "group")
        results[label] = rep
    bundle = {"reports": {k: v.to_dict() for k, v in results.items()},
              "comparison": experiment.comparison_rows(results)}
    print(experiment.format_table(bundle["comparison"]))
    if args.out:
        out = Path(args.out)
        _write(out, json.dumps(bundle, indent=1, sort_keys=True))
        _write(out.with_suffix(".csv"), "".join(
            metrics.rows_to_csv([{"attack": k, **r} for r in v.rows()]) for k, v in results.items()))
    return 0


def cmd_report(args) -> int:
    bundle = json.loads(Path(args.bundle).read_text())
    print(experiment.format_table(bundle["comparison"]))
    if "ledger" in bundle:
        print(f"\nqueries: {json.dumps(bundle['ledger'], sort_keys=True)}")
    if args.csv:
        _write(Path(args.csv), metrics.rows_to_csv(bundle["comparison"]))
    return 0


def cmd_run(args) -> int:
    cfg = experiment.preset(args.preset) if args.preset else ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.override_seed(args.seed)
    out = args.out or cfg.output.get("dir") or f"results/{cfg.name}"
    bundle = experiment.run(cfg, out)
    print(experiment.format_table(bundle["comparison"]))
    print(f"\nqueries: {json.dumps(bundle['ledger'], sort_keys=True)}\nreport -> {out}/report.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="miai", description="Model inversion attribute inference toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare-data", help="convert and preprocess a raw dataset")
    s.add_argument("dataset", choices=["adult", "gss"])
    s.add_argument("--raw", nargs="+", help="raw input files (UCI adult.data/adult.test, or a GSS CSV export)")
    s.add_argument("--schema", help="schema JSON overriding the built-in one")
    s.add_argument("--out-dir", help=f"output directory (default ${experiment.DATA_ENV}/<dataset>)")
    s.add_argument("--n-a", type=int, help="also write a DS_A/DS_T split with this many DS_A records")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_prepare_data)

    s = sub.add_parser("train-target", help="train a target model on a prepared CSV")
    s.add_argument("--data", required=True)
    s.add_argument("--schema", required=True)
    s.add_argument("--family", choices=["decision-tree", "neural-net"], default="decision-tree")
    s.add_argument("--out", required=True)
    s.add_argument("--max-depth", type=int, default=12)
    s.add_argument("--min-leaf", type=int, default=5)
    s.add_argument("--hidden", type=int, nargs="+", default=[64, 32])
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--learning-rate", type=float, default=0.01)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train_target)

    s = sub.add_parser("serve", help="expose a saved model over HTTP")
    s.add_argument("--model", required=True)
    s.add_argument("--bind", default="127.0.0.1:8000")
    s.add_argument("--expose-scores", action="store_true")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("attack", help="run one attack and dump its predictions")
    s.add_argument("--config", help="JSON attack run config; explicit flags override it")
    s.add_argument("--attack", choices=sorted(experiment.REQUIRES))
    s.add_argument("--model", help="saved model (local oracle)")
    s.add_argument("--url", help="prediction server URL (HTTP oracle)")
    s.add_argument("--schema")
    s.add_argument("--targets", help="DS_T CSV")
    s.add_argument("--ds-a", help="DS_A CSV (cmmia)")
    s.add_argument("--priors-from", choices=["DS_T", "DS_A"])
    s.add_argument("--confusion-from", choices=["DS_T", "DS_A"])
    s.add_argument("--unknown", help="comma-separated unknown attributes (csmia_partial)")
    s.add_argument("--p-positive", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--cache", action="store_true")
    s.add_argument("--out", help="predictions file (.csv or .json)")
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("evaluate", help="score a predictions dump against ground truth")
    s.add_argument("--predictions", required=True)
    s.add_argument("--truth", required=True, help="CSV the predictions were made on")
    s.add_argument("--schema", required=True)
    s.add_argument("--group", choices=["edu"])
    s.add_argument("--per-class", action="store_true")
    s.add_argument("--out", help="report JSON (a CSV is written next to it)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="print the comparison table of a run bundle")
    s.add_argument("bundle")
    s.add_argument("--csv", help="also write the table as CSV")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("run", help="run a full experiment")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", choices=["gss-dt", "gss-nn", "adult-dt", "adult-nn", "adult-partial"])
    g.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ExperimentError as e:
        print(f"error in stage {e.stage}: {e.cause}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
