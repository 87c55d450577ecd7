"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric or
training failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .agreement import SCORERS, ScorerConfig, read_scores, score_table, write_scores
from .errors import ConfigError, NCMError
from .features import FeatureTable, concat_tables, load_features, save_features, stratified_split
from .head import HeadParameters, TrainConfig, train_head
from .metrics import evaluate, format_table
from .pipeline import RunConfig, resolve_threshold, run_pipeline
from .prototypes import DEFAULT_EPSILON, ClassPrototypes, fit_prototypes, l2_normalize_rows
from .report import render_figures, write_reports
from .synthetic import SyntheticSpec, easy_benchmark, generate_synthetic, hard_benchmark

log = logging.getLogger("ncmosr")


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return obj


def _pick(obj: dict, cls) -> dict:
    names = {f.name for f in fields(cls)}
    return {k: v for k, v in obj.items() if k in names}


def _output_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _maybe_normalize(table: FeatureTable, on: bool) -> FeatureTable:
    if not on:
        return table
    return FeatureTable(table.ids, l2_normalize_rows(table.features), table.labels, table.class_names)


def _train_config(args, base: dict) -> TrainConfig:
    cfg = dict(_pick(base, TrainConfig))
    overrides = {
        "learning_rate": args.lr, "max_epochs": args.epochs, "batch_size": args.batch_size,
        "weight_decay": args.weight_decay, "warmup_fraction": args.warmup_fraction,
        "hidden_dim": args.hidden_dim, "patience": args.patience, "seed": args.seed,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**cfg)


# -- commands ----------------------------------------------------------------

def cmd_synth(args):
    base = _read_config(args.config)
    preset = {"easy": easy_benchmark, "hard": hard_benchmark}.get(args.preset)
    spec = preset() if preset else SyntheticSpec()
    spec = replace(spec, **_pick(base, SyntheticSpec))
    overrides = {
        "n_known_classes": args.n_known, "n_unknown_clusters": args.n_unknown,
        "feature_dim": args.dim, "samples_per_class": args.samples_per_class,
        "class_separation": args.separation, "cluster_stddev": args.stddev,
        "unknown_placement": args.placement, "seed": args.seed,
    }
    spec = replace(spec, **{k: v for k, v in overrides.items() if v is not None})
    known, unknown = generate_synthetic(spec)
    out = _output_dir(args)
    ext = "csv" if args.format == "csv" else "ncmf"
    save_features(known, out / f"known.{ext}")
    save_features(unknown, out / f"unknown.{ext}")
    (out / "synthetic_spec.json").write_text(json.dumps(spec.to_dict(), indent=1) + "\n")
    print(f"wrote {known.n_samples} known and {unknown.n_samples} unknown samples to {out}")


def cmd_split(args):
    table = load_features(args.input)
    parts = stratified_split(table, tuple(args.fractions), args.seed or 0)
    out = _output_dir(args)
    ext = Path(args.input).suffix or ".ncmf"
    for name, part in zip(("train", "validation", "test"), parts):
        save_features(part, out / f"{name}{ext}")
        print(f"{name}: {part.n_samples} samples")


def cmd_train_head(args):
    config = _train_config(args, _read_config(args.config))
    table = _maybe_normalize(load_features(args.train).known(), args.l2_normalize)
    params, history = train_head(table, config)
    out = _output_dir(args)
    params.save(out / "head.ncmh")
    (out / "train_log.json").write_text(history.to_json())
    print(f"trained {params.input_dim}-{params.hidden_dim}-{params.n_classes} head; "
          f"loss {history.losses[0]:.4f} -> {history.losses[-1]:.4f}")


def cmd_fit_prototypes(args):
    table = _maybe_normalize(load_features(args.input), args.l2_normalize)
    protos = fit_prototypes(table)
    out = _output_dir(args)
    protos.save(out / "prototypes.ncmp")
    protos.save(out / "prototypes.json")
    print(f"fit {protos.n_classes} prototypes in {protos.dim} dimensions")


def _scorer_config(args, base: dict) -> ScorerConfig:
    epsilon = args.epsilon if args.epsilon is not None else base.get("epsilon", DEFAULT_EPSILON)
    temperature = args.temperature if args.temperature is not None else (base.get("temperature") or 1.0)
    predict_from = args.predict_from or base.get("predict_from", "head")
    return ScorerConfig(epsilon, temperature, predict_from)


def cmd_score(args):
    base = _read_config(args.config)
    params = HeadParameters.load(args.head)
    protos = ClassPrototypes.load(args.prototypes)
    names = params.class_names or protos.class_names
    tables = [_maybe_normalize(load_features(p, expected_dim=params.input_dim, class_names=names),
                               args.l2_normalize) for p in args.input]
    table = concat_tables(tables) if len(tables) > 1 else tables[0]
    cfg = _scorer_config(args, base)
    out = _output_dir(args)
    for scorer in args.scorer or base.get("scorers", list(SCORERS)):
        records = score_table(table, protos, params, scorer, cfg)
        path = out / f"{scorer}.{args.format}"
        write_scores(records, path)
        print(f"{scorer}: {len(records)} records -> {path}")


def cmd_eval(args):
    out = _output_dir(args)
    reports, records_by_scorer = [], {}
    class_names = None
    if args.prototypes:
        class_names = ClassPrototypes.load(args.prototypes).class_names
    calibration = {}
    for path in args.calibration or []:
        for r in read_scores(path):
            calibration.setdefault(r.scorer_name, []).append(r.score)
    for path in args.scores:
        records = read_scores(path)
        by_scorer = {}
        for r in records:
            by_scorer.setdefault(r.scorer_name, []).append(r)
        for scorer, recs in by_scorer.items():
            if args.threshold is not None:
                threshold = args.threshold
            elif scorer in calibration:
                threshold = resolve_threshold("tpr95", calibration[scorer])
            else:
                log.warning("%s: no calibration scores; thresholding on the evaluated known samples", scorer)
                threshold = resolve_threshold("tpr95", [r.score for r in recs if r.true_label >= 0])
            reports.append(evaluate(scorer, [r.score for r in recs], [r.true_label for r in recs],
                                    [r.predicted_class for r in recs], threshold, class_names))
            records_by_scorer[scorer] = recs
    write_reports(reports, out)
    if not args.no_figures:
        render_figures(records_by_scorer, {r.scorer_name: r for r in reports}, out)
    sys.stdout.write(format_table(reports))


def cmd_run(args):
    base = _read_config(args.config)
    if args.synthetic:
        preset = easy_benchmark if args.synthetic == "easy" else hard_benchmark
        spec = preset().to_dict()
        if isinstance(base.get("synthetic"), dict):
            spec.update(base["synthetic"])
        base["synthetic"] = spec
    train = _train_config(args, base.get("train", {}))
    overrides = {
        "known_path": args.known, "unknown_path": args.unknown, "scorers": args.scorer,
        "epsilon": args.epsilon, "temperature": args.temperature, "fit_split": args.fit_split,
        "threshold_policy": args.threshold, "predict_from": args.predict_from,
    }
    cfg = {**base, **{k: v for k, v in overrides.items() if v is not None}}
    cfg["train"] = train.to_dict()
    cfg["output_dir"] = args.output_dir
    if args.l2_normalize:
        cfg["l2_normalize"] = True
    if args.no_figures:
        cfg["figures"] = False
    if args.seed is not None:
        cfg["split_seed"] = args.seed
        if isinstance(cfg.get("synthetic"), dict):
            cfg["synthetic"] = {**cfg["synthetic"], "seed": args.seed}
    if args.known is not None:
        cfg.pop("synthetic", None)
    config = RunConfig.from_dict(cfg)
    result = run_pipeline(config)
    sys.stdout.write(format_table(list(result.reports.values())))
    print(f"artifacts in {result.output_dir}")


# -- parser ------------------------------------------------------------------

def _add_train_flags(p):
    p.add_argument("--epochs", type=int, help="max training epochs (default 500)")
    p.add_argument("--lr", type=float, help="peak learning rate (default 0.005)")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--warmup-fraction", type=float)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--patience", type=int, help="stop after this many epochs without loss improvement")


def _add_scorer_flags(p):
    p.add_argument("--scorer", action="append", choices=SCORERS, help="repeatable; default all")
    p.add_argument("--epsilon", type=float, help=f"inverse-distance smoothing (default {DEFAULT_EPSILON})")
    p.add_argument("--temperature", type=float)
    p.add_argument("--predict-from", choices=("head", "ncm"))
    p.add_argument("--l2-normalize", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--config", help="JSON file with option defaults")
    common.add_argument("--output-dir", default=".", help="where outputs go (default: cwd)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ncmosr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic known/unknown benchmark")
    p.add_argument("--preset", choices=("easy", "hard"))
    p.add_argument("--n-known", type=int)
    p.add_argument("--n-unknown", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--samples-per-class", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--stddev", type=float)
    p.add_argument("--placement", choices=("interstitial", "far"))
    p.add_argument("--format", choices=("csv", "ncmf"), default="csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", parents=[common], help="stratified train/validation/test split")
    p.add_argument("input")
    p.add_argument("--fractions", type=float, nargs=3, default=(0.6, 0.2, 0.2))
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-head", parents=[common], help="train the classification head")
    p.add_argument("--train", required=True, help="feature file with known-class rows")
    p.add_argument("--l2-normalize", action="store_true")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_head)

    p = sub.add_parser("fit-prototypes", parents=[common], help="fit class-mean prototypes")
    p.add_argument("--input", required=True, help="fit split (normally the validation split)")
    p.add_argument("--l2-normalize", action="store_true")
    p.set_defaults(func=cmd_fit_prototypes)

    p = sub.add_parser("score", parents=[common], help="score feature files")
    p.add_argument("--head", required=True)
    p.add_argument("--prototypes", required=True)
    p.add_argument("--input", required=True, nargs="+")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    _add_scorer_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", parents=[common], help="metrics, tables and figures from score files")
    p.add_argument("--scores", required=True, nargs="+")
    p.add_argument("--calibration", nargs="+", help="known-only score files for the 95%% TPR threshold")
    p.add_argument("--threshold", type=float, help="fixed rejection threshold")
    p.add_argument("--prototypes", help="to label per-class accuracy with class names")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", parents=[common], help="full pipeline")
    p.add_argument("--known", help="known-class feature file")
    p.add_argument("--unknown", help="unknown-class feature file")
    p.add_argument("--synthetic", choices=("easy", "hard"), help="use a built-in synthetic benchmark")
    p.add_argument("--fit-split", choices=("train", "validation"))
    p.add_argument("--threshold", help="'tpr95' or a fixed number")
    p.add_argument("--no-figures", action="store_true")
    _add_scorer_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except NCMError as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"[{stage}] " if stage else ""
        print(f"error: {prefix}{exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
