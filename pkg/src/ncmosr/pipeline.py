"""End-to-end run: split, train the head, fit prototypes, score, evaluate.

A run owns its output directory::

    config.json            resolved configuration
    splits/*.ncmf          train / validation / test tables
    head.ncmh, train_log.json
    prototypes.ncmp, prototypes.json
    scores/<scorer>.csv
    reports/<scorer>.json, reports/summary.csv, reports/summary.txt
    figures/*.png
    manifest.json          config hash, seeds, fitted values, file digests

Everything except the figures is byte-identical across reruns of one config.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .agreement import SCORERS, ScorerConfig, fit_temperature, score_table, write_scores
from .errors import ConfigError, NCMError
from .features import UNKNOWN_LABEL, FeatureTable, concat_tables, load_features, save_features, stratified_split
from .head import TrainConfig, head_forward_rows, train_head
from .metrics import EvalReport, evaluate, threshold_at_tpr
from .prototypes import DEFAULT_EPSILON, fit_prototypes, l2_normalize_rows
from .report import render_figures, write_reports
from .synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    output_dir: str = "run"
    known_path: str | None = None
    unknown_path: str | None = None
    synthetic: SyntheticSpec | None = None
    scorers: list = field(default_factory=lambda: list(SCORERS))
    epsilon: float = DEFAULT_EPSILON
    temperature: float | None = None  # None: fit on the validation split
    train: TrainConfig = field(default_factory=TrainConfig)
    fit_split: str = "validation"
    split_fractions: tuple = (0.6, 0.2, 0.2)
    split_seed: int = 0
    threshold_policy: str = "tpr95"  # or a fixed number, as a string or float
    predict_from: str = "head"
    l2_normalize: bool = False
    figures: bool = True

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if isinstance(self.synthetic, dict):
            self.synthetic = SyntheticSpec(**self.synthetic)
        self.split_fractions = tuple(self.split_fractions)
        self.scorers = list(self.scorers)
        bad = [s for s in self.scorers if s not in SCORERS]
        if bad or not self.scorers:
            raise ConfigError(f"unknown scorers {bad}; choose from {', '.join(SCORERS)}")
        if self.fit_split not in ("train", "validation"):
            raise ConfigError("fit_split must be 'train' or 'validation'")
        if len(self.split_fractions) != 3:
            raise ConfigError("split_fractions needs (train, validation, test)")
        if (self.known_path is None) == (self.synthetic is None):
            raise ConfigError("give exactly one of known_path or synthetic")
        if self.threshold_policy != "tpr95":
            try:
                float(self.threshold_policy)
            except (TypeError, ValueError):
                raise ConfigError(f"threshold_policy must be 'tpr95' or a number, got {self.threshold_policy!r}")
        ScorerConfig(self.epsilon, self.temperature or 1.0, self.predict_from)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["split_fractions"] = list(self.split_fractions)
        return out

    def digest(self) -> str:
        """Hash of every setting that affects results (the output location does not)."""
        settings = {k: v for k, v in self.to_dict().items() if k != "output_dir"}
        canonical = json.dumps(settings, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def check_paths(self):
        for p in (self.known_path, self.unknown_path):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"input file not found: {p}")


@dataclass
class RunResult:
    reports: dict
    manifest: dict
    output_dir: Path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_inputs(config: RunConfig):
    if config.synthetic is not None:
        return generate_synthetic(config.synthetic)
    known_all = load_features(config.known_path)
    known = known_all.known()
    if config.unknown_path is not None:
        unknown = load_features(config.unknown_path, expected_dim=known.dim,
                                class_names=known.class_names).unknown()
    elif known_all.known_mask.all():
        raise ConfigError(f"{config.known_path} has no {UNKNOWN_LABEL} rows and no unknown_path was given")
    else:
        unknown = known_all.unknown()
    return known, unknown


def _normalized(table: FeatureTable) -> FeatureTable:
    return FeatureTable(table.ids, l2_normalize_rows(table.features), table.labels, table.class_names)


def resolve_threshold(policy, calibration_scores) -> float:
    if policy == "tpr95":
        return threshold_at_tpr(calibration_scores, 0.95)
    return float(policy)


def run_pipeline(config: RunConfig) -> RunResult:
    """Execute every stage and write all artifacts under ``config.output_dir``.

    A failing stage is recorded in ``manifest.json`` and the exception is
    re-raised with a ``stage`` attribute.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool_version": __version__,
        "config_hash": config.digest(),
        "seeds": {"split": config.split_seed, "train": config.train.seed,
                  "synthetic": config.synthetic.seed if config.synthetic else None},
        "status": "running",
    }
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")
    stage = "validate"
    try:
        config.check_paths()

        stage = "load"
        known, unknown = _load_inputs(config)
        if config.l2_normalize:
            known, unknown = _normalized(known), _normalized(unknown)

        stage = "split"
        train, validation, test_known = stratified_split(known, config.split_fractions, config.split_seed)
        test = concat_tables([test_known, unknown])
        (out / "splits").mkdir(exist_ok=True)
        for name, table in (("train", train), ("validation", validation), ("test", test)):
            save_features(table, out / "splits" / f"{name}.ncmf")

        stage = "train-head"
        params, history = train_head(train, config.train)
        params.save(out / "head.ncmh")
        (out / "train_log.json").write_text(history.to_json())

        stage = "fit-prototypes"
        prototypes = fit_prototypes(validation if config.fit_split == "validation" else train)
        prototypes.save(out / "prototypes.ncmp")
        prototypes.save(out / "prototypes.json")

        stage = "calibrate"
        temperature = config.temperature
        if temperature is None:
            temperature = fit_temperature(head_forward_rows(validation.features, params), validation.labels)
        scorer_cfg = ScorerConfig(config.epsilon, temperature, config.predict_from)
        thresholds = {}
        for scorer in config.scorers:
            calib = score_table(validation, prototypes, params, scorer, scorer_cfg)
            thresholds[scorer] = resolve_threshold(config.threshold_policy, [r.score for r in calib])

        stage = "score"
        (out / "scores").mkdir(exist_ok=True)
        records = {}
        for scorer in config.scorers:
            records[scorer] = score_table(test, prototypes, params, scorer, scorer_cfg)
            write_scores(records[scorer], out / "scores" / f"{scorer}.csv")

        stage = "evaluate"
        reports = {}
        for scorer, recs in records.items():
            reports[scorer] = evaluate(
                scorer,
                [r.score for r in recs],
                [r.true_label for r in recs],
                [r.predicted_class for r in recs],
                thresholds[scorer],
                class_names=known.class_names,
            )

        stage = "report"
        written = write_reports(list(reports.values()), out / "reports")
        figures = []
        if config.figures:
            figures = render_figures(records, reports, out / "figures")
    except NCMError as exc:
        exc.stage = stage
        manifest.update(status="failed", failed_stage=stage, error=f"{type(exc).__name__}: {exc}")
        _write_manifest(out, manifest)
        raise

    artifacts = [out / "config.json", out / "head.ncmh", out / "train_log.json",
                 out / "prototypes.ncmp", out / "prototypes.json"]
    artifacts += sorted((out / "splits").glob("*.ncmf")) + sorted((out / "scores").glob("*.csv")) + written
    manifest.update(
        status="ok",
        temperature=temperature,
        thresholds=thresholds,
        counts={"train": train.n_samples, "validation": validation.n_samples,
                "test_known": test_known.n_samples, "test_unknown": unknown.n_samples},
        final_train_loss=history.losses[-1],
        files={str(p.relative_to(out)): _sha256(p) for p in artifacts},
        figures=[str(p.relative_to(out)) for p in figures],
    )
    _write_manifest(out, manifest)
    log.info("run complete: %s", ", ".join(f"{k} AUROC={v.auroc:.4f}" for k, v in reports.items()))
    return RunResult(reports, manifest, out)


def _write_manifest(out: Path, manifest: dict):
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def load_reports(report_dir) -> dict:
    report_dir = Path(report_dir)
    return {p.stem: EvalReport.from_dict(json.loads(p.read_text()))
            for p in sorted(report_dir.glob("*.json"))}

