"""Report files: per-scorer JSON, a summary CSV and text table, and figures.

Figures are drawn with the non-interactive Agg backend so the report path
works headless.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .features import UNKNOWN  # noqa: E402
from .metrics import EvalReport, format_table, roc_curve  # noqa: E402

SUMMARY_FIELDS = ("scorer_name", "auroc", "fpr_at_95tpr", "aupr_in", "aupr_out",
                  "f1_macro", "f1_weighted", "n_known", "n_unknown", "threshold_used")

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def write_summary_csv(reports: Sequence[EvalReport], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_FIELDS)
        for r in reports:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in (getattr(r, f) for f in SUMMARY_FIELDS)])


def write_reports(reports: Sequence[EvalReport], out_dir) -> list[Path]:
    """``<scorer>.json`` per report plus ``summary.csv`` and ``summary.txt``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for r in reports:
        path = out_dir / f"{r.scorer_name}.json"
        path.write_text(r.to_json(), encoding="utf-8")
        written.append(path)
    write_summary_csv(reports, out_dir / "summary.csv")
    (out_dir / "summary.txt").write_text(format_table(reports), encoding="utf-8")
    return written + [out_dir / "summary.csv", out_dir / "summary.txt"]


def plot_roc(score_sets: Mapping[str, tuple], path, title="ROC: known vs unknown"):
    """One ROC curve per scorer; ``score_sets`` maps name to (known, unknown)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.0))
        for name, (known, unknown) in score_sets.items():
            fpr, tpr, _ = roc_curve(known, unknown)
            ax.plot(fpr, tpr, lw=1.4, label=name)
        ax.plot([0, 1], [0, 1], color="0.6", lw=0.8, ls="--")
        ax.set_xlabel("false positive rate (unknown accepted)")
        ax.set_ylabel("true positive rate (known accepted)")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.set_title(title)
        ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)


def plot_score_histogram(known, unknown, path, scorer_name: str, threshold=None, bins=40):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        known = np.asarray(known)
        unknown = np.asarray(unknown)
        lo = min(known.min(), unknown.min())
        hi = max(known.max(), unknown.max())
        edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
        ax.hist(known, bins=edges, alpha=0.6, density=True, label="known")
        ax.hist(unknown, bins=edges, alpha=0.6, density=True, label="unknown")
        if threshold is not None and np.isfinite(threshold):
            ax.axvline(threshold, color="k", lw=0.8, ls=":", label="threshold")
        ax.set_xlabel(f"{scorer_name} score")
        ax.set_ylabel("density")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)


def render_figures(records_by_scorer: Mapping[str, Sequence], reports: Mapping[str, EvalReport],
                   out_dir) -> list[Path]:
    """ROC overlay plus one histogram per scorer, written as PNG."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    score_sets = {}
    for name, records in records_by_scorer.items():
        scores = np.array([r.score for r in records])
        is_known = np.array([r.true_label != UNKNOWN for r in records])
        score_sets[name] = (scores[is_known], scores[~is_known])
    paths = [out_dir / "roc.png"]
    plot_roc(score_sets, paths[0])
    for name, (known, unknown) in score_sets.items():
        path = out_dir / f"hist_{name}.png"
        report = reports.get(name)
        plot_score_histogram(known, unknown, path, name, report.threshold_used if report else None)
        paths.append(path)
    return paths
