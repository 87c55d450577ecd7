"""Known-vs-unknown scores: NCM agreement and the softmax baselines.

Every scorer is oriented so that a higher score means "more likely a known
class". The predicted class always comes from the classification head unless
``ScorerConfig.predict_from == "ncm"``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError, InvalidInputError, InvalidParameterError
from .features import UNKNOWN, FeatureTable
from .head import HeadParameters, head_forward, head_forward_rows
from .numerics import (as_distribution, entropy_bits_rows, js_bits, js_bits_rows,
                       normalized_entropy, softmax_rows, stable_softmax)
from .prototypes import (DEFAULT_EPSILON, ClassPrototypes, distance_distribution,
                         distance_distribution_rows, distance_matrix, distance_vector)

NCM_AGREEMENT = "ncm_agreement"
MAX_SOFTMAX = "max_softmax"
TEMP_SCALING = "temp_scaling"
SCORERS = (NCM_AGREEMENT, MAX_SOFTMAX, TEMP_SCALING)

SCORE_COLUMNS = ("sample_id", "true_label", "predicted_class", "scorer", "score", "js", "h_dist", "h_prob")


@dataclass(frozen=True)
class ScoreRecord:
    sample_id: str
    predicted_class: int
    score: float
    scorer_name: str
    v_dist_entropy_norm: float = 0.0
    v_prob_entropy_norm: float = 0.0
    js: float = 0.0
    true_label: int = UNKNOWN


@dataclass(frozen=True)
class ScorerConfig:
    epsilon: float = DEFAULT_EPSILON
    temperature: float = 1.0
    predict_from: str = "head"

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise InvalidParameterError("epsilon must be a finite positive number")
        if not (self.temperature > 0 and math.isfinite(self.temperature)):
            raise InvalidParameterError("temperature must be a finite positive number")
        if self.predict_from not in ("head", "ncm"):
            raise ConfigError(f"predict_from must be 'head' or 'ncm', got {self.predict_from!r}")


def _agreement(js, h_dist, h_prob):
    # Group the entropy factors first so swapping the inputs is bit-identical.
    return (1.0 - js) * ((1.0 - h_dist) * (1.0 - h_prob))


def ncm_agreement(v_dist, v_prob) -> float:
    """Agreement of two class distributions, in [0, 1].

    ``(1 - JS) * (1 - H(v_dist)/log2 n) * (1 - H(v_prob)/log2 n)``: 1 when both
    are the same one-hot, 0 when either is uniform.
    """
    p = as_distribution(v_dist, "v_dist")
    q = as_distribution(v_prob, "v_prob")
    if p.size != q.size:
        raise InvalidInputError(f"length mismatch: {p.size} vs {q.size}")
    return _agreement(js_bits(p, q), normalized_entropy(p), normalized_entropy(q))


def agreement_components_rows(V_dist, V_prob):
    """Vectorised ``(score, js, h_dist_norm, h_prob_norm)`` for paired rows."""
    V_dist = np.asarray(V_dist, dtype=np.float64)
    V_prob = np.asarray(V_prob, dtype=np.float64)
    if V_dist.shape != V_prob.shape:
        raise InvalidInputError(f"shape mismatch: {V_dist.shape} vs {V_prob.shape}")
    log_n = math.log2(V_dist.shape[1])
    js = js_bits_rows(V_dist, V_prob)
    h_dist = entropy_bits_rows(V_dist) / log_n
    h_prob = entropy_bits_rows(V_prob) / log_n
    return _agreement(js, h_dist, h_prob), js, h_dist, h_prob


def ncm_agreement_rows(V_dist, V_prob) -> np.ndarray:
    return agreement_components_rows(V_dist, V_prob)[0]


def max_softmax_score(logits) -> float:
    """Largest softmax probability of the logits."""
    return float(stable_softmax(logits).max())


def temp_scaled_score(logits, temperature: float) -> float:
    """Largest softmax probability of ``logits / temperature``."""
    return float(stable_softmax(logits, temperature).max())


def fit_temperature(logits, labels, bounds=(1e-2, 1e2)) -> float:
    """Temperature minimising the mean negative log-likelihood of ``labels``.

    Searched on a log scale within ``bounds`` with a bounded scalar optimiser.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],) or np.any(labels < 0):
        raise InvalidInputError("fit_temperature needs (m, n) logits and m known labels")
    rows = np.arange(labels.size)

    def nll(log_t):
        z = logits / math.exp(log_t)
        z = z - z.max(axis=1, keepdims=True)
        return float(np.mean(np.log(np.exp(z).sum(axis=1)) - z[rows, labels]))

    res = minimize_scalar(nll, bounds=(math.log(bounds[0]), math.log(bounds[1])),
                          method="bounded", options={"xatol": 1e-6})
    return float(math.exp(res.x))


def _check_scorer(scorer):
    if scorer not in SCORERS:
        raise ConfigError(f"unknown scorer {scorer!r}; choose from {', '.join(SCORERS)}")


def score_sample(x, prototypes: ClassPrototypes, params: HeadParameters, scorer: str,
                 config: ScorerConfig | None = None, sample_id: str = "",
                 true_label: int = UNKNOWN) -> ScoreRecord:
    """Score one feature vector. Baseline scorers never touch ``prototypes``."""
    _check_scorer(scorer)
    config = config or ScorerConfig()
    logits = head_forward(x, params)
    v_prob = stable_softmax(logits)
    need_ncm = scorer == NCM_AGREEMENT or config.predict_from == "ncm"
    v_dist = distance_distribution(distance_vector(x, prototypes), config.epsilon) if need_ncm else None
    if v_dist is not None and v_dist.size != v_prob.size:
        raise InvalidInputError("prototype and head class counts differ")
    predicted = int(np.argmax(v_dist if config.predict_from == "ncm" else v_prob))

    if scorer == NCM_AGREEMENT:
        js = js_bits(v_dist, v_prob)
        h_dist = normalized_entropy(v_dist)
        h_prob = normalized_entropy(v_prob)
        return ScoreRecord(sample_id, predicted, _agreement(js, h_dist, h_prob), scorer,
                           h_dist, h_prob, js, true_label)
    temperature = config.temperature if scorer == TEMP_SCALING else 1.0
    return ScoreRecord(sample_id, predicted, temp_scaled_score(logits, temperature), scorer,
                       true_label=true_label)


def score_table(table: FeatureTable, prototypes: ClassPrototypes, params: HeadParameters,
                scorer: str, config: ScorerConfig | None = None) -> list[ScoreRecord]:
    """Vectorised :func:`score_sample` over every row of ``table``, in row order."""
    _check_scorer(scorer)
    config = config or ScorerConfig()
    logits = head_forward_rows(table.features, params)
    v_prob = softmax_rows(logits)
    n = logits.shape[1]
    need_ncm = scorer == NCM_AGREEMENT or config.predict_from == "ncm"
    if need_ncm:
        if prototypes.n_classes != n:
            raise InvalidInputError("prototype and head class counts differ")
        v_dist = distance_distribution_rows(distance_matrix(table.features, prototypes), config.epsilon)
    predicted = np.argmax(v_dist if config.predict_from == "ncm" else v_prob, axis=1)

    m = table.n_samples
    js = h_dist = h_prob = np.zeros(m)
    if scorer == NCM_AGREEMENT:
        scores, js, h_dist, h_prob = agreement_components_rows(v_dist, v_prob)
    else:
        temperature = config.temperature if scorer == TEMP_SCALING else 1.0
        scores = softmax_rows(logits, temperature).max(axis=1)
    return [
        ScoreRecord(table.ids[i], int(predicted[i]), float(scores[i]), scorer,
                    float(h_dist[i]), float(h_prob[i]), float(js[i]), int(table.labels[i]))
        for i in range(m)
    ]


def classify_with_rejection(records: Sequence[ScoreRecord], threshold: float) -> list[int]:
    """Predicted class where ``score >= threshold``, else ``UNKNOWN``."""
    names = {r.scorer_name for r in records}
    if len(names) > 1:
        raise InvalidInputError(f"records mix scorers: {sorted(names)}")
    return [r.predicted_class if r.score >= threshold else UNKNOWN for r in records]


# -- record files ------------------------------------------------------------

def _record_row(r: ScoreRecord) -> dict:
    return {
        "sample_id": r.sample_id,
        "true_label": r.true_label,
        "predicted_class": r.predicted_class,
        "scorer": r.scorer_name,
        "score": r.score,
        "js": r.js,
        "h_dist": r.v_dist_entropy_norm,
        "h_prob": r.v_prob_entropy_norm,
    }


def write_scores(records: Iterable[ScoreRecord], path) -> None:
    """CSV for ``.csv`` paths, JSON lines otherwise. Floats round-trip exactly."""
    path = Path(path)
    rows = [_record_row(r) for r in records]
    with path.open("w", encoding="utf-8", newline="") as fh:
        if path.suffix.lower() == ".csv":
            writer = csv.DictWriter(fh, fieldnames=SCORE_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        else:
            for row in rows:
                fh.write(json.dumps(row) + "\n")


def read_scores(path) -> list[ScoreRecord]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        if path.suffix.lower() == ".csv":
            rows = list(csv.DictReader(fh))
        else:
            rows = [json.loads(line) for line in fh if line.strip()]
    out = []
    for i, row in enumerate(rows, start=1):
        try:
            out.append(ScoreRecord(
                sample_id=str(row["sample_id"]),
                predicted_class=int(row["predicted_class"]),
                score=float(row["score"]),
                scorer_name=str(row["scorer"]),
                v_dist_entropy_norm=float(row["h_dist"]),
                v_prob_entropy_norm=float(row["h_prob"]),
                js=float(row["js"]),
                true_label=int(row["true_label"]),
            ))
        except (KeyError, ValueError) as exc:
            raise InvalidInputError(f"{path}: bad score record {i}: {exc}") from None
    return out

