"""Open-set recognition by agreement between nearest-class-mean and classifier distributions."""

__version__ = "0.1.0"

from .agreement import (ScoreRecord, ScorerConfig, classify_with_rejection, max_softmax_score,
                        ncm_agreement, score_sample, score_table, temp_scaled_score)
from .features import UNKNOWN, UNKNOWN_LABEL, FeatureTable, load_features, save_features, stratified_split
from .head import HeadParameters, TrainConfig, head_forward, head_probabilities, train_head
from .metrics import EvalReport, aupr, auroc, auroc_difference, evaluate, f1_scores, fpr_at_tpr
from .numerics import entropy_bits, js_bits, kl_bits, stable_softmax
from .prototypes import ClassPrototypes, distance_distribution, distance_vector, fit_prototypes
from .pipeline import RunConfig, RunResult, run_pipeline
from .synthetic import SyntheticSpec, easy_benchmark, generate_synthetic, hard_benchmark

__all__ = [
    "ClassPrototypes", "EvalReport", "FeatureTable", "HeadParameters", "RunConfig", "RunResult",
    "ScoreRecord", "ScorerConfig", "SyntheticSpec", "TrainConfig", "UNKNOWN", "UNKNOWN_LABEL",
    "aupr", "auroc", "auroc_difference", "classify_with_rejection", "distance_distribution",
    "distance_vector", "easy_benchmark", "entropy_bits", "evaluate", "f1_scores", "fit_prototypes", "fpr_at_tpr",
    "generate_synthetic", "hard_benchmark", "head_forward", "head_probabilities", "js_bits", "kl_bits",
    "load_features", "max_softmax_score", "ncm_agreement", "run_pipeline", "save_features", "score_sample",
    "score_table", "stable_softmax", "stratified_split", "temp_scaled_score", "train_head",
]
