"""Gaussian-cluster benchmark with a known/unknown split.

Known class ``c`` is centred on the binary code of ``c`` in the first
``ceil(log2 n) + 1`` coordinates, scaled by ``class_separation``, so classes
whose codes differ in one bit sit exactly ``class_separation`` apart.
Unknown clusters are either ``interstitial`` (midpoints of such adjacent
pairs: the hard case) or ``far`` (three lattice radii out from the lattice
centroid, along axes the lattice does not use: the easy case).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidParameterError
from .features import UNKNOWN, FeatureTable

PLACEMENTS = ("interstitial", "far")


@dataclass(frozen=True)
class SyntheticSpec:
    n_known_classes: int = 10
    n_unknown_clusters: int = 5
    feature_dim: int = 32
    samples_per_class: int = 500
    class_separation: float = 0.02
    cluster_stddev: float = 0.002
    unknown_placement: str = "far"
    seed: int = 0

    def __post_init__(self):
        for name in ("n_known_classes", "n_unknown_clusters", "feature_dim", "samples_per_class"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be >= 1")
        if not (self.class_separation > 0 and self.cluster_stddev > 0):
            raise InvalidParameterError("class_separation and cluster_stddev must be > 0")
        if self.unknown_placement not in PLACEMENTS:
            raise InvalidParameterError(f"unknown_placement must be one of {PLACEMENTS}")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidParameterError("seed must be an unsigned 64-bit integer")
        if self.feature_dim < lattice_dims(self.n_known_classes):
            raise InvalidParameterError(
                f"feature_dim must be >= {lattice_dims(self.n_known_classes)} for {self.n_known_classes} classes")

    def to_dict(self) -> dict:
        return asdict(self)


def easy_benchmark(seed: int = 0, **overrides) -> SyntheticSpec:
    """10 classes, 500 samples each, d=32, separation 10 stddev, far unknowns."""
    base = dict(class_separation=0.02, cluster_stddev=0.002, unknown_placement="far", seed=seed)
    return SyntheticSpec(**{**base, **overrides})


def hard_benchmark(seed: int = 0, **overrides) -> SyntheticSpec:
    """Same layout with separation 3 stddev and unknowns between adjacent classes."""
    base = dict(class_separation=0.006, cluster_stddev=0.002, unknown_placement="interstitial", seed=seed)
    return SyntheticSpec(**{**base, **overrides})


def lattice_dims(n_classes: int) -> int:
    return math.ceil(math.log2(n_classes)) + 1 if n_classes > 1 else 1


def known_centers(spec: SyntheticSpec) -> np.ndarray:
    n, k = spec.n_known_classes, lattice_dims(spec.n_known_classes)
    centers = np.zeros((n, spec.feature_dim))
    for c in range(n):
        for bit in range(k):
            centers[c, bit] = (c >> bit) & 1
    return centers * spec.class_separation


def unknown_centers(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    known = known_centers(spec)
    n, k, d = spec.n_known_classes, lattice_dims(spec.n_known_classes), spec.feature_dim
    out = np.zeros((spec.n_unknown_clusters, d))
    if spec.unknown_placement == "interstitial":
        pairs = [(a, a | (1 << bit)) for a in range(n) for bit in range(k)
                 if not a & (1 << bit) and a | (1 << bit) < n]
        if not pairs:  # a single class has no neighbours; step off along axis 0
            pairs = [(0, None)]
        for j in range(spec.n_unknown_clusters):
            a, b = pairs[j % len(pairs)]
            other = known[b] if b is not None else known[a] + spec.class_separation * np.eye(d)[0]
            out[j] = 0.5 * (known[a] + other)
        return out
    centroid = known.mean(axis=0)
    radius = max(float(np.linalg.norm(known - centroid, axis=1).max()), spec.class_separation)
    spare = d - k
    for j in range(spec.n_unknown_clusters):
        if spare > 0:
            direction = np.zeros(d)
            direction[k + (j // 2) % spare] = 1.0 if j % 2 == 0 else -1.0
        else:
            direction = rng.standard_normal(d)
            direction /= np.linalg.norm(direction)
        out[j] = centroid + 3.0 * radius * direction
    return out


def generate_synthetic(spec: SyntheticSpec):
    """Return ``(known, unknown)`` feature tables, deterministic in ``spec.seed``.

    Each unknown cluster gets ``samples_per_class`` samples. Ids are
    ``k<class>_<i>`` and ``u<cluster>_<i>``.
    """
    rng = np.random.default_rng(spec.seed)
    names = [f"class_{c:02d}" for c in range(spec.n_known_classes)]
    m = spec.samples_per_class
    centers = known_centers(spec)
    noise = rng.standard_normal((spec.n_known_classes, m, spec.feature_dim)) * spec.cluster_stddev
    known_feats = (centers[:, None, :] + noise).reshape(-1, spec.feature_dim)
    known_labels = np.repeat(np.arange(spec.n_known_classes), m)
    known_ids = [f"k{c}_{i}" for c in range(spec.n_known_classes) for i in range(m)]

    u_centers = unknown_centers(spec, rng)
    u_noise = rng.standard_normal((spec.n_unknown_clusters, m, spec.feature_dim)) * spec.cluster_stddev
    unknown_feats = (u_centers[:, None, :] + u_noise).reshape(-1, spec.feature_dim)
    unknown_ids = [f"u{j}_{i}" for j in range(spec.n_unknown_clusters) for i in range(m)]

    known = FeatureTable(known_ids, known_feats, known_labels, names)
    unknown = FeatureTable(unknown_ids, unknown_feats, np.full(len(unknown_ids), UNKNOWN), names)
    return known, unknown
