"""Nearest-class-mean prototypes and the inverse-distance class distribution."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _binary
from .errors import DataFormatError, InvalidFitSetError, InvalidInputError, InvalidParameterError, MissingClassError
from .features import UNKNOWN, FeatureTable
from .numerics import softmax_rows, stable_softmax

DEFAULT_EPSILON = 1e-8

NCMP_MAGIC = b"NCMP"
NCMP_VERSION = 1


@dataclass(frozen=True, eq=False)
class ClassPrototypes:
    """One mean feature vector per known class (row ``c`` is class ``c``)."""

    means: np.ndarray
    counts: np.ndarray
    class_names: list[str]

    def __post_init__(self):
        means = np.ascontiguousarray(self.means, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        means.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_names", list(self.class_names))
        if means.ndim != 2 or means.shape[0] != len(self.class_names) or counts.shape != (means.shape[0],):
            raise InvalidInputError("means, counts and class_names disagree in shape")
        if not np.all(np.isfinite(means)):
            raise InvalidInputError("prototype means must be finite")
        if np.any(counts < 1):
            raise InvalidInputError("every prototype needs a count >= 1")

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_json(self) -> dict:
        return {
            "class_names": self.class_names,
            "counts": self.counts.tolist(),
            "means": self.means.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClassPrototypes":
        return cls(np.array(obj["means"], dtype=np.float64), np.array(obj["counts"]), obj["class_names"])

    def to_bytes(self) -> bytes:
        w = _binary.Writer(NCMP_MAGIC, NCMP_VERSION)
        w.u32(self.n_classes)
        w.u32(self.dim)
        for name in self.class_names:
            w.string(name)
        w.array(self.counts, "<i8")
        w.array(self.means, "<f8")
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, what="NCMP file") -> "ClassPrototypes":
        r = _binary.Reader(data, NCMP_MAGIC, {NCMP_VERSION}, what)
        n, d = r.u32(), r.u32()
        names = [r.string() for _ in range(n)]
        counts = r.array("<i8", (n,))
        means = r.array("<f8", (n, d)).astype(np.float64)
        r.finish()
        try:
            return cls(means, counts, names)
        except InvalidInputError as exc:
            raise DataFormatError(f"{what}: {exc}") from exc

    def save(self, path) -> None:
        """Binary for ``.ncmp`` (or anything not ``.json``), JSON for ``.json``."""
        path = Path(path)
        if path.suffix.lower() == ".json":
            path.write_text(json.dumps(self.to_json(), indent=1) + "\n")
        else:
            path.write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "ClassPrototypes":
        path = Path(path)
        if path.suffix.lower() == ".json":
            return cls.from_json(json.loads(path.read_text()))
        return cls.from_bytes(path.read_bytes(), str(path))


def fit_prototypes(fit_set: FeatureTable, l2_normalize: bool = False) -> ClassPrototypes:
    """Average the feature rows of each class.

    Raises :class:`InvalidFitSetError` if the table holds UNKNOWN rows and
    :class:`MissingClassError` for a class without samples.
    """
    if np.any(fit_set.labels == UNKNOWN):
        raise InvalidFitSetError("fit set contains UNKNOWN rows; prototypes are fit on known classes only")
    feats = l2_normalize_rows(fit_set.features) if l2_normalize else fit_set.features
    n = fit_set.n_classes
    counts = np.bincount(fit_set.labels, minlength=n)
    for c in range(n):
        if counts[c] == 0:
            raise MissingClassError(c, fit_set.class_names[c])
    means = np.empty((n, fit_set.dim))
    for c in range(n):
        means[c] = feats[fit_set.labels == c].mean(axis=0)
    return ClassPrototypes(means, counts, fit_set.class_names)


def l2_normalize_rows(features: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(features, axis=-1, keepdims=True)
    return features / np.where(norms == 0, 1.0, norms)


def distance_vector(x, prototypes: ClassPrototypes) -> np.ndarray:
    """Euclidean distance from ``x`` to each class mean."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (prototypes.dim,):
        raise InvalidInputError(f"expected a feature vector of length {prototypes.dim}, got shape {x.shape}")
    diff = prototypes.means - x
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def distance_matrix(X, prototypes: ClassPrototypes) -> np.ndarray:
    """Row ``i`` is ``distance_vector(X[i], prototypes)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != prototypes.dim:
        raise InvalidInputError(f"expected (m, {prototypes.dim}) features, got shape {X.shape}")
    diff = X[:, None, :] - prototypes.means[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _check_epsilon(epsilon):
    if not (epsilon > 0 and np.isfinite(epsilon)):
        raise InvalidParameterError(f"epsilon must be a finite positive number, got {epsilon!r}")


def distance_distribution(distances, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Softmax over inverse distances ``1 / (d_c + epsilon)``; closer means likelier."""
    _check_epsilon(epsilon)
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 1 or not np.all(np.isfinite(d)):
        raise InvalidInputError("distances must be a finite 1-D vector")
    if np.any(d < 0):
        raise InvalidInputError("distances must be non-negative")
    return stable_softmax(1.0 / (d + epsilon))


def distance_distribution_rows(D, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    _check_epsilon(epsilon)
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or not np.all(np.isfinite(D)):
        raise InvalidInputError("distances must be a finite 2-D array")
    if np.any(D < 0):
        raise InvalidInputError("distances must be non-negative")
    return softmax_rows(1.0 / (D + epsilon))
