"""Feature tables: the in-memory container, CSV/binary files, stratified splits.

CSV layout (UTF-8, LF)::

    # class_names: ["cat", "dog"]        <- optional, fixes class order
    id,label,f0,f1,...
    s0,cat,0.125,-3.5,...
    s9,__unknown__,1.0,2.0,...

The binary ``NCMF`` layout is magic, u16 version, u32 N, u32 d, u32 n,
n class names, N ids, N int32 labels (-1 = unknown), N*d float64, CRC32.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _binary
from .errors import DataFormatError, InvalidInputError, StratificationError

UNKNOWN = -1
UNKNOWN_LABEL = "__unknown__"

NCMF_MAGIC = b"NCMF"
NCMF_VERSION = 1
CSV_CLASSES_PREFIX = "# class_names:"


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """N feature vectors with integer labels in ``[0, n)`` or ``UNKNOWN``."""

    ids: list[str]
    features: np.ndarray
    labels: np.ndarray
    class_names: list[str]

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", [str(i) for i in self.ids])
        object.__setattr__(self, "class_names", [str(c) for c in self.class_names])

        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise InvalidInputError(f"features must be a non-empty N x d matrix, got {feats.shape}")
        if labels.shape != (feats.shape[0],) or len(self.ids) != feats.shape[0]:
            raise InvalidInputError("ids, labels and feature rows must have the same length")
        if not np.all(np.isfinite(feats)):
            row = int(np.argwhere(~np.isfinite(feats))[0, 0])
            raise InvalidInputError(f"non-finite feature value in row {row}")
        n = len(self.class_names)
        bad = (labels != UNKNOWN) & ((labels < 0) | (labels >= n))
        if np.any(bad):
            row = int(np.argmax(bad))
            raise InvalidInputError(f"label {labels[row]} in row {row} outside [0, {n})")
        if len(set(self.ids)) != len(self.ids):
            seen = set()
            for dup in self.ids:
                if dup in seen:
                    break
                seen.add(dup)
            raise InvalidInputError(f"duplicate sample id {dup!r}")
        if len(set(self.class_names)) != n:
            raise InvalidInputError("class names must be unique")
        if UNKNOWN_LABEL in self.class_names:
            raise InvalidInputError(f"{UNKNOWN_LABEL!r} is reserved and cannot be a class name")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def known_mask(self) -> np.ndarray:
        return self.labels != UNKNOWN

    def subset(self, index) -> "FeatureTable":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return FeatureTable(
            ids=[self.ids[i] for i in index],
            features=self.features[index],
            labels=self.labels[index],
            class_names=list(self.class_names),
        )

    def known(self) -> "FeatureTable":
        return self.subset(self.known_mask)

    def unknown(self) -> "FeatureTable":
        return self.subset(~self.known_mask)

    def label_names(self) -> list[str]:
        return [UNKNOWN_LABEL if c == UNKNOWN else self.class_names[c] for c in self.labels]

    def equals(self, other: "FeatureTable") -> bool:
        """Bit-exact comparison of every field."""
        return (
            self.ids == other.ids
            and self.class_names == other.class_names
            and np.array_equal(self.labels, other.labels)
            and self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
        )


def concat_tables(tables: Sequence[FeatureTable]) -> FeatureTable:
    names = tables[0].class_names
    if any(t.class_names != names for t in tables):
        raise InvalidInputError("cannot concatenate tables with different class names")
    return FeatureTable(
        ids=[i for t in tables for i in t.ids],
        features=np.vstack([t.features for t in tables]),
        labels=np.concatenate([t.labels for t in tables]),
        class_names=list(names),
    )


# -- file IO -----------------------------------------------------------------

def _is_csv(path) -> bool:
    return Path(path).suffix.lower() == ".csv"


def save_features(table: FeatureTable, path, fmt: str | None = None) -> None:
    """Write ``table`` as CSV (``.csv`` suffix) or packed binary (anything else)."""
    fmt = fmt or ("csv" if _is_csv(path) else "binary")
    path = Path(path)
    if fmt == "csv":
        path.write_text(features_to_csv(table), encoding="utf-8", newline="\n")
    elif fmt == "binary":
        path.write_bytes(features_to_bytes(table))
    else:
        raise InvalidInputError(f"unknown feature format {fmt!r}")


def features_to_csv(table: FeatureTable) -> str:
    buf = io.StringIO()
    buf.write(f"{CSV_CLASSES_PREFIX} {json.dumps(table.class_names)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "label"] + [f"f{j}" for j in range(table.dim)])
    # repr() is the shortest string that round-trips a float64 exactly.
    for sid, name, row in zip(table.ids, table.label_names(), table.features):
        writer.writerow([sid, name] + [repr(float(v)) for v in row])
    return buf.getvalue()


def features_to_bytes(table: FeatureTable) -> bytes:
    w = _binary.Writer(NCMF_MAGIC, NCMF_VERSION)
    w.u32(table.n_samples)
    w.u32(table.dim)
    w.u32(table.n_classes)
    for name in table.class_names:
        w.string(name)
    for sid in table.ids:
        w.string(sid)
    w.array(table.labels, "<i4")
    w.array(table.features, "<f8")
    return w.getvalue()


def features_from_bytes(data: bytes, what="NCMF file") -> FeatureTable:
    r = _binary.Reader(data, NCMF_MAGIC, {NCMF_VERSION}, what)
    n_samples, dim, n_classes = r.u32(), r.u32(), r.u32()
    class_names = [r.string() for _ in range(n_classes)]
    ids = [r.string() for _ in range(n_samples)]
    labels = r.array("<i4", (n_samples,)).astype(np.int64)
    features = r.array("<f8", (n_samples, dim)).astype(np.float64)
    r.finish()
    try:
        return FeatureTable(ids, features, labels, class_names)
    except InvalidInputError as exc:
        raise DataFormatError(f"{what}: {exc}") from exc


def load_features(path, expected_dim: int | None = None,
                  class_names: Sequence[str] | None = None) -> FeatureTable:
    """Read a feature file, validating every row.

    ``class_names`` pins the class order (needed so a test file lines up with
    the training classes); labels outside it are an error. Without it the
    order comes from the file's ``# class_names`` line, else sorted labels.
    """
    path = Path(path)
    if _is_csv(path):
        table = _load_csv(path, class_names)
    else:
        table = features_from_bytes(path.read_bytes(), str(path))
        if class_names is not None and list(class_names) != table.class_names:
            table = _remap_classes(table, list(class_names))
    if expected_dim is not None and table.dim != expected_dim:
        raise DataFormatError(f"{path}: feature dimension {table.dim}, expected {expected_dim}")
    return table


def _remap_classes(table: FeatureTable, names: list[str]) -> FeatureTable:
    index = {c: i for i, c in enumerate(names)}
    missing = [c for c in table.class_names if c not in index]
    if missing:
        raise DataFormatError(f"classes {missing} not among the expected class names")
    lut = np.array([index[c] for c in table.class_names] or [0], dtype=np.int64)
    labels = np.where(table.labels == UNKNOWN, UNKNOWN, lut[np.maximum(table.labels, 0)])
    return FeatureTable(table.ids, table.features, labels, names)


def _load_csv(path: Path, class_names):
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    declared = None
    start = 0
    if lines and lines[0].startswith(CSV_CLASSES_PREFIX):
        try:
            declared = json.loads(lines[0][len(CSV_CLASSES_PREFIX):])
        except json.JSONDecodeError as exc:
            raise DataFormatError("malformed class_names line", row=1) from exc
        start = 1
    reader = csv.reader(lines[start:])
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError(f"{path}: empty file") from None
    if header[:2] != ["id", "label"] or len(header) < 3:
        raise DataFormatError(f"{path}: header must be id,label,f0,...", row=start + 1)
    dim = len(header) - 2
    if header[2:] != [f"f{j}" for j in range(dim)]:
        raise DataFormatError(f"{path}: feature columns must be f0..f{dim - 1}", row=start + 1)

    ids, names, rows, line_nos = [], [], [], []
    seen = set()
    for offset, record in enumerate(reader):
        line_no = start + 2 + offset
        if not record:
            continue
        if len(record) != dim + 2:
            raise DataFormatError(
                f"{path}: expected {dim} features, found {len(record) - 2} (dimension mismatch)",
                row=line_no)
        sid, label = record[0], record[1]
        if sid in seen:
            raise DataFormatError(f"{path}: duplicate id {sid!r}", row=line_no)
        seen.add(sid)
        try:
            values = [float(v) for v in record[2:]]
        except ValueError as exc:
            raise DataFormatError(f"{path}: unparseable number ({exc})", row=line_no) from None
        if not all(math.isfinite(v) for v in values):
            raise DataFormatError(f"{path}: non-finite feature value", row=line_no)
        ids.append(sid)
        line_nos.append(line_no)
        names.append(label)
        rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    if class_names is not None:
        order = list(class_names)
    elif declared is not None:
        order = list(declared)
    else:
        order = sorted({n for n in names if n != UNKNOWN_LABEL})
    index = {c: i for i, c in enumerate(order)}
    labels = []
    for line_no, name in zip(line_nos, names):
        if name == UNKNOWN_LABEL:
            labels.append(UNKNOWN)
        elif name in index:
            labels.append(index[name])
        else:
            raise DataFormatError(f"{path}: label {name!r} not in class names", row=line_no)
    return FeatureTable(ids, np.array(rows, dtype=np.float64), np.array(labels), order)


# -- splitting ---------------------------------------------------------------

def _allocate(count: int, fractions: np.ndarray) -> np.ndarray:
    """Largest-remainder allocation of ``count`` items, at least one per split."""
    exact = fractions * count
    alloc = np.floor(exact).astype(np.int64)
    remainder = count - int(alloc.sum())
    # Stable sort: ties favour earlier splits.
    order = np.argsort(-(exact - alloc), kind="stable")
    alloc[order[:remainder]] += 1
    for k in np.flatnonzero(alloc == 0):
        surplus = np.where(alloc >= 2, alloc - exact, -np.inf)
        donor = int(np.argmax(surplus))
        alloc[donor] -= 1
        alloc[k] += 1
    return alloc


def stratified_split(table: FeatureTable, fractions=(0.6, 0.2, 0.2), seed: int = 0):
    """Split ``table`` into len(fractions) tables preserving per-class ratios.

    Each class (unknown rows form their own stratum) is shuffled with a
    generator seeded by ``seed`` and cut by largest-remainder rounding, so
    every split's class count is within one sample of exact. Rows keep their
    original relative order inside each split.
    """
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.ndim != 1 or fr.size < 2 or np.any(fr <= 0) or abs(math.fsum(fr) - 1.0) > 1e-9:
        raise InvalidInputError(f"fractions must be positive and sum to 1, got {fractions!r}")
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in fr]
    for label in np.unique(table.labels):
        members = np.flatnonzero(table.labels == label)
        if members.size < fr.size:
            name = UNKNOWN_LABEL if label == UNKNOWN else table.class_names[label]
            raise StratificationError(
                f"class {name!r} has {members.size} samples; need at least {fr.size} to stratify")
        members = rng.permutation(members)
        alloc = _allocate(members.size, fr)
        bounds = np.concatenate([[0], np.cumsum(alloc)])
        for k in range(fr.size):
            buckets[k].append(members[bounds[k]:bounds[k + 1]])
    return tuple(table.subset(np.sort(np.concatenate(b))) for b in buckets)
