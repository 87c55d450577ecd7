"""Two-layer ReLU classification head trained on frozen features.

Forward pass: ``logits = w2 @ relu(w1 @ x + b1) + b2``. Training minimises
mean softmax cross-entropy with Adam plus decoupled weight decay under a
linear-warmup / cosine-decay learning rate. Everything runs in float64 numpy
and is reproducible from ``TrainConfig.seed``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _binary
from .errors import (DataFormatError, InvalidFitSetError, InvalidInputError,
                     InvalidParameterError, MissingClassError, TrainingDivergedError)
from .features import UNKNOWN, FeatureTable
from .numerics import softmax_rows, stable_softmax

log = logging.getLogger(__name__)

NCMH_MAGIC = b"NCMH"
NCMH_VERSION = 1
PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True, eq=False)
class HeadParameters:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    class_names: list[str] | None = None

    def __post_init__(self):
        for name in PARAM_NAMES:
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        h, d = self.w1.shape if self.w1.ndim == 2 else (-1, -1)
        n = self.w2.shape[0] if self.w2.ndim == 2 else -1
        if (self.w1.ndim != 2 or self.b1.shape != (h,) or self.w2.shape != (n, h)
                or self.b2.shape != (n,) or min(h, d, n) < 1):
            raise InvalidInputError(
                f"inconsistent head shapes w1{self.w1.shape} b1{self.b1.shape} "
                f"w2{self.w2.shape} b2{self.b2.shape}")
        if self.class_names is not None and len(self.class_names) != n:
            raise InvalidInputError("class_names length does not match the output layer")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[0]

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def zeros(cls, d: int, h: int, n: int) -> "HeadParameters":
        return cls(np.zeros((h, d)), np.zeros(h), np.zeros((n, h)), np.zeros(n))

    def equals(self, other: "HeadParameters") -> bool:
        return all(getattr(self, k).tobytes() == getattr(other, k).tobytes()
                   and getattr(self, k).shape == getattr(other, k).shape for k in PARAM_NAMES)

    def to_bytes(self) -> bytes:
        w = _binary.Writer(NCMH_MAGIC, NCMH_VERSION)
        w.u32(self.input_dim)
        w.u32(self.hidden_dim)
        w.u32(self.n_classes)
        names = self.class_names or []
        w.u32(len(names))
        for name in names:
            w.string(name)
        for name in PARAM_NAMES:
            w.array(getattr(self, name), "<f8")
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, what="NCMH file") -> "HeadParameters":
        r = _binary.Reader(data, NCMH_MAGIC, {NCMH_VERSION}, what)
        d, h, n = r.u32(), r.u32(), r.u32()
        names = [r.string() for _ in range(r.u32())] or None
        w1 = r.array("<f8", (h, d))
        b1 = r.array("<f8", (h,))
        w2 = r.array("<f8", (n, h))
        b2 = r.array("<f8", (n,))
        r.finish()
        try:
            return cls(w1, b1, w2, b2, names)
        except InvalidInputError as exc:
            raise DataFormatError(f"{what}: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "HeadParameters":
        return cls.from_bytes(Path(path).read_bytes(), str(path))


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    max_epochs: int = 500
    warmup_fraction: float = 0.1
    batch_size: int = 256
    weight_decay: float = 0.01
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden_dim: int | None = None  # None: same width as the input
    patience: int | None = None  # None: always run max_epochs

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be > 0")
        if not 0 < self.warmup_fraction < 1:
            raise InvalidParameterError("warmup_fraction must lie in (0, 1)")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise InvalidParameterError("adam betas must lie in [0, 1)")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise InvalidParameterError("max_epochs and batch_size must be positive")
        if self.weight_decay < 0 or not self.adam_eps > 0:
            raise InvalidParameterError("weight_decay must be >= 0 and adam_eps > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidParameterError("seed must be an unsigned 64-bit integer")
        if self.hidden_dim is not None and self.hidden_dim < 1:
            raise InvalidParameterError("hidden_dim must be positive")
        if self.patience is not None and self.patience < 1:
            raise InvalidParameterError("patience must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainingLog:
    """Per-epoch mean loss and the learning rate at the epoch's last step.

    Entry 0 is the full-data loss at initialisation.
    """

    entries: list = field(default_factory=list)
    stopped_early: bool = False

    @property
    def losses(self) -> list[float]:
        return [e["loss"] for e in self.entries]

    def to_json(self) -> str:
        return json.dumps({"entries": self.entries, "stopped_early": self.stopped_early}, indent=1) + "\n"


def head_forward(x, params: HeadParameters) -> np.ndarray:
    """Logits for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise InvalidInputError(f"expected a feature vector of length {params.input_dim}, got shape {x.shape}")
    hidden = np.maximum(params.w1 @ x + params.b1, 0.0)
    return params.w2 @ hidden + params.b2


def head_forward_rows(X, params: HeadParameters) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise InvalidInputError(f"expected (m, {params.input_dim}) features, got shape {X.shape}")
    hidden = np.maximum(X @ params.w1.T + params.b1, 0.0)
    return hidden @ params.w2.T + params.b2


def head_probabilities(x, params: HeadParameters) -> np.ndarray:
    return stable_softmax(head_forward(x, params))


def head_probabilities_rows(X, params: HeadParameters) -> np.ndarray:
    return softmax_rows(head_forward_rows(X, params))


def cosine_warmup_lr(step: int, total_steps: int, config: TrainConfig) -> float:
    """Learning rate at ``step`` of ``total_steps``.

    Rises linearly from 0 to ``config.learning_rate`` over the first
    ``floor(warmup_fraction * total_steps)`` steps, then follows a half cosine
    down to 0 at ``total_steps``.
    """
    if total_steps < 1:
        raise InvalidParameterError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise InvalidParameterError(f"step {step} outside [0, {total_steps}]")
    peak = config.learning_rate
    warmup = min(int(config.warmup_fraction * total_steps), total_steps - 1)
    if step < warmup:
        return peak * step / warmup
    progress = (step - warmup) / (total_steps - warmup)
    if progress >= 1.0:
        return 0.0
    return peak * 0.5 * (1.0 + math.cos(math.pi * progress))


def loss_and_grads(params: HeadParameters, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy (nats) over ``(X, y)`` and its gradient per parameter.

    Overflow yields a non-finite loss, which the caller checks for.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _loss_and_grads(params, X, y)


def _loss_and_grads(params, X, y):
    z1 = X @ params.w1.T + params.b1
    hidden = np.maximum(z1, 0.0)
    logits = hidden @ params.w2.T + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    m = X.shape[0]
    rows = np.arange(m)
    loss = float(np.mean(log_norm - shifted[rows, y]))

    dlogits = np.exp(shifted - log_norm[:, None])
    dlogits[rows, y] -= 1.0
    dlogits /= m
    dz1 = (dlogits @ params.w2) * (z1 > 0)
    grads = {
        "w2": dlogits.T @ hidden,
        "b2": dlogits.sum(axis=0),
        "w1": dz1.T @ X,
        "b1": dz1.sum(axis=0),
    }
    return loss, grads


def init_head(d: int, h: int, n: int, rng: np.random.Generator) -> HeadParameters:
    """He-uniform weights (bound ``sqrt(6 / fan_in)``), zero biases."""
    w1 = rng.uniform(-1.0, 1.0, size=(h, d)) * math.sqrt(6.0 / d)
    w2 = rng.uniform(-1.0, 1.0, size=(n, h)) * math.sqrt(6.0 / h)
    return HeadParameters(w1, np.zeros(h), w2, np.zeros(n))


def _check_train_set(train_set: FeatureTable):
    if np.any(train_set.labels == UNKNOWN):
        raise InvalidFitSetError("training set contains UNKNOWN rows")
    counts = np.bincount(train_set.labels, minlength=train_set.n_classes)
    for c in range(train_set.n_classes):
        if counts[c] == 0:
            raise MissingClassError(c, train_set.class_names[c])
    if train_set.n_classes < 2:
        raise InvalidFitSetError("need at least two known classes")


# Divergence is detected from non-finite losses and parameters, so numpy's
# overflow warnings would only duplicate the TrainingDivergedError.
@np.errstate(over="ignore", invalid="ignore")
def train_head(train_set: FeatureTable, config: TrainConfig | None = None,
               init: HeadParameters | None = None):
    """Fit a head on ``train_set``; returns ``(HeadParameters, TrainingLog)``.

    ``init`` overrides the seeded initialisation (the shuffle order still
    comes from the seed).
    """
    config = config or TrainConfig()
    _check_train_set(train_set)
    X, y = train_set.features, train_set.labels
    m, d = X.shape
    n = train_set.n_classes
    h = config.hidden_dim or d
    rng = np.random.default_rng(config.seed)
    params = init_head(d, h, n, rng) if init is None else init
    state = {k: v.copy() for k, v in params.arrays().items()}
    first = {k: np.zeros_like(v) for k, v in state.items()}
    second = {k: np.zeros_like(v) for k, v in state.items()}

    steps_per_epoch = math.ceil(m / config.batch_size)
    total_steps = config.max_epochs * steps_per_epoch
    b1, b2, wd = config.adam_beta1, config.adam_beta2, config.weight_decay

    initial_loss, _ = loss_and_grads(params, X, y)
    history = TrainingLog([{"epoch": 0, "loss": initial_loss, "lr": 0.0}])
    best, stale = initial_loss, 0
    step = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(m)
        total = 0.0
        lr = 0.0
        for start in range(0, m, config.batch_size):
            batch = order[start:start + config.batch_size]
            current = HeadParameters(**state)
            loss, grads = loss_and_grads(current, X[batch], y[batch])
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            total += loss * batch.size
            lr = cosine_warmup_lr(step, total_steps, config)
            step += 1
            bias1 = 1.0 - b1 ** step
            bias2 = 1.0 - b2 ** step
            for k, g in grads.items():
                first[k] = b1 * first[k] + (1.0 - b1) * g
                second[k] = b2 * second[k] + (1.0 - b2) * g * g
                state[k] *= 1.0 - lr * wd
                state[k] -= lr * (first[k] / bias1) / (np.sqrt(second[k] / bias2) + config.adam_eps)
        epoch_loss = total / m
        if not math.isfinite(epoch_loss) or not all(np.all(np.isfinite(v)) for v in state.values()):
            raise TrainingDivergedError(epoch)
        history.entries.append({"epoch": epoch, "loss": epoch_loss, "lr": lr})
        if config.patience is not None:
            if epoch_loss < best:
                best, stale = epoch_loss, 0
            else:
                stale += 1
                if stale >= config.patience:
                    history.stopped_early = True
                    log.info("early stop at epoch %d", epoch)
                    break
    return HeadParameters(**state, class_names=list(train_set.class_names)), history
