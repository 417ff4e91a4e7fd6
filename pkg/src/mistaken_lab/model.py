"""Temporal convolutional logistic regression trained with Adam.

The score of frame ``t`` is ``sigmoid(b + sum_k <w[k], f[t + k - (K-1)/2]>)``
where frames outside the sequence are replaced by a padding row (zeros unless
the features say otherwise).  Training minimises the mean binary
cross-entropy over the selected (example, frame) cells plus
``weight_decay * ||w||^2``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import FeatureSeq

log = logging.getLogger(__name__)

MODEL_VERSION = "1"
THRESHOLD = 0.5
_LO = np.finfo(np.float64).tiny
_HI = 1.0 - np.finfo(np.float64).epsneg


@dataclass(eq=False)
class ModelParams:
    w: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 2:
            raise ValueError("w must be a K x D matrix")
        if self.K % 2 == 0:
            raise ValueError(f"temporal width K={self.K} must be odd")
        self.b = float(self.b)

    @property
    def K(self) -> int:
        return self.w.shape[0]

    @property
    def D(self) -> int:
        return self.w.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.w.copy(), self.b)

    @classmethod
    def zeros(cls, K: int, D: int) -> "ModelParams":
        return cls(np.zeros((K, D)), 0.0)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 32
    kernel_width: int = 7
    weight_decay: float = 1.0
    patience: int = 3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        for f in ("learning_rate", "batch_size", "kernel_width", "epsilon"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")
        if self.weight_decay < 0 or self.max_epochs < 0:
            raise ValueError("weight_decay and max_epochs must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.kernel_width % 2 == 0:
            raise ValueError("kernel_width must be odd")


@dataclass(eq=False)
class AdamState:
    m_w: np.ndarray
    v_w: np.ndarray
    m_b: float = 0.0
    v_b: float = 0.0
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls(np.zeros_like(params.w), np.zeros_like(params.w))


@dataclass(eq=False)
class TrainExample:
    """Per-frame targets for one sequence; ``mask`` selects the frames that
    enter the loss and the accuracy (all frames by default)."""
    features: FeatureSeq
    targets: np.ndarray
    ids: tuple = ()
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.targets.shape != (self.features.T,):
            raise ValueError(f"targets length {self.targets.shape} != T={self.features.T}")
        if self.mask is None:
            self.mask = np.ones(self.features.T)
        self.mask = np.asarray(self.mask, dtype=np.float64)


@dataclass(eq=False)
class ExampleSet:
    """Stacked examples: features X, targets Y and loss mask M of shape (N, T).

    When ``rows`` is given, example i reads its features from ``X[rows[i]]``;
    this lets many examples share one feature array.  X may be float32.
    """
    X: np.ndarray
    Y: np.ndarray
    M: np.ndarray
    pad: np.ndarray | None = None
    ids: list = field(default_factory=list)
    rows: np.ndarray | None = None

    def __len__(self) -> int:
        return self.Y.shape[0]

    def features(self, idx=None) -> np.ndarray:
        """float64 features of the selected examples (all if ``idx`` is None)."""
        if idx is None:
            idx = np.arange(len(self))
        src = self.rows[idx] if self.rows is not None else idx
        return np.asarray(self.X[src], dtype=np.float64)

    def batch(self, idx) -> "ExampleSet":
        return ExampleSet(self.features(idx), self.Y[idx], self.M[idx], self.pad)


def stack_examples(examples: Sequence[TrainExample] | ExampleSet) -> ExampleSet:
    if isinstance(examples, ExampleSet):
        return examples if examples.rows is None else examples.batch(np.arange(len(examples)))
    if not examples:
        raise ValueError("empty batch")
    return ExampleSet(
        np.stack([e.features.frames for e in examples]),
        np.stack([e.targets for e in examples]),
        np.stack([e.mask for e in examples]),
        examples[0].features.pad,
        [e.ids for e in examples],
    )


# ---------------------------------------------------------------- arithmetic

def _padded(X: np.ndarray, K: int, pad: np.ndarray | None) -> np.ndarray:
    half = (K - 1) // 2
    N, T, D = X.shape
    Xp = np.zeros((N, T + 2 * half, D))
    Xp[:, half:half + T] = X
    if pad is not None and half:
        Xp[:, :half] = pad
        Xp[:, half + T:] = pad
    return Xp


def logits(params: ModelParams, X: np.ndarray, pad: np.ndarray | None = None) -> np.ndarray:
    """Pre-sigmoid scores, shape (N, T), for a stack X of shape (N, T, D)."""
    X = np.asarray(X)
    if X.ndim == 2:
        return logits(params, X[None], pad)[0]
    if X.shape[2] != params.D:
        raise ValueError(f"feature dimension {X.shape[2]} != model dimension {params.D}")
    if params.K > 2 * X.shape[1] - 1:
        raise ValueError(f"K={params.K} exceeds 2T-1 for T={X.shape[1]}")
    T = X.shape[1]
    Xp = _padded(X, params.K, pad)
    z = np.full(X.shape[:2], params.b)
    for k in range(params.K):
        z += Xp[:, k:k + T] @ params.w[k]
    return z


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return np.clip(out, _LO, _HI)


def forward(params: ModelParams, f: FeatureSeq | np.ndarray, pad: np.ndarray | None = None) -> np.ndarray:
    """Scores in (0, 1) for every frame of a sequence (or a stack of them)."""
    if isinstance(f, FeatureSeq):
        pad = f.pad if pad is None else pad
        f = f.frames
    return sigmoid(logits(params, f, pad))


def _data_terms(z: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # -[y log s(z) + (1-y) log(1-s(z))] written without forming s(z)
    return Y * np.logaddexp(0.0, -z) + (1.0 - Y) * np.logaddexp(0.0, z)


def loss(params: ModelParams, batch, weight_decay: float = 1.0) -> float:
    data = stack_examples(batch)
    z = logits(params, data.X, data.pad)
    n = data.M.sum()
    if n == 0:
        raise ValueError("batch selects no frames")
    return float((_data_terms(z, data.Y) * data.M).sum() / n + weight_decay * np.sum(params.w ** 2))


def gradients(params: ModelParams, batch, weight_decay: float = 1.0) -> tuple[np.ndarray, float]:
    data = stack_examples(batch)
    T = data.X.shape[1]
    Xp = _padded(data.X, params.K, data.pad)
    z = np.full(data.X.shape[:2], params.b)
    for k in range(params.K):
        z += Xp[:, k:k + T] @ params.w[k]
    r = (sigmoid(z) - data.Y) * data.M / data.M.sum()
    dw = np.empty_like(params.w)
    for k in range(params.K):
        dw[k] = np.einsum("nt,ntd->d", r, Xp[:, k:k + T])
    dw += 2.0 * weight_decay * params.w
    return dw, float(r.sum())


def adam_step(state: AdamState, params: ModelParams, grads: tuple[np.ndarray, float],
              config: TrainConfig) -> tuple[AdamState, ModelParams]:
    """One bias-corrected Adam update; inputs are left untouched."""
    gw, gb = grads
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.epsilon
    step = state.step + 1
    m_w = b1 * state.m_w + (1 - b1) * gw
    v_w = b2 * state.v_w + (1 - b2) * gw * gw
    m_b = b1 * state.m_b + (1 - b1) * gb
    v_b = b2 * state.v_b + (1 - b2) * gb * gb
    c1, c2 = 1 - b1 ** step, 1 - b2 ** step
    w = params.w - lr * (m_w / c1) / (np.sqrt(v_w / c2) + eps)
    b = params.b - lr * (m_b / c1) / (math.sqrt(v_b / c2) + eps)
    return AdamState(m_w, v_w, m_b, v_b, step), ModelParams(w, b)


def init_params(K: int, D: int, rng: np.random.Generator) -> ModelParams:
    half = 1.0 / math.sqrt(K * D)
    return ModelParams(rng.uniform(-half, half, size=(K, D)), 0.0)


# ------------------------------------------------------------------ training

def scores_in_chunks(params: ModelParams, data: ExampleSet, chunk: int = 512) -> np.ndarray:
    out = np.empty(data.Y.shape)
    for s in range(0, len(data), chunk):
        idx = np.arange(s, min(s + chunk, len(data)))
        out[idx] = forward(params, data.features(idx), data.pad)
    return out


def joint_accuracy(params: ModelParams, data: ExampleSet) -> float:
    """Fraction of selected cells classified correctly at threshold 0.5 (ties positive)."""
    pred = scores_in_chunks(params, data) >= THRESHOLD
    hit = (pred == (data.Y > 0.5)) * data.M
    return float(hit.sum() / data.M.sum())


def train(train_set, val_set, config: TrainConfig) -> tuple[ModelParams, list[dict]]:
    """Mini-batch Adam with early stopping on validation joint accuracy.

    Returns the parameters of the best validation epoch and one history row
    per completed epoch.
    """
    tr, va = stack_examples(train_set), stack_examples(val_set)
    if len(tr) == 0 or len(va) == 0:
        raise ValueError("training and validation splits must be non-empty")
    rng = np.random.default_rng(config.seed)
    K, D = config.kernel_width, tr.X.shape[-1]
    params = init_params(K, D, rng)
    history: list[dict] = []
    if config.max_epochs == 0:
        return params, history
    state = AdamState.zeros_like(params)
    best_acc, best, stale = -1.0, params, 0
    n = len(tr)
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        batch_losses = []
        for s in range(0, n, config.batch_size):
            idx = np.sort(order[s:s + config.batch_size])
            batch = tr.batch(idx)
            batch_losses.append(loss(params, batch, config.weight_decay))
            grads = gradients(params, batch, config.weight_decay)
            state, params = adam_step(state, params, grads, config)
        acc = joint_accuracy(params, va)
        history.append({"epoch": epoch, "loss": float(np.mean(batch_losses)), "val_accuracy": acc})
        log.debug("epoch %d loss %.5f val %.4f", epoch, history[-1]["loss"], acc)
        if acc > best_acc:
            best_acc, best, stale = acc, params, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, history


# ------------------------------------------------------------- verification

@dataclass
class GradCheck:
    max_error: float
    worst: tuple          # ("w", k, d) or ("b",)
    errors: dict


def grad_check(params: ModelParams, batch, eps: float = 1e-4, weight_decay: float = 1.0,
               n_coords: int = 200, seed: int = 0,
               analytic: tuple[np.ndarray, float] | None = None,
               coords: Sequence[tuple[int, int]] = ()) -> GradCheck:
    """Compare analytic gradients with central differences.

    Checks ``n_coords`` random entries of w (all of them if fewer), any extra
    ``coords``, and the bias.  Relative error is |a-n| / max(|a|, |n|, 1e-8).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    data = stack_examples(batch)
    data = data.batch(np.arange(len(data)))
    dw, db = analytic if analytic is not None else gradients(params, data, weight_decay)
    K, D = params.w.shape
    rng = np.random.default_rng(seed)
    flat = np.arange(K * D) if K * D <= n_coords else rng.choice(K * D, size=n_coords, replace=False)
    picks = [tuple(int(v) for v in divmod(int(i), D)) for i in flat]
    picks += [tuple(c) for c in coords if tuple(c) not in picks]

    def rel(a, n):
        return abs(a - n) / max(abs(a), abs(n), 1e-8)

    errors = {}
    for k, d in picks:
        plus, minus = params.copy(), params.copy()
        plus.w[k, d] += eps
        minus.w[k, d] -= eps
        num = (loss(plus, data, weight_decay) - loss(minus, data, weight_decay)) / (2 * eps)
        errors[("w", k, d)] = rel(dw[k, d], num)
    num_b = (loss(ModelParams(params.w, params.b + eps), data, weight_decay)
             - loss(ModelParams(params.w, params.b - eps), data, weight_decay)) / (2 * eps)
    errors[("b",)] = rel(db, num_b)
    worst = max(errors, key=errors.get)
    return GradCheck(errors[worst], worst, errors)


# ------------------------------------------------------------------ model io

def save_model(path: str | Path, params: ModelParams, config: TrainConfig | None = None,
               history: Sequence[dict] = (), extra: dict | None = None) -> None:
    doc = {
        "version": MODEL_VERSION,
        "K": params.K,
        "D": params.D,
        "b": params.b,
        "w": [float(v) for v in params.w.ravel()],
        "config": asdict(config) if config is not None else None,
        "history": list(history),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> tuple[ModelParams, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')!r}")
    K, D = int(doc["K"]), int(doc["D"])
    w = np.array(doc["w"], dtype=np.float64)
    if w.size != K * D:
        raise ValueError(f"{path}: expected {K * D} weights, found {w.size}")
    return ModelParams(w.reshape(K, D), doc["b"]), doc


def config_from_dict(d: dict | None) -> TrainConfig:
    if not d:
        return TrainConfig()
    names = {f.name for f in fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in d.items() if k in names})
