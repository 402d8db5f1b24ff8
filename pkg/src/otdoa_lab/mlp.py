"""Fully connected ReLU regressor written directly on numpy.

Weights are stored as (fan_in, fan_out) matrices so a batch ``X`` of shape
(n, fan_in) propagates as ``X @ W + b``.  Everything runs in float64.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError, TrainingDivergedError

STANDARD_HIDDEN = (18, 32, 16, 8)
MODEL_FORMAT = "otdoa-lab/mlp"
MODEL_VERSION = 1
_ACTIVATIONS = ("relu", "linear")


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        w, a = tuple(self.layer_widths), tuple(self.activations)
        if len(w) < 2 or any(int(x) != x or x < 1 for x in w):
            raise DomainError(f"bad layer widths {w}")
        if len(a) != len(w) - 1 or any(x not in _ACTIVATIONS for x in a):
            raise DomainError(f"need {len(w) - 1} activations from {_ACTIVATIONS}, got {a}")
        if w[-1] != 2 or a[-1] != "linear":
            raise DomainError("output layer must be 2 wide with linear activation")
        if any(x != "relu" for x in a[:-1]):
            raise DomainError("hidden layers must use relu")

    @classmethod
    def standard(cls, input_width: int = 18) -> "MlpSpec":
        """The 4-hidden-layer positioning network (18-32-16-8 hidden units)."""
        widths = (input_width, *STANDARD_HIDDEN, 2)
        return cls(widths, ("relu",) * len(STANDARD_HIDDEN) + ("linear",))

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def n_params(self) -> int:
        w = self.layer_widths
        return sum(a * b + b for a, b in zip(w[:-1], w[1:]))


@dataclass
class MlpParams:
    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_params(spec: MlpSpec, seed) -> MlpParams:
    """He-normal weights, zero biases."""
    rng = np.random.default_rng(seed)
    w = spec.layer_widths
    weights = [rng.normal(0.0, math.sqrt(2.0 / a), size=(a, b)) for a, b in zip(w[:-1], w[1:])]
    biases = [np.zeros(b) for b in w[1:]]
    return MlpParams(spec, weights, biases)


def _check_input(params: MlpParams, x: np.ndarray):
    if x.shape[-1] != params.spec.input_width:
        raise DomainError(
            f"feature width {x.shape[-1]} does not match network input width {params.spec.input_width}"
        )


def _forward_cache(params: MlpParams, X: np.ndarray):
    acts = [X]
    pre = []
    a = X
    last = len(params.weights) - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W + b
        pre.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        acts.append(a)
    return acts, pre


def forward(params: MlpParams, features) -> np.ndarray:
    """Network output for one feature vector (n_in,) or a batch (n, n_in)."""
    x = np.asarray(features, dtype=float)
    _check_input(params, x)
    acts, _ = _forward_cache(params, np.atleast_2d(x))
    out = acts[-1]
    return out[0] if x.ndim == 1 else out


def loss_mse(predictions, targets) -> float:
    """Mean over the batch of squared Euclidean error."""
    p = np.atleast_2d(np.asarray(predictions, dtype=float))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    if p.shape != t.shape:
        raise DomainError(f"prediction/target shape mismatch {p.shape} vs {t.shape}")
    if len(p) == 0:
        raise DomainError("empty batch")
    r = p - t
    return float(np.sum(r * r) / len(p))


def backward(params: MlpParams, X, Y) -> tuple[float, MlpParams]:
    """Loss and its exact gradient w.r.t. every weight and bias."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    _check_input(params, X)
    if len(X) != len(Y) or Y.shape[1] != 2:
        raise DomainError(f"batch shape mismatch: features {X.shape}, targets {Y.shape}")
    if len(X) == 0:
        raise DomainError("empty batch")
    acts, pre = _forward_cache(params, X)
    r = acts[-1] - Y
    loss = float(np.sum(r * r) / len(X))
    delta = (2.0 / len(X)) * r
    n = len(params.weights)
    gW: list = [None] * n
    gb: list = [None] * n
    for i in range(n - 1, -1, -1):
        gW[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ params.weights[i].T) * (pre[i - 1] > 0.0)
    return loss, MlpParams(params.spec, gW, gb)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 100
    learning_rate: float = 1e-3
    seed: int = 0
    validation_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")
        if self.epochs < 1:
            raise DomainError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be > 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise DomainError("validation_fraction must be in [0, 1)")


@dataclass
class TrainLog:
    initial_val_loss: float
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


class _Adam:
    def __init__(self, params: MlpParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params: MlpParams, grads: MlpParams):
        c = self.cfg
        self.t += 1
        lr_t = c.learning_rate * math.sqrt(1.0 - c.beta2**self.t) / (1.0 - c.beta1**self.t)
        for p, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            p -= lr_t * m / (np.sqrt(v) + c.eps)


def train(spec: MlpSpec, config: TrainConfig, features, targets, progress=None) -> tuple[MlpParams, TrainLog]:
    """Mini-batch Adam on the MSE loss, keeping the best-validation parameters.

    A ``validation_fraction`` share of the samples (chosen by ``config.seed``)
    is held out; the rest is reshuffled every epoch.  ``progress`` is an
    optional callback ``(epoch, train_loss, val_loss)``.
    """
    X = np.asarray(features, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if len(X) == 0:
        raise DomainError("empty dataset")
    if X.ndim != 2 or X.shape[1] != spec.input_width:
        raise DomainError(f"feature width {X.shape[-1]} does not match network input width {spec.input_width}")
    if Y.shape != (len(X), 2):
        raise DomainError(f"targets must be ({len(X)}, 2), got {Y.shape}")

    rng = np.random.default_rng([config.seed, 1])
    order = rng.permutation(len(X))
    n_val = int(round(config.validation_fraction * len(X)))
    if n_val >= len(X):
        n_val = len(X) - 1
    val_idx, tr_idx = order[:n_val], order[n_val:]
    Xtr, Ytr = X[tr_idx], Y[tr_idx]
    Xva, Yva = (X[val_idx], Y[val_idx]) if n_val else (Xtr, Ytr)

    params = init_params(spec, [config.seed, 0])
    opt = _Adam(params, config)

    def val_loss(p):
        return loss_mse(forward(p, Xva), Yva)

    log = TrainLog(initial_val_loss=val_loss(params))
    best, best_loss = params.copy(), log.initial_val_loss
    bs = config.batch_size
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(len(Xtr))
        Xs, Ys = Xtr[perm], Ytr[perm]
        total = 0.0
        for s in range(0, len(Xs), bs):
            xb, yb = Xs[s : s + bs], Ys[s : s + bs]
            loss, grads = backward(params, xb, yb)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            total += loss * len(xb)
            opt.step(params, grads)
        tl = total / len(Xs)
        vl = val_loss(params)
        if not math.isfinite(vl):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        log.train_loss.append(tl)
        log.val_loss.append(vl)
        if vl < best_loss:
            best, best_loss, log.best_epoch = params.copy(), vl, epoch
        if progress is not None:
            progress(epoch, tl, vl)
    return best, log


# -- persistence -------------------------------------------------------------


@dataclass
class MlpModel:
    """Trained parameters plus the feature convention they expect."""

    params: MlpParams
    feature_schema: dict
    train_d_cell: float

    def predict_normalized(self, features) -> np.ndarray:
        return forward(self.params, features)

    def predict_positions(self, features, d_cell: float) -> np.ndarray:
        """De-normalized position estimates in meters for a layout of spacing ``d_cell``."""
        return forward(self.params, features) * d_cell


def save_model(path, model: MlpModel) -> None:
    p = model.params
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "layer_widths": list(p.spec.layer_widths),
        "activations": list(p.spec.activations),
        "feature_schema": model.feature_schema,
        "normalization": {"inputs": "divided by d_cell", "outputs": "position / d_cell"},
        "train_d_cell": model.train_d_cell,
        "layers": [
            {"shape": list(W.shape), "weights": W.tolist(), "bias": b.tolist()}
            for W, b in zip(p.weights, p.biases)
        ],
    }
    # json renders floats with repr(), which round-trips float64 exactly.
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path) -> MlpModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not a readable model file ({exc})") from exc
    try:
        if doc["format"] != MODEL_FORMAT or doc["version"] != MODEL_VERSION:
            raise FormatError(f"{path}: unsupported model format {doc['format']!r} v{doc['version']}")
        spec = MlpSpec(tuple(doc["layer_widths"]), tuple(doc["activations"]))
        weights, biases = [], []
        for layer, (a, b) in zip(doc["layers"], zip(spec.layer_widths[:-1], spec.layer_widths[1:])):
            W = np.array(layer["weights"], dtype=float).reshape(layer["shape"])
            bias = np.array(layer["bias"], dtype=float)
            if W.shape != (a, b) or bias.shape != (b,):
                raise FormatError(f"{path}: layer shape {W.shape} inconsistent with widths")
            weights.append(W)
            biases.append(bias)
        if len(weights) != len(spec.layer_widths) - 1:
            raise FormatError(f"{path}: expected {len(spec.layer_widths) - 1} layers, got {len(weights)}")
        if not all(np.all(np.isfinite(a)) for a in weights + biases):
            raise FormatError(f"{path}: non-finite parameters")
        return MlpModel(MlpParams(spec, weights, biases), doc["feature_schema"], float(doc["train_d_cell"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: malformed model file ({exc})") from exc
