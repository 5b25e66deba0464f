"""Feedforward regression network written directly against numpy.

Layout for widths ``[I, h1, h2, ..., 1]``: affine + ReLU for each hidden
layer, inverted dropout after the first hidden activation, batch norm after the
second hidden activation, affine output. Everything runs in float64.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cvfrank.errors import (
    InvalidInputError,
    ModelFileError,
    NumericFailureError,
    PreconditionError,
)

FORMAT_TAG = "cvfmlp"
FORMAT_VERSION = "v1"
DEFAULT_WIDTHS = (15, 128, 64, 64, 1)


@dataclass
class MlpModel:
    widths: tuple[int, ...]
    params: dict[str, np.ndarray]
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None
    dropout_rate: float = 0.2
    use_dropout: bool = True
    use_batchnorm: bool = True
    bn_momentum: float = 0.99
    bn_eps: float = 1e-5
    mode: str = "train"
    meta: dict[str, str] = field(default_factory=dict)
    # bumped on every parameter update; lets backward() reject stale caches
    version: int = 0

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def has_dropout(self) -> bool:
        return self.use_dropout and self.dropout_rate > 0 and self.n_layers >= 2

    @property
    def has_batchnorm(self) -> bool:
        return self.use_batchnorm and self.n_layers >= 3

    def param_names(self) -> list[str]:
        names = []
        for i in range(1, self.n_layers + 1):
            names += [f"W{i}", f"b{i}"]
            if i == 2 and self.has_batchnorm:
                names += ["gamma", "beta"]
        return names

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def n_params(self) -> int:
        return sum(self.params[k].size for k in self.param_names())


def init_model(widths=DEFAULT_WIDTHS, seed: int = 0, *, dropout_rate: float = 0.2,
               use_dropout: bool = True, use_batchnorm: bool = True,
               bn_momentum: float = 0.99) -> MlpModel:
    """He-normal weights (std sqrt(2 / fan_in)), zero biases, BN scale 1 / shift 0."""
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise InvalidInputError(f"invalid layer widths {widths}")
    if not 0.0 <= dropout_rate < 1.0:
        raise InvalidInputError(f"dropout rate must be in [0, 1), got {dropout_rate}")
    rng = np.random.default_rng(seed)
    params = {}
    for i in range(1, len(widths)):
        fan_in, fan_out = widths[i - 1], widths[i]
        params[f"W{i}"] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        params[f"b{i}"] = np.zeros(fan_out)
    model = MlpModel(widths, params, dropout_rate=float(dropout_rate),
                     use_dropout=bool(use_dropout), use_batchnorm=bool(use_batchnorm),
                     bn_momentum=float(bn_momentum))
    if len(widths) >= 4:
        h = widths[2]
        params["gamma"] = np.ones(h)
        params["beta"] = np.zeros(h)
        model.running_mean = np.zeros(h)
        model.running_var = np.ones(h)
    return model


@dataclass
class ForwardCache:
    X: np.ndarray
    pre: list           # pre-activation of every layer
    post: list          # input fed into each affine layer
    mask: np.ndarray | None
    bn: tuple | None    # (x_hat, inv_std) from batch statistics
    version: int
    mode: str


def _check_features(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.widths[0]:
        raise InvalidInputError(
            f"expected feature width {model.widths[0]}, got array of shape {X.shape}"
        )
    return X


def forward(model: MlpModel, X, mode: str | None = None, rng: np.random.Generator | None = None,
            update_running: bool = True) -> tuple[np.ndarray, ForwardCache]:
    """Predictions of shape (B,) plus the cache ``backward`` needs.

    Train mode samples dropout masks from ``rng`` and normalizes with batch
    statistics (updating the running averages unless ``update_running`` is
    False). Eval mode is deterministic.
    """
    mode = mode or model.mode
    if mode not in ("train", "eval"):
        raise InvalidInputError(f"mode must be 'train' or 'eval', got {mode!r}")
    X = _check_features(model, X)
    p = model.params
    train = mode == "train"
    pre, post = [], []
    mask = bn = None
    h = X
    for i in range(1, model.n_layers + 1):
        post.append(h)
        z = h @ p[f"W{i}"] + p[f"b{i}"]
        pre.append(z)
        if i == model.n_layers:
            h = z
            break
        h = np.maximum(z, 0.0)
        if i == 1 and model.has_dropout and train:
            if rng is None:
                raise PreconditionError("train-mode forward with dropout needs an rng")
            keep = 1.0 - model.dropout_rate
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        if i == 2 and model.has_batchnorm:
            if train:
                mu = h.mean(axis=0)
                var = h.var(axis=0)
                inv_std = 1.0 / np.sqrt(var + model.bn_eps)
                x_hat = (h - mu) * inv_std
                bn = (x_hat, inv_std)
                if update_running:
                    mom = model.bn_momentum
                    model.running_mean = mom * model.running_mean + (1 - mom) * mu
                    model.running_var = mom * model.running_var + (1 - mom) * var
            else:
                x_hat = (h - model.running_mean) / np.sqrt(model.running_var + model.bn_eps)
            h = p["gamma"] * x_hat + p["beta"]
    cache = ForwardCache(X, pre, post, mask, bn, model.version, mode)
    return h[:, 0], cache


def predict(model: MlpModel, X) -> np.ndarray:
    return forward(model, X, "eval")[0]


def loss_mse(pred, labels) -> float:
    pred, labels = _pair(pred, labels)
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.mean((pred - labels) ** 2))


def metric_mae(pred, labels) -> float:
    pred, labels = _pair(pred, labels)
    return float(np.mean(np.abs(pred - labels)))


def _pair(pred, labels):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if pred.shape != labels.shape:
        raise InvalidInputError(f"length mismatch: {pred.shape[0]} predictions, {labels.shape[0]} labels")
    if pred.size == 0:
        raise InvalidInputError("empty batch")
    return pred, labels


def backward(model: MlpModel, cache: ForwardCache, labels) -> dict[str, np.ndarray]:
    """Gradients of the mean squared error with respect to every parameter."""
    if cache.version != model.version:
        raise PreconditionError("stale forward cache: model was updated after the forward pass")
    if cache.mode != "train":
        raise PreconditionError("backward requires a train-mode forward cache")
    labels = np.asarray(labels, dtype=np.float64).ravel()
    out = cache.pre[-1][:, 0]
    if labels.shape != out.shape:
        raise InvalidInputError("labels do not match the cached batch")
    B = out.shape[0]
    p = model.params
    grads = {}
    d = (2.0 / B) * (out - labels)[:, None]
    for i in range(model.n_layers, 0, -1):
        a = cache.post[i - 1]
        grads[f"W{i}"] = a.T @ d
        grads[f"b{i}"] = d.sum(axis=0)
        if i == 1:
            break
        d = d @ p[f"W{i}"].T
        # d is now the gradient w.r.t. the input of layer i, which is the
        # (possibly dropped-out / normalized) activation of layer i-1.
        j = i - 1
        if j == 2 and model.has_batchnorm:
            x_hat, inv_std = cache.bn
            grads["gamma"] = (d * x_hat).sum(axis=0)
            grads["beta"] = d.sum(axis=0)
            dx_hat = d * p["gamma"]
            d = inv_std / B * (B * dx_hat - dx_hat.sum(axis=0) - x_hat * (dx_hat * x_hat).sum(axis=0))
        if j == 1 and cache.mask is not None:
            d = d * cache.mask
        d = d * (cache.pre[j - 1] > 0)
    return grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_model(cls, model: MlpModel, lr: float = 1e-3, **kw) -> "AdamState":
        names = model.param_names()
        return cls(lr=lr, m={k: np.zeros_like(model.params[k]) for k in names},
                   v={k: np.zeros_like(model.params[k]) for k in names}, **kw)


def adam_step(model: MlpModel, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, applied in place to ``model`` and ``state``."""
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    step = state.lr * np.sqrt(1 - b2**t) / (1 - b1**t)
    eps_hat = state.eps * np.sqrt(1 - b2**t)
    for name in model.param_names():
        g = grads[name]
        if g.shape != model.params[name].shape:
            raise InvalidInputError(f"gradient shape mismatch for {name}")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        model.params[name] -= step * m / (np.sqrt(v) + eps_hat)
    model.version += 1


def train_step(model: MlpModel, X, y, state: AdamState,
               rng: np.random.Generator | None = None) -> float:
    """Single-device forward, backward and Adam update; returns the batch loss."""
    pred, cache = forward(model, X, "train", rng)
    loss = loss_mse(pred, y)
    if not np.isfinite(loss):
        raise NumericFailureError(f"non-finite loss {loss}")
    adam_step(model, backward(model, cache, y), state)
    return loss


# -- model file ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def save_model(model: MlpModel, path) -> None:
    """Write the line-oriented text format (see README, "Model file")."""
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION}",
             "widths " + " ".join(str(w) for w in model.widths),
             f"dropout {_fmt(model.dropout_rate)} {int(model.use_dropout)}",
             f"batchnorm {int(model.use_batchnorm)} {_fmt(model.bn_momentum)} {_fmt(model.bn_eps)}"]
    for key in sorted(model.meta):
        lines.append(f"meta {key} {model.meta[key]}")
    blocks = [(k, model.params[k]) for k in model.param_names()]
    if model.has_batchnorm:
        blocks += [("running_mean", model.running_mean), ("running_var", model.running_var)]
    for name, arr in blocks:
        lines.append(f"param {name} " + " ".join(str(s) for s in arr.shape))
        lines.append(" ".join(_fmt(x) for x in arr.ravel()))
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> MlpModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise ModelFileError("empty model file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != FORMAT_TAG:
        raise ModelFileError(f"not a {FORMAT_TAG} model file")
    if head[1] != FORMAT_VERSION:
        raise ModelFileError(f"unsupported model file version {head[1]!r}")
    if lines[-1].strip() != "end":
        raise ModelFileError("truncated model file (missing end marker)")
    try:
        widths = tuple(int(w) for w in _field(lines[1], "widths"))
        drop = _field(lines[2], "dropout")
        bn = _field(lines[3], "batchnorm")
        model = init_model(widths, 0, dropout_rate=float(drop[0]), use_dropout=bool(int(drop[1])),
                           use_batchnorm=bool(int(bn[0])), bn_momentum=float(bn[1]))
        model.bn_eps = float(bn[2])
        i = 4
        while lines[i].startswith("meta "):
            _, key, value = lines[i].split(" ", 2)
            model.meta[key] = value
            i += 1
        while lines[i] != "end":
            parts = _field(lines[i], "param")
            name, shape = parts[0], tuple(int(s) for s in parts[1:])
            values = np.array([float(x) for x in lines[i + 1].split()], dtype=np.float64)
            if values.size != int(np.prod(shape)):
                raise ModelFileError(f"parameter {name}: expected {np.prod(shape)} values, got {values.size}")
            arr = values.reshape(shape)
            if name in ("running_mean", "running_var"):
                setattr(model, name, arr)
            elif name in model.params and model.params[name].shape == shape:
                model.params[name] = arr
            else:
                raise ModelFileError(f"unexpected parameter block {name} {shape}")
            i += 2
    except ModelFileError:
        raise
    except (IndexError, ValueError) as exc:
        raise ModelFileError(f"corrupt model file: {exc}") from exc
    model.mode = "eval"
    return model


def _field(line: str, tag: str) -> list[str]:
    parts = line.split()
    if not parts or parts[0] != tag:
        raise ModelFileError(f"expected '{tag}' line, got {line[:40]!r}")
    return parts[1:]
