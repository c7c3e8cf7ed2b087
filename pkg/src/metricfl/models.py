"""Trainable predictors with analytic gradients and local mini-batch SGD.

Two model families: a linear map (no intercept) and a small fully connected
ReLU network.  Parameters live in a single flat vector so that sanitization
and clustering can treat a model as a point in R^n.  The packing order is
fixed: per layer, weights row-major then biases, layers in forward order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelSpec",
    "Batch",
    "n_params",
    "pack",
    "unpack",
    "init_params",
    "predict",
    "loss",
    "gradient",
    "local_update",
]

OBJECTIVES = ("rmse", "cross_entropy")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; the parameter count follows from it.

    ``kind`` is "linear" (x @ theta, scalar output, no intercept) or "mlp"
    (affine layers with ReLU between them, sizes input_dim -> hidden... ->
    output_dim).
    """

    kind: str
    input_dim: int
    hidden: tuple[int, ...] = ()
    output_dim: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        if self.kind == "linear" and (self.hidden or self.output_dim != 1):
            raise ValueError("linear models have no hidden layers and scalar output")

    @property
    def layer_sizes(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) per affine layer, forward order (mlp only)."""
        widths = [self.input_dim, *self.hidden, self.output_dim]
        return [(widths[i + 1], widths[i]) for i in range(len(widths) - 1)]


@dataclass(frozen=True)
class Batch:
    """Feature rows and aligned targets; regression targets are floats,
    classification targets integer class labels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y)
        if x.ndim != 2:
            raise ValueError("features must be a 2-D array (rows = samples)")
        if len(x) != len(y):
            raise ValueError(f"row mismatch: {len(x)} feature rows, {len(y)} targets")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain non-finite values")
        if np.issubdtype(y.dtype, np.floating) and not np.all(np.isfinite(y)):
            raise ValueError("targets contain non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.x)

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(self.x[idx], self.y[idx])


def n_params(spec: ModelSpec) -> int:
    if spec.kind == "linear":
        return spec.input_dim
    return sum(out * fin + out for out, fin in spec.layer_sizes)


def pack(spec: ModelSpec, layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Flatten (weight, bias) pairs into one vector, layer by layer."""
    parts = []
    for weight, bias in layers:
        parts.append(np.asarray(weight, dtype=float).ravel())
        parts.append(np.asarray(bias, dtype=float).ravel())
    return np.concatenate(parts)


def unpack(spec: ModelSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Inverse of pack: recover (weight, bias) per layer."""
    params = _check_params(spec, params)
    layers = []
    offset = 0
    for out, fin in spec.layer_sizes:
        weight = params[offset : offset + out * fin].reshape(out, fin)
        offset += out * fin
        bias = params[offset : offset + out]
        offset += out
        layers.append((weight, bias))
    return layers


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Fresh parameter vector for one hypothesis.

    Linear models draw standard-normal coefficients; MLP layers draw weights
    and biases uniformly in +-1/sqrt(fan_in).
    """
    if spec.kind == "linear":
        return rng.standard_normal(spec.input_dim)
    parts = []
    for out, fin in spec.layer_sizes:
        bound = 1.0 / math.sqrt(fin)
        parts.append((rng.uniform(-bound, bound, (out, fin)), rng.uniform(-bound, bound, out)))
    return pack(spec, parts)


def _check_params(spec: ModelSpec, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.shape != (n_params(spec),):
        raise ValueError(
            f"parameter vector has shape {params.shape}, spec needs ({n_params(spec)},)"
        )
    return params


def _forward(spec: ModelSpec, params: np.ndarray, x: np.ndarray):
    """Return (output, per-layer (input, pre-activation) cache for backprop)."""
    layers = unpack(spec, params)
    cache = []
    a = x
    for i, (weight, bias) in enumerate(layers):
        z = a @ weight.T + bias
        cache.append((a, z))
        a = np.maximum(z, 0.0) if i < len(layers) - 1 else z
    return a, cache


def predict(spec: ModelSpec, params: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Model outputs per feature row; scalar-output models return a 1-D array."""
    params = _check_params(spec, params)
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"features must have shape (m, {spec.input_dim})")
    if spec.kind == "linear":
        return x @ params
    out, _ = _forward(spec, params, x)
    return out[:, 0] if spec.output_dim == 1 else out


def loss(spec: ModelSpec, params: np.ndarray, batch: Batch, objective: str) -> float:
    """RMSE (residual norm over sqrt(batch size)) or mean cross entropy."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    pred = predict(spec, params, batch.x)
    if objective == "rmse":
        residual = np.asarray(batch.y, dtype=float) - pred
        return float(np.linalg.norm(residual) / math.sqrt(len(batch)))
    if objective == "cross_entropy":
        logits = _as_logits(spec, pred)
        targets = _as_classes(spec, batch.y)
        shifted = logits - logits.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
        return float(np.mean(logsumexp - logits[np.arange(len(batch)), targets]))
    raise ValueError(f"unknown objective {objective!r}")


def _as_logits(spec: ModelSpec, pred: np.ndarray) -> np.ndarray:
    if spec.output_dim < 2:
        raise ValueError("cross_entropy needs output_dim >= 2 (one logit per class)")
    return pred


def _as_classes(spec: ModelSpec, y: np.ndarray) -> np.ndarray:
    targets = np.asarray(y)
    if not np.issubdtype(targets.dtype, np.integer):
        raise ValueError("cross_entropy targets must be integer class labels")
    if targets.min() < 0 or targets.max() >= spec.output_dim:
        raise ValueError("class label out of range")
    return targets


def gradient(spec: ModelSpec, params: np.ndarray, batch: Batch, objective: str) -> np.ndarray:
    """Analytic gradient of the batch objective w.r.t. the flat vector.

    The RMSE gradient at an exactly-zero residual is the zero vector (a valid
    subgradient; avoids dividing by the residual norm).
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    params = _check_params(spec, params)
    m = len(batch)
    pred = predict(spec, params, batch.x)

    if objective == "rmse":
        residual = np.asarray(batch.y, dtype=float) - pred
        res_norm = float(np.linalg.norm(residual))
        if res_norm == 0.0:
            return np.zeros_like(params)
        d_pred = -residual / (math.sqrt(m) * res_norm)
    elif objective == "cross_entropy":
        logits = _as_logits(spec, pred)
        targets = _as_classes(spec, batch.y)
        shifted = logits - logits.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        probs = expz / expz.sum(axis=1, keepdims=True)
        probs[np.arange(m), targets] -= 1.0
        d_pred = probs / m
    else:
        raise ValueError(f"unknown objective {objective!r}")

    if spec.kind == "linear":
        return batch.x.T @ d_pred

    layers = unpack(spec, params)
    _, cache = _forward(spec, params, batch.x)
    d_out = d_pred.reshape(m, spec.output_dim) if d_pred.ndim == 1 else d_pred
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        a_in, _ = cache[i]
        grads.append((d_out.T @ a_in, d_out.sum(axis=0)))
        if i > 0:
            d_out = (d_out @ layers[i][0]) * (a_in > 0)
    grads.reverse()
    return pack(spec, grads)


def local_update(
    spec: ModelSpec,
    params: np.ndarray,
    dataset: Batch,
    step_size: float,
    epochs: int,
    batch_size: int,
    objective: str,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mini-batch SGD over the local dataset; the input vector is untouched.

    Each epoch reshuffles with the caller's stream and walks batches of
    ``batch_size`` rows (the last one may be smaller).
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    params = _check_params(spec, params).copy()
    m = len(dataset)
    for _ in range(epochs):
        order = rng.permutation(m)
        for start in range(0, m, batch_size):
            minibatch = dataset.take(order[start : start + batch_size])
            params -= step_size * gradient(spec, params, minibatch, objective)
    return params
