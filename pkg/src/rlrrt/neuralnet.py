"""Fully-connected networks: forward, backprop, Adam, dropout and weight files."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class Activation(Enum):
    """Output activation of the last layer."""

    IDENTITY = "identity"
    TANH = "tanh"

    def __repr__(self):
        return self.name

    def __str__(self):
        return repr(self)


class NetworkError(ValueError):
    """Raised on malformed networks or inputs."""


class TrainingDivergedError(Exception):
    """Raised when a training loss becomes non-finite."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(slots=True, eq=False)
class NeuralNet:
    """Dense network, ReLU hidden layers; ``weights[i]`` has shape ``(in, out)``."""

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output_activation: Activation = Activation.IDENTITY
    dropout_p: float = 0.0

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.output_activation = Activation(self.output_activation)

        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise NetworkError(f"Invalid {self.layer_dims=}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise NetworkError(f"{self.dropout_p=} must be in [0, 1)")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise NetworkError("One weight matrix and bias per layer expected")

        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise NetworkError(f"Layer {i}: {w.shape=} {b.shape=}, expected {shape}")

    @classmethod
    def create(
        cls,
        layer_dims,
        seed: int | np.random.Generator = 0,
        output_activation: Activation | str = Activation.IDENTITY,
        dropout_p: float = 0.0,
    ) -> NeuralNet:
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        dims = tuple(layer_dims)

        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))

        return cls(dims, weights, biases, Activation(output_activation), dropout_p)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases interleaved: ``[W0, b0, W1, b1, ...]``."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params += [w, b]
        return params

    def copy(self) -> NeuralNet:
        return NeuralNet(
            self.layer_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.output_activation,
            self.dropout_p,
        )

    def soft_update(self, source: NeuralNet, tau: float):
        """Polyak averaging toward ``source``."""
        for mine, theirs in zip(self.parameters(), source.parameters()):
            mine *= 1.0 - tau
            mine += tau * theirs

    def forward_cached(
        self,
        x: np.ndarray,
        train_mode: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[np.ndarray, list]:
        """Batch forward pass keeping what backprop needs."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise NetworkError(f"Expected input (batch, {self.input_dim}), got {x.shape}")

        use_dropout = train_mode and self.dropout_p > 0
        if use_dropout and rng is None:
            raise NetworkError("Dropout in train mode needs a random generator")

        cache = []
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            if i < last:
                out = np.maximum(z, 0.0)
                mask = None
                if use_dropout:
                    keep = 1.0 - self.dropout_p
                    mask = (rng.random(out.shape) < keep) / keep
                    out = out * mask
            else:
                out = np.tanh(z) if self.output_activation is Activation.TANH else z
                mask = None
            cache.append((a, z, mask))
            a = out

        return a, cache

    def forward(
        self,
        x: np.ndarray,
        train_mode: bool = False,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Evaluate on a single vector or a ``(batch, dim)`` array."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]

        out, _ = self.forward_cached(x, train_mode, rng)
        return out[0] if single else out

    def backward(self, cache: list, d_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients ``[dW0, db0, ...]`` and the gradient with respect to the input."""
        grads: list[np.ndarray] = []
        delta = np.asarray(d_out, dtype=np.float64)
        last = len(self.weights) - 1

        for i in range(last, -1, -1):
            a_in, z, mask = cache[i]
            if i == last:
                if self.output_activation is Activation.TANH:
                    delta = delta * (1.0 - np.tanh(z) ** 2)
            else:
                if mask is not None:
                    delta = delta * mask
                delta = delta * (z > 0.0)

            grads = [a_in.T @ delta, delta.sum(axis=0), *grads]
            delta = delta @ self.weights[i].T

        return grads, delta


def l2_loss_grad(
    net: NeuralNet,
    inputs: np.ndarray,
    targets: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    l2_weight: float = 0.0,
) -> tuple[float, list[np.ndarray]]:
    """Mean squared error over all outputs and its parameter gradients."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if len(inputs) == 0:
        raise NetworkError("Cannot compute a loss on an empty batch")

    pred, cache = net.forward_cached(inputs, train_mode, rng)
    targets = targets.reshape(pred.shape)

    err = pred - targets
    loss = float(np.mean(err**2))
    grads, _ = net.backward(cache, 2.0 * err / err.size)

    if l2_weight:
        for i, w in enumerate(net.weights):
            loss += l2_weight * float(np.sum(w**2))
            grads[2 * i] = grads[2 * i] + 2.0 * l2_weight * w

    return loss, grads


class Adam:
    """Adam optimizer updating parameter arrays in place."""

    def __init__(
        self,
        params: list[np.ndarray],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t

        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


@dataclass(frozen=True, slots=True)
class TrainConfig:
    """Supervised regression settings."""

    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    l2_weight: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"{self.learning_rate=} cannot be negative")
        if self.epochs < 1:
            raise ValueError(f"{self.epochs=} must be at least 1")
        if self.batch_size < 1:
            raise ValueError(f"{self.batch_size=} must be at least 1")


@dataclass(slots=True)
class TrainResult:
    net: NeuralNet
    loss_curve: list[float] = field(default_factory=list)


def train(
    net: NeuralNet, inputs: np.ndarray, targets: np.ndarray, cfg: TrainConfig
) -> TrainResult:
    """Minibatch Adam on the L2 loss; returns a trained copy and per-epoch mean loss."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).reshape(len(inputs), -1)
    if inputs.ndim != 2 or inputs.shape[1] != net.input_dim:
        raise NetworkError(f"Dataset inputs {inputs.shape} do not match {net.input_dim=}")

    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(net.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2)

    curve = []
    n = len(inputs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = l2_loss_grad(
                net, inputs[idx], targets[idx], True, rng, cfg.l2_weight
            )
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"Non-finite loss at epoch {epoch}",
                    {"epoch": epoch, "batch_start": start, "loss": loss},
                )
            optimizer.step(grads)
            total += loss * len(idx)

        curve.append(total / max(n, 1))
        logger.info("Epoch %d/%d: loss=%.6f", epoch + 1, cfg.epochs, curve[-1])

    return TrainResult(net, curve)


def save_network(net: NeuralNet, path: Path | str, metadata: dict | None = None) -> Path:
    """Write ``path`` (.npz, little-endian float64) and a ``.json`` metadata sidecar."""
    path = Path(path).with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)

    arrays = {"layer_dims": np.array(net.layer_dims, dtype="<i8")}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{i}"] = w.astype("<f8")
        arrays[f"b{i}"] = b.astype("<f8")

    with path.open("wb") as fh:
        np.savez(fh, **arrays)

    meta = {
        "output_activation": net.output_activation.value,
        "dropout_p": net.dropout_p,
        **(metadata or {}),
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    logger.debug("Saved network %s to %s", net.layer_dims, path)
    return path


def load_network(path: Path | str) -> tuple[NeuralNet, dict]:
    """Inverse of ``save_network``."""
    path = Path(path).with_suffix(".npz")
    meta = json.loads(path.with_suffix(".json").read_text())

    with np.load(path) as data:
        dims = tuple(int(d) for d in data["layer_dims"])
        n_layers = len(dims) - 1
        weights = [data[f"W{i}"].astype(np.float64) for i in range(n_layers)]
        biases = [data[f"b{i}"].astype(np.float64) for i in range(n_layers)]

    net = NeuralNet(
        dims,
        weights,
        biases,
        Activation(meta.get("output_activation", "identity")),
        float(meta.get("dropout_p", 0.0)),
    )
    return net, meta
