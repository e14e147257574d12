"""Minimal dense feedforward network with manual reverse-mode gradients.

Float64 numpy throughout, ReLU hidden layers, a linear or logits head,
Adam, and a training loop that is bitwise reproducible given a seed.
Kept deliberately small so the gradient can be cross-checked against
central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NetworkSpec",
    "Parameters",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "init_params",
    "forward",
    "loss_and_grad",
    "grad",
    "train",
    "predict",
    "softmax",
]


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths from input to output; hidden layers use ReLU.

    Zero hidden layers (a single affine map) are allowed so that tiny
    nets, e.g. one linear unit, can be built for sanity checks.
    """

    widths: tuple[int, ...]
    activation: str = "relu"
    head: str = "linear"  # "linear" | "logits"

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be positive, got {self.widths}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.head not in ("linear", "logits"):
            raise ValueError(f"unsupported head {self.head!r}")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def n_params(self) -> int:
        return sum(
            fan_in * fan_out + fan_out
            for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:])
        )


@dataclass
class Parameters:
    """Per-layer weights and biases, flattenable for the optimizer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, spec: NetworkSpec, vec: np.ndarray) -> "Parameters":
        weights, biases = [], []
        pos = 0
        for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
            weights.append(vec[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out).copy())
            pos += fan_in * fan_out
            biases.append(vec[pos : pos + fan_out].copy())
            pos += fan_out
        if pos != vec.size:
            raise ValueError(f"flat vector has {vec.size} entries, expected {pos}")
        return cls(weights, biases)

    def copy(self) -> "Parameters":
        return Parameters([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    steps: int
    batch_size: int = 128
    seed: int = 0
    loss: str = "mse"  # "mse" | "cross_entropy"
    mask_granularity: str = "per_batch"  # consumed by augmentation hooks
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    trace_every: int = 100

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.loss not in ("mse", "cross_entropy"):
            raise ValueError(f"unsupported loss {self.loss!r}")
        if self.mask_granularity not in ("per_batch", "per_sample"):
            raise ValueError(f"unsupported mask granularity {self.mask_granularity!r}")


@dataclass
class TrainResult:
    params: Parameters
    trace: list[tuple[int, float]] = field(default_factory=list)


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> Parameters:
    """Fan-in scaled uniform init, sqrt(2 / fan_in); biases start at zero."""
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Parameters(weights, biases)


def _check_batch(spec: NetworkSpec, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=float)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.shape[1] != spec.widths[0]:
        raise ValueError(f"batch width {batch.shape[1]} != input width {spec.widths[0]}")
    if not np.isfinite(batch).all():
        raise ValueError("non-finite values in the input batch")
    return batch


def _forward_pass(
    spec: NetworkSpec, params: Parameters, batch: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    hs = [batch]
    zs = []
    h = batch
    for layer in range(spec.n_layers):
        z = h @ params.weights[layer] + params.biases[layer]
        zs.append(z)
        h = np.maximum(z, 0.0) if layer < spec.n_layers - 1 else z
        hs.append(h)
    return hs, zs


def forward(spec: NetworkSpec, params: Parameters, batch: np.ndarray) -> np.ndarray:
    """Raw network outputs (reals for a linear head, logits otherwise)."""
    batch = _check_batch(spec, batch)
    hs, _ = _forward_pass(spec, params, batch)
    return hs[-1]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _loss_and_output_grad(
    spec: NetworkSpec, out: np.ndarray, targets: np.ndarray, loss: str
) -> tuple[float, np.ndarray]:
    n = out.shape[0]
    if loss == "mse":
        targets = np.asarray(targets, dtype=float)
        if targets.ndim == 1:
            targets = targets[:, None]
        if targets.shape != out.shape:
            raise ValueError(f"target shape {targets.shape} != output shape {out.shape}")
        diff = out - targets
        value = float((diff**2).sum() / n)  # per-sample squared error, batch mean
        return value, 2.0 * diff / n
    if loss == "cross_entropy":
        if spec.head != "logits":
            raise ValueError("cross_entropy needs a logits head")
        labels = np.asarray(targets)
        if labels.ndim != 1 or labels.shape[0] != n:
            raise ValueError("cross_entropy targets must be a vector of class indices")
        labels = labels.astype(int)
        if labels.min() < 0 or labels.max() >= out.shape[1]:
            raise ValueError("class index out of range")
        shifted = out - out.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - logz
        value = float(-logp[np.arange(n), labels].mean())
        grad_out = np.exp(logp)
        grad_out[np.arange(n), labels] -= 1.0
        return value, grad_out / n
    raise ValueError(f"unsupported loss {loss!r}")


def loss_and_grad(
    spec: NetworkSpec,
    params: Parameters,
    batch: np.ndarray,
    targets: np.ndarray,
    loss: str,
) -> tuple[float, np.ndarray]:
    """Batch-mean loss and its exact gradient as one flat vector."""
    batch = _check_batch(spec, batch)
    hs, zs = _forward_pass(spec, params, batch)
    for layer, z in enumerate(zs):
        if not np.isfinite(z).all():
            raise ValueError(f"non-finite values after layer {layer}")
    value, dz = _loss_and_output_grad(spec, hs[-1], targets, loss)
    grads_w = [None] * spec.n_layers
    grads_b = [None] * spec.n_layers
    for layer in reversed(range(spec.n_layers)):
        grads_w[layer] = hs[layer].T @ dz
        grads_b[layer] = dz.sum(axis=0)
        if layer > 0:
            dh = dz @ params.weights[layer].T
            dz = dh * (zs[layer - 1] > 0)
    parts = []
    for gw, gb in zip(grads_w, grads_b):
        parts.append(gw.ravel())
        parts.append(gb.ravel())
    return value, np.concatenate(parts)


def grad(
    spec: NetworkSpec,
    params: Parameters,
    batch: np.ndarray,
    targets: np.ndarray,
    loss: str,
) -> np.ndarray:
    return loss_and_grad(spec, params, batch, targets, loss)[1]


def train(
    spec: NetworkSpec,
    cfg: TrainConfig,
    inputs: np.ndarray,
    targets: np.ndarray,
    observed_mask: np.ndarray | None = None,
    augment=None,
) -> TrainResult:
    """Adam on mini-batches with an optional augmentation hook.

    ``augment(batch, batch_observed_mask, rng) -> model inputs`` runs on
    every batch before the forward pass; it may change the input width
    (e.g. to append a missingness indicator). Two calls with the same
    config and data produce bitwise-identical parameters.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets)
    n = inputs.shape[0]
    if n == 0 and cfg.steps > 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(spec, rng)
    theta = params.flat()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    trace: list[tuple[int, float]] = []

    for step in range(cfg.steps):
        idx = rng.integers(0, n, size=cfg.batch_size)
        xb = inputs[idx]
        yb = targets[idx]
        nb = observed_mask[idx] if observed_mask is not None else None
        if augment is not None:
            xb = augment(xb, nb, rng)
        try:
            value, g = loss_and_grad(spec, params, xb, yb, cfg.loss)
        except ValueError as exc:
            raise TrainingDivergedError(f"diverged at step {step}: {exc}") from exc
        if not np.isfinite(value):
            raise TrainingDivergedError(f"non-finite loss at step {step}")
        if step % cfg.trace_every == 0:
            trace.append((step, value))
        t = step + 1
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        params = Parameters.from_flat(spec, theta)
    return TrainResult(params=params, trace=trace)


def predict(spec: NetworkSpec, params: Parameters, rows: np.ndarray) -> np.ndarray:
    """Means for a linear head; class probabilities for a logits head."""
    out = forward(spec, params, rows)
    if spec.head == "logits":
        return softmax(out)
    return out
