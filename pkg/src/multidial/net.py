"""Minimal fully-connected network engine trained with plain minibatch SGD.

The same engine backs the per-domain Q-networks (ReLU hidden layers, linear
output, masked squared error) and the domain classifier (tanh hidden layers,
one-vs-rest margin output, hinge loss). Forward and backward passes are
hand-rolled numpy; there is no autodiff and no optimiser state beyond the
weights themselves, which keeps networks cheap to clone and checkpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_KINDS = ("linear", "hinge_margin")
LOSS_KINDS = ("squared_error", "hinge")

CHECKPOINT_MAGIC = "multidial-net 1"


class NetworkConfigError(ValueError):
    """Raised for invalid architectures or build parameters."""


class NetworkInputError(ValueError):
    """Raised when an input or target does not match the network shape."""


@dataclass
class Network:
    """A stack of affine layers with a fixed hidden nonlinearity.

    ``weights[l]`` has shape ``(layer_dims[l + 1], layer_dims[l])`` and acts on
    column-convention vectors; ``biases[l]`` has shape ``(layer_dims[l + 1],)``.
    The output layer is always affine; ``output_kind`` only records which loss
    the network is meant to be trained with.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_kind: str = "linear"

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class TrainConfig:
    """SGD settings. The learning rate is ours to pick; 0.01 is stable for
    the 80-unit ReLU networks at batch size 32."""

    learning_rate: float = 0.01
    l2_decay: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise NetworkConfigError("learning_rate must be >= 0")
        if self.l2_decay < 0:
            raise NetworkConfigError("l2_decay must be >= 0")


def init_network(
    dims: list[int] | tuple[int, ...],
    hidden_activation: str = "relu",
    seed: int = 0,
    output_kind: str = "linear",
) -> Network:
    """Build a network with seeded uniform weights scaled by 1/sqrt(fan_in).

    ``dims`` lists layer sizes input-first, so at least three entries are
    required (one hidden layer). Biases start at zero. The same seed always
    yields bit-identical weights.
    """
    dims = list(dims)
    if len(dims) < 3:
        raise NetworkConfigError(f"need at least input, hidden, output dims, got {dims}")
    if any(int(d) <= 0 or int(d) != d for d in dims):
        raise NetworkConfigError(f"layer dims must be positive integers, got {dims}")
    if hidden_activation not in HIDDEN_ACTIVATIONS:
        raise NetworkConfigError(f"unknown hidden activation {hidden_activation!r}")
    if output_kind not in OUTPUT_KINDS:
        raise NetworkConfigError(f"unknown output kind {output_kind!r}")
    dims = [int(d) for d in dims]
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(dims, weights, biases, hidden_activation, output_kind)


def _apply_hidden(net: Network, z: np.ndarray) -> np.ndarray:
    if net.hidden_activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _hidden_deriv(net: Network, a: np.ndarray) -> np.ndarray:
    # Derivative written in terms of the post-activation value.
    if net.hidden_activation == "relu":
        return (a > 0.0).astype(float)
    return 1.0 - a * a


def _activations(net: Network, x: np.ndarray) -> list[np.ndarray]:
    """All layer outputs for a batch, input included, output layer linear."""
    acts = [x]
    a = x
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        a = z if l == last else _apply_hidden(net, z)
        acts.append(a)
    return acts


def forward_batch(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise NetworkInputError(
            f"expected batch of shape (n, {net.input_dim}), got {x.shape}"
        )
    return _activations(net, x)[-1]


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Output-layer activations for a single input vector. Pure."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise NetworkInputError(f"expected input of length {net.input_dim}, got {x.shape}")
    return _activations(net, x[None, :])[-1][0]


def _loss_and_delta(
    kind: str, out: np.ndarray, targets: np.ndarray, masks: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean per-sample masked loss and dLoss/dOutput for the batch mean."""
    n = out.shape[0]
    if kind == "squared_error":
        diff = out - targets
        loss = float(np.mean(np.sum(masks * diff * diff, axis=1)))
        delta = 2.0 * masks * diff / n
    elif kind == "hinge":
        # One-vs-rest margin loss with margin 1; targets must be +1/-1.
        margin = 1.0 - targets * out
        active = (margin > 0.0) & (masks > 0.0)
        loss = float(np.mean(np.sum(np.where(active, margin, 0.0), axis=1)))
        delta = np.where(active, -targets, 0.0) / n
    else:
        raise NetworkConfigError(f"unknown loss kind {kind!r}")
    return loss, delta


def sgd_step_arrays(
    net: Network,
    inputs: np.ndarray,
    targets: np.ndarray,
    masks: np.ndarray,
    cfg: TrainConfig,
    loss: str = "squared_error",
) -> float:
    """One SGD step on stacked arrays; returns the pre-update masked loss.

    L2 decay applies to weights only, never biases.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    masks = np.asarray(masks, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != net.input_dim:
        raise NetworkInputError(f"bad input batch shape {inputs.shape}")
    if targets.shape != (inputs.shape[0], net.output_dim):
        raise NetworkInputError(f"bad target batch shape {targets.shape}")
    if masks.shape != targets.shape:
        raise NetworkInputError(f"bad mask batch shape {masks.shape}")

    acts = _activations(net, inputs)
    value, delta = _loss_and_delta(loss, acts[-1], targets, masks)

    lr = cfg.learning_rate
    for l in range(len(net.weights) - 1, -1, -1):
        grad_w = delta.T @ acts[l]
        if cfg.l2_decay:
            grad_w = grad_w + cfg.l2_decay * net.weights[l]
        grad_b = delta.sum(axis=0)
        if l > 0:
            # Propagate through the original (pre-update) weights.
            delta = (delta @ net.weights[l]) * _hidden_deriv(net, acts[l])
        net.weights[l] -= lr * grad_w
        net.biases[l] -= lr * grad_b
    return value


def sgd_step(
    net: Network,
    batch: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
    cfg: TrainConfig,
    loss: str = "squared_error",
) -> float:
    """One minibatch step from (input, target, target_mask) triples.

    The mask selects which output units contribute to the loss; for Q-value
    regression only the taken action's unit is unmasked.
    """
    if not batch:
        raise NetworkInputError("batch must be nonempty")
    inputs = np.stack([np.asarray(x, dtype=float) for x, _, _ in batch])
    targets = np.stack([np.asarray(t, dtype=float) for _, t, _ in batch])
    masks = np.stack([np.asarray(m, dtype=float) for _, _, m in batch])
    return sgd_step_arrays(net, inputs, targets, masks, cfg, loss)


def clone_weights(src: Network, dst: Network) -> None:
    """Copy weights src -> dst. Architectures must match exactly; the copy is
    deep, so later updates to either network leave the other untouched."""
    if src.layer_dims != dst.layer_dims:
        raise NetworkInputError(
            f"architecture mismatch: {src.layer_dims} vs {dst.layer_dims}"
        )
    if src.hidden_activation != dst.hidden_activation:
        raise NetworkInputError("hidden activation mismatch")
    for l in range(len(src.weights)):
        np.copyto(dst.weights[l], src.weights[l])
        np.copyto(dst.biases[l], src.biases[l])


def clone_network(src: Network) -> Network:
    dst = Network(
        list(src.layer_dims),
        [w.copy() for w in src.weights],
        [b.copy() for b in src.biases],
        src.hidden_activation,
        src.output_kind,
    )
    return dst


def save_network(net: Network, path: str) -> None:
    """Write a network as line-oriented text.

    Format: a magic line, ``dims``/``hidden``/``output`` headers, then for
    each layer a ``W <l>`` block with one row of %.17g floats per line and a
    ``b <l>`` block with a single line. %.17g round-trips float64 exactly.
    """
    with open(path, "w") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write("dims " + " ".join(str(d) for d in net.layer_dims) + "\n")
        fh.write(f"hidden {net.hidden_activation}\n")
        fh.write(f"output {net.output_kind}\n")
        for l, (w, b) in enumerate(zip(net.weights, net.biases)):
            fh.write(f"W {l}\n")
            for row in w:
                fh.write(" ".join("%.17g" % v for v in row) + "\n")
            fh.write(f"b {l}\n")
            fh.write(" ".join("%.17g" % v for v in b) + "\n")


def load_network(path: str) -> Network:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise NetworkConfigError(f"{path}: not a network checkpoint")
    dims = [int(v) for v in lines[1].split()[1:]]
    hidden = lines[2].split()[1]
    output = lines[3].split()[1]
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    i = 4
    for l in range(len(dims) - 1):
        if lines[i] != f"W {l}":
            raise NetworkConfigError(f"{path}: expected 'W {l}' at line {i + 1}")
        i += 1
        rows = []
        for _ in range(dims[l + 1]):
            rows.append(np.array([float(v) for v in lines[i].split()]))
            i += 1
        weights.append(np.stack(rows))
        if lines[i] != f"b {l}":
            raise NetworkConfigError(f"{path}: expected 'b {l}' at line {i + 1}")
        i += 1
        biases.append(np.array([float(v) for v in lines[i].split()]))
        i += 1
    net = Network(dims, weights, biases, hidden, output)
    for l, w in enumerate(net.weights):
        if w.shape != (dims[l + 1], dims[l]):
            raise NetworkConfigError(f"{path}: layer {l} has shape {w.shape}")
    return net
