"""Small feed-forward softmax classifiers with explicit backprop.

The nets are deliberately tiny (dense layers, ReLU, softmax head): every
attack in this package only ever sees their output vector, and the white-box
baseline needs exact input gradients, so everything is written out in numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .defense import NoiseModel

CHECKPOINT_TAG = "outrand-checkpoint-v1"
_ACTIVATIONS = ("relu", "linear")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax (max-logit subtraction)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class Layer:
    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray     # (fan_out,)
    activation: str      # "relu" or "linear"


class Classifier:
    """Immutable-after-training MLP; ``forward`` is pure and thread-safe."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("classifier needs at least one layer")
        for layer in layers:
            if layer.activation not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
        if layers[-1].activation != "linear":
            raise ValueError("final layer must be linear (logits feed the softmax head)")
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.layers[-1].weights.shape[1]

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input dimension {x.shape[-1]}, model expects {self.input_dim}")
        return x

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Pre-softmax scores; accepts a single vector or a batch of rows."""
        a = self._check_input(x)
        for layer in self.layers:
            a = a @ layer.weights + layer.bias
            if layer.activation == "relu":
                a = np.maximum(a, 0.0)
        return a

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Output probability vector(s): softmax over the logits."""
        return softmax(self.logits(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=-1)

    def input_gradient(self, x: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
        """d(scalar)/dx given d(scalar)/d(probs) at a single input x.

        Backpropagates through the softmax head and every dense layer; used
        by the white-box attacker and as the oracle for FD fidelity checks.
        """
        x = self._check_input(np.asarray(x, dtype=float).ravel())
        pre = []          # pre-activation per layer
        a = x
        for layer in self.layers:
            z = a @ layer.weights + layer.bias
            pre.append(z)
            a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        p = softmax(a)
        g = np.asarray(grad_probs, dtype=float)
        # Softmax jacobian-transpose product: dz_k = p_k (g_k - g.p)
        delta = p * (g - float(g @ p))
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            if layer.activation == "relu":
                delta = delta * (pre[idx] > 0.0)
            delta = delta @ layer.weights.T
        return delta

    def save(self, path: str) -> None:
        """Textual tensor dump: versioned header, layer dims, row-major weights."""
        lines = [CHECKPOINT_TAG, f"layers {len(self.layers)}"]
        for layer in self.layers:
            fan_in, fan_out = layer.weights.shape
            lines.append(f"layer {layer.activation} {fan_in} {fan_out}")
            for row in layer.weights:
                lines.append(" ".join(f"{v:.17g}" for v in row))
            lines.append(" ".join(f"{v:.17g}" for v in layer.bias))
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str) -> "Classifier":
        with open(path) as f:
            lines = f.read().splitlines()
        if not lines or lines[0] != CHECKPOINT_TAG:
            raise ValueError(f"{path}: not a {CHECKPOINT_TAG} checkpoint")
        count = int(lines[1].split()[1])
        layers, pos = [], 2
        parse = lambda line: np.array([float(v) for v in line.split()])
        for _ in range(count):
            _, activation, fan_in, fan_out = lines[pos].split()
            fan_in, fan_out = int(fan_in), int(fan_out)
            rows = [parse(lines[pos + 1 + r]) for r in range(fan_in)]
            bias = parse(lines[pos + 1 + fan_in])
            layers.append(Layer(np.vstack(rows), bias, activation))
            pos += 2 + fan_in
        return cls(layers)


def init_classifier(layer_sizes: list[int], seed: int) -> Classifier:
    """He-initialized MLP with ReLU hidden layers and a linear head."""
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(layer_sizes) - 1):
        fan_in, fan_out = layer_sizes[i], layer_sizes[i + 1]
        w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        last = i == len(layer_sizes) - 2
        layers.append(Layer(w, np.zeros(fan_out), "linear" if last else "relu"))
    return Classifier(layers)


def batch_loss_and_grads(model: Classifier, x: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over a batch plus parameter gradients per layer.

    Returns (loss, [(dW, db), ...]). Exposed so finite-difference checks can
    probe the training gradients directly.
    """
    batch = len(x)
    pre, activations = [], [np.asarray(x, dtype=float)]
    a = activations[0]
    for layer in model.layers:
        z = a @ layer.weights + layer.bias
        pre.append(z)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        activations.append(a)
    logp = log_softmax(a)
    loss = -float(logp[np.arange(batch), labels].mean())
    delta = softmax(a)
    delta[np.arange(batch), labels] -= 1.0
    delta /= batch
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)
    for idx in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[idx]
        if layer.activation == "relu":
            delta = delta * (pre[idx] > 0.0)
        grads[idx] = (activations[idx].T @ delta, delta.sum(axis=0))
        delta = delta @ layer.weights.T
    return loss, grads


def train_classifier(data: Dataset, hidden: tuple[int, ...] = (64,),
                     epochs: int = 30, learning_rate: float = 0.5,
                     seed: int = 0, batch_size: int = 32) -> Classifier:
    """Mini-batch SGD with backprop; bit-identical trajectories per seed."""
    if data.size == 0:
        raise ValueError("cannot train on an empty dataset")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    model = init_classifier([data.n, *hidden, data.num_classes], seed)
    rng = np.random.default_rng(seed + 1)
    for _ in range(epochs):
        order = rng.permutation(data.size)
        for start in range(0, data.size, batch_size):
            idx = order[start:start + batch_size]
            _, grads = batch_loss_and_grads(model, data.pixels[idx], data.labels[idx])
            for layer, (dw, db) in zip(model.layers, grads):
                layer.weights -= learning_rate * dw
                layer.bias -= learning_rate * db
    return model


def evaluate_accuracy(model: Classifier, data: Dataset,
                      noise: NoiseModel | None = None, seed: int = 0) -> float:
    """Fraction of examples whose (optionally randomized) argmax is correct.

    Under noise every example gets a fresh draw, mirroring what one defended
    query per test input would return.
    """
    if data.size == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    out = model.forward(data.pixels)
    if noise is not None:
        rng = np.random.default_rng(seed)
        out = out + noise.sample(rng, size=data.size)
    return float(np.mean(np.argmax(out, axis=1) == data.labels))
