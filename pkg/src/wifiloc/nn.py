"""Minimal feed-forward network engine.

Dense layers with relu/tanh/linear activations and a softmax output,
inverted dropout at layer gaps, softmax cross-entropy and mean-squared
losses, exact reverse-mode gradients, and the Adam optimizer. Float64
throughout. Matrix products use BLAS via NumPy; the elementwise and
row-wise loops dispatch to ``wifiloc.kernels``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels as K


class NumericalError(RuntimeError):
    """A non-finite value showed up where the math requires finite ones."""


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    LINEAR = "linear"
    SOFTMAX = "softmax"  # permitted on the output layer only


@dataclass
class DenseLayer:
    """Fully connected layer: y = act(x @ weights.T + biases)."""

    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray   # (out_dim,)
    activation: Activation

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.biases = np.ascontiguousarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"inconsistent layer shapes: weights {self.weights.shape}, biases {self.biases.shape}"
            )
        if not np.isfinite(self.weights).all() or not np.isfinite(self.biases).all():
            raise ValueError("layer parameters must be finite")
        self.activation = Activation(self.activation)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.biases.copy(), self.activation)


def init_dense(in_dim: int, out_dim: int, activation: Activation, rng) -> DenseLayer:
    """Variance-preserving uniform init in +-sqrt(6/(fan_in+fan_out)), zero biases."""
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
    return DenseLayer(weights, np.zeros(out_dim), activation)


@dataclass
class Network:
    """Ordered dense layers plus a dropout rate per layer gap.

    ``dropout_rates[i]`` applies to the output of layer i before it
    feeds layer i+1 (so there are len(layers) - 1 gaps). Softmax is only
    valid on the final layer.
    """

    layers: list
    dropout_rates: list = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for i in range(len(self.layers) - 1):
            if self.layers[i].out_dim != self.layers[i + 1].in_dim:
                raise ValueError(
                    f"layer {i} out_dim {self.layers[i].out_dim} != layer {i + 1} "
                    f"in_dim {self.layers[i + 1].in_dim}"
                )
        for i, layer in enumerate(self.layers):
            if layer.activation is Activation.SOFTMAX and i != len(self.layers) - 1:
                raise ValueError("softmax is only allowed on the output layer")
        if not self.dropout_rates:
            self.dropout_rates = [0.0] * (len(self.layers) - 1)
        if len(self.dropout_rates) != len(self.layers) - 1:
            raise ValueError("need one dropout rate per layer gap")
        for r in self.dropout_rates:
            if not 0.0 <= r < 1.0:
                raise ValueError(f"dropout rate {r} outside [0, 1)")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list:
        """Live views [W0, b0, W1, b1, ...] for in-place optimization."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "Network":
        return Network([l.copy() for l in self.layers], list(self.dropout_rates))


@dataclass
class ForwardTrace:
    """Everything backward() needs from one forward pass."""

    layer_inputs: list      # input to each layer, after the preceding gap's dropout
    pre_activations: list   # z per layer
    post_activations: list  # act(z) per layer, before dropout
    dropout_draws: list     # per gap: uniform draws used for the mask, or None
    train: bool

    @property
    def output(self) -> np.ndarray:
        return self.post_activations[-1]


def _activate(z, activation):
    if activation is Activation.RELU:
        return K.relu(z)
    if activation is Activation.TANH:
        return K.tanh_forward(z)
    if activation is Activation.LINEAR:
        return z
    return K.softmax(z)


def forward(net: Network, batch, train: bool = False, rng=None) -> ForwardTrace:
    """Run a batch through the network, keeping per-layer activations.

    Inference applies no dropout and never consults the RNG; training
    draws an inverted-dropout mask at every gap with a nonzero rate
    (an RNG is required only then).
    """
    x = np.ascontiguousarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("batch must be a matrix (n, in_dim)")
    if x.shape[1] != net.input_dim:
        raise ValueError(f"batch width {x.shape[1]} != network input {net.input_dim}")

    layer_inputs, pre_acts, post_acts = [], [], []
    draws = [None] * (len(net.layers) - 1)
    for i, layer in enumerate(net.layers):
        layer_inputs.append(x)
        z = x @ layer.weights.T + layer.biases
        a = _activate(z, layer.activation)
        if not np.isfinite(a).all():
            raise NumericalError(f"non-finite activation in layer {i}")
        pre_acts.append(z)
        post_acts.append(a)
        x = a
        if i < len(net.layers) - 1:
            rate = net.dropout_rates[i]
            if train and rate > 0.0:
                if rng is None:
                    raise ValueError("training forward with dropout needs an RNG")
                u = rng.random(a.shape)
                draws[i] = u
                x = K.dropout_apply(a, u, rate)
    return ForwardTrace(layer_inputs, pre_acts, post_acts, draws, train)


def _check_trace(net: Network, trace: ForwardTrace):
    if len(trace.layer_inputs) != len(net.layers):
        raise ValueError("trace does not match the network (layer count)")
    for i, layer in enumerate(net.layers):
        if trace.layer_inputs[i].shape[1] != layer.in_dim:
            raise ValueError(f"trace does not match the network at layer {i}")
        if trace.pre_activations[i].shape[1] != layer.out_dim:
            raise ValueError(f"trace does not match the network at layer {i}")


def backward(net: Network, trace: ForwardTrace, output_grad, logits_grad: bool = False) -> list:
    """Reverse-mode gradients for every weight and bias.

    ``output_grad`` is d(loss)/d(output). With ``logits_grad`` it is
    taken as d(loss)/d(pre-activation) of the final layer instead, which
    is how softmax cross-entropy reports its gradient.
    """
    _check_trace(net, trace)
    g = np.ascontiguousarray(output_grad, dtype=np.float64)
    if g.shape != trace.post_activations[-1].shape:
        raise ValueError("output_grad shape does not match the forward output")

    grads = [None] * (2 * len(net.layers))
    last = len(net.layers) - 1
    for i in range(last, -1, -1):
        layer = net.layers[i]
        if i == last and logits_grad:
            dz = g
        else:
            act = layer.activation
            if act is Activation.RELU:
                dz = K.relu_backward(g, trace.pre_activations[i])
            elif act is Activation.TANH:
                dz = K.tanh_backward(g, trace.post_activations[i])
            elif act is Activation.LINEAR:
                dz = g
            else:  # softmax Jacobian-vector product
                y = trace.post_activations[i]
                dz = y * (g - np.sum(g * y, axis=1, keepdims=True))
        grads[2 * i] = dz.T @ trace.layer_inputs[i]
        grads[2 * i + 1] = dz.sum(axis=0)
        if i > 0:
            g = dz @ layer.weights
            if trace.train and trace.dropout_draws[i - 1] is not None:
                g = K.dropout_backward(g, trace.dropout_draws[i - 1], net.dropout_rates[i - 1])
    return grads


def softmax(logits) -> np.ndarray:
    """Row-wise stabilized softmax."""
    z = np.ascontiguousarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("logits must be a matrix (n, num_classes)")
    return K.softmax(z)


def softmax_cross_entropy(logits, labels) -> tuple:
    """Mean categorical cross-entropy; grad is (softmax - onehot)/n w.r.t. logits."""
    z = np.ascontiguousarray(logits, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise ValueError("expected logits (n, C) and labels (n,)")
    if y.size and (y.min() < 0 or y.max() >= z.shape[1]):
        raise ValueError(f"label outside [0, {z.shape[1]})")
    return K.softmax_xent(z, y)


def mse_loss(reconstruction, target) -> tuple:
    """Mean squared entry difference; grad = 2(reconstruction - target)/count."""
    r = np.asarray(reconstruction, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if r.shape != t.shape:
        raise ValueError(f"shape mismatch: {r.shape} vs {t.shape}")
    diff = r - t
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad


@dataclass
class AdamState:
    """Per-parameter first/second moments plus hyperparameters."""

    m: list
    v: list
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, learning_rate: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(params, grads, state: AdamState) -> None:
    """One bias-corrected Adam update, in place on params and state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and optimizer state must align")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.isfinite(g).all():
            raise NumericalError("non-finite gradient")
    t = state.step_count + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        K.adam_update(
            p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
            m.reshape(-1), v.reshape(-1),
            state.learning_rate, state.beta1, state.beta2, state.eps, bc1, bc2,
        )
    state.step_count = t


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by pretraining and fine-tuning loops."""

    epochs: int
    batch_size: int = 64
    learning_rate: float = 1e-3
    patience: object = None  # int epochs without improvement, None disables

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("invalid training hyperparameters")


def iterate_minibatches(n: int, batch_size: int, rng):
    """Yield index arrays covering 0..n-1 in a freshly shuffled order."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def save_network(net: Network, path) -> None:
    """Write a self-describing container (.npz): metadata + parameter arrays.

    Arrays are stored row-major as little-endian float64; the metadata
    header repeats dtype/endianness/order explicitly.
    """
    meta = {
        "format": "wifiloc-network",
        "version": 1,
        "dtype": "float64",
        "byte_order": "little",
        "array_order": "row-major",
        "layer_dims": [[l.in_dim, l.out_dim] for l in net.layers],
        "activations": [l.activation.value for l in net.layers],
        "dropout_rates": [float(r) for r in net.dropout_rates],
    }
    arrays = {}
    for i, layer in enumerate(net.layers):
        arrays[f"w{i}"] = np.ascontiguousarray(layer.weights, dtype="<f8")
        arrays[f"b{i}"] = np.ascontiguousarray(layer.biases, dtype="<f8")
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_network(path) -> Network:
    with np.load(path) as archive:
        meta = json.loads(bytes(archive["meta"]).decode())
        if meta.get("format") != "wifiloc-network" or meta.get("version") != 1:
            raise ValueError(f"{path}: not a version-1 network container")
        layers = []
        for i, (dims, act) in enumerate(zip(meta["layer_dims"], meta["activations"])):
            w = archive[f"w{i}"].astype(np.float64)
            b = archive[f"b{i}"].astype(np.float64)
            if list(w.shape) != [dims[1], dims[0]]:
                raise ValueError(f"{path}: layer {i} array shape disagrees with header")
            layers.append(DenseLayer(w, b, Activation(act)))
    return Network(layers, list(meta["dropout_rates"]))
