"""Encoder-decoder pretraining for feature reduction.

The autoencoder is a mirrored stack: input -> e1 -> ... -> ek (encoder)
followed by ek -> ... -> e1 -> input (decoder, untied weights, linear
output since inputs are standardized). Unsupervised pretraining drives
the reconstruction toward the input; the trained encoder is then cut
out and handed to the classifier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    Activation,
    AdamState,
    Network,
    TrainConfig,
    adam_step,
    backward,
    forward,
    init_dense,
    iterate_minibatches,
    mse_loss,
)


@dataclass(frozen=True)
class AutoencoderSpec:
    input_dim: int
    encoder_sizes: tuple = (256, 128, 64)
    hidden_activation: Activation = Activation.RELU

    def __post_init__(self):
        object.__setattr__(self, "encoder_sizes", tuple(int(s) for s in self.encoder_sizes))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not self.encoder_sizes:
            raise ValueError("encoder_sizes must be non-empty")
        if any(s < 1 for s in self.encoder_sizes):
            raise ValueError("encoder sizes must be positive")
        if self.encoder_sizes[-1] >= self.input_dim:
            raise ValueError("bottleneck must be narrower than the input")
        if Activation(self.hidden_activation) is Activation.SOFTMAX:
            raise ValueError("softmax is not a hidden activation")

    @property
    def bottleneck(self) -> int:
        return self.encoder_sizes[-1]

    def dims(self) -> list:
        """Full width chain input -> encoder sizes -> mirrored decoder -> input."""
        enc = [self.input_dim, *self.encoder_sizes]
        return enc + enc[-2::-1]


def build_autoencoder(spec: AutoencoderSpec, rng) -> Network:
    """Freshly initialized mirrored autoencoder; decoder output is linear."""
    dims = spec.dims()
    act = Activation(spec.hidden_activation)
    layers = []
    for i in range(len(dims) - 1):
        activation = Activation.LINEAR if i == len(dims) - 2 else act
        layers.append(init_dense(dims[i], dims[i + 1], activation, rng))
    return Network(layers)


def pretrain(auto: Network, train_vectors, cfg: TrainConfig, rng) -> list:
    """Adam on the reconstruction MSE, in place; returns per-epoch mean loss."""
    x = np.ascontiguousarray(train_vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != auto.input_dim:
        raise ValueError(f"expected vectors of width {auto.input_dim}")
    params = auto.parameters()
    state = AdamState.for_params(params, learning_rate=cfg.learning_rate)
    history = []
    n = x.shape[0]
    for _ in range(cfg.epochs):
        total = 0.0
        for idx in iterate_minibatches(n, cfg.batch_size, rng):
            xb = np.ascontiguousarray(x[idx])
            trace = forward(auto, xb, train=True, rng=rng)
            loss, grad = mse_loss(trace.output, xb)
            if not np.isfinite(loss):
                raise RuntimeError(f"pretraining diverged: reconstruction loss {loss}")
            grads = backward(auto, trace, grad)
            adam_step(params, grads, state)
            total += loss * len(idx)
        history.append(total / n)
    return history


def extract_encoder(auto: Network, spec: AutoencoderSpec) -> Network:
    """Independent copy of the encoder layers, through the bottleneck.

    The copy's forward equals the bottleneck activation of the full
    autoencoder on any input.
    """
    dims = spec.dims()
    k = len(spec.encoder_sizes)
    if len(auto.layers) != 2 * k:
        raise ValueError(
            f"autoencoder has {len(auto.layers)} layers, spec implies {2 * k}"
        )
    for i, layer in enumerate(auto.layers):
        if (layer.in_dim, layer.out_dim) != (dims[i], dims[i + 1]):
            raise ValueError(f"autoencoder layer {i} does not match the spec widths")
    expected_act = Activation(spec.hidden_activation)
    for i, layer in enumerate(auto.layers[:-1]):
        if layer.activation is not expected_act:
            raise ValueError(f"autoencoder layer {i} activation does not match the spec")
    if auto.layers[-1].activation is not Activation.LINEAR:
        raise ValueError("autoencoder output layer must be linear")
    return Network([auto.layers[i].copy() for i in range(k)])
