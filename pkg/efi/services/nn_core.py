"""
Inverse Network Core

Fully connected network over a flat weight vector with an explicit forward
tape and a backward pass that returns both the weight gradient and the input
gradient. Everything works on a batch (n x L0) of inputs; a single input
vector is the one-row case.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from efi.core.errors import DomainError
from efi.schemas.network import NetworkShape

logger = logging.getLogger(__name__)


# ── Activations ────────────────────────────────────────────────────────────


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _relu_grad(x: np.ndarray, _: np.ndarray) -> np.ndarray:
    return (x > 0.0).astype(float)


def _tanh_grad(_: np.ndarray, a: np.ndarray) -> np.ndarray:
    return 1.0 - a * a


def _sigmoid_grad(_: np.ndarray, a: np.ndarray) -> np.ndarray:
    return a * (1.0 - a)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _softplus_grad(x: np.ndarray, _: np.ndarray) -> np.ndarray:
    return expit(x)


# name -> (activation, derivative(pre_activation, activation))
ACTIVATIONS: Dict[str, Tuple[Callable, Callable]] = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
    "sigmoid": (expit, _sigmoid_grad),
    "softplus": (_softplus, _softplus_grad),
}


# ── Weight layout ──────────────────────────────────────────────────────────


def layer_slices(shape: NetworkShape) -> List[Tuple[slice, slice]]:
    """(weight slice, bias slice) per layer; W_h is stored row-major as L_h x L_{h-1}."""
    widths = shape.layer_widths
    slices = []
    offset = 0
    for h in range(1, len(widths)):
        n_w = widths[h] * widths[h - 1]
        w_slice = slice(offset, offset + n_w)
        offset += n_w
        b_slice = slice(offset, offset + widths[h])
        offset += widths[h]
        slices.append((w_slice, b_slice))
    return slices


def offset(shape: NetworkShape, layer: int, row: int, col: Optional[int] = None) -> int:
    """Flat index of W_layer[row, col], or of the bias b_layer[row] when col is None.

    Layers are numbered from 1.
    """
    widths = shape.layer_widths
    if not 1 <= layer < len(widths):
        raise DomainError(f"layer {layer} outside 1..{len(widths) - 1}")
    if not 0 <= row < widths[layer]:
        raise DomainError(f"row {row} outside layer {layer} width {widths[layer]}")
    w_slice, b_slice = layer_slices(shape)[layer - 1]
    if col is None:
        return b_slice.start + row
    if not 0 <= col < widths[layer - 1]:
        raise DomainError(f"col {col} outside layer {layer - 1} width {widths[layer - 1]}")
    return w_slice.start + row * widths[layer - 1] + col


def unpack(shape: NetworkShape, weights: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (shape.n_params,):
        raise DomainError(
            f"weight vector has shape {weights.shape}, network needs ({shape.n_params},)"
        )
    widths = shape.layer_widths
    layers = []
    for h, (w_slice, b_slice) in enumerate(layer_slices(shape), start=1):
        W = weights[w_slice].reshape(widths[h], widths[h - 1])
        layers.append((W, weights[b_slice]))
    return layers


def init_weights(shape: NetworkShape, seed: int) -> np.ndarray:
    """Gaussian weights with standard deviation sqrt(2 / fan_in), zero biases, deterministic in ``seed``."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    widths = shape.layer_widths
    weights = np.zeros(shape.n_params)
    for h, (w_slice, _) in enumerate(layer_slices(shape), start=1):
        scale = np.sqrt(2.0 / widths[h - 1])
        weights[w_slice] = rng.normal(0.0, scale, size=widths[h] * widths[h - 1])
    return weights


# ── Forward / backward ─────────────────────────────────────────────────────


@dataclass(frozen=True)
class ForwardTape:
    """Activations a_0 (input) .. a_H (output) and pre-activations z_1 .. z_H."""

    activations: Tuple[np.ndarray, ...]
    pre_activations: Tuple[np.ndarray, ...]
    single: bool = False

    @property
    def output(self) -> np.ndarray:
        out = self.activations[-1]
        return out[0] if self.single else out

    @property
    def n_rows(self) -> int:
        return int(self.activations[0].shape[0])

    def take(self, rows: Sequence[int] | np.ndarray) -> "ForwardTape":
        idx = np.asarray(rows)
        return ForwardTape(
            activations=tuple(a[idx] for a in self.activations),
            pre_activations=tuple(z[idx] for z in self.pre_activations),
            single=False,
        )


def forward(
    shape: NetworkShape, weights: np.ndarray, inputs: np.ndarray
) -> Tuple[np.ndarray, ForwardTape]:
    x = np.asarray(inputs, dtype=float)
    single = x.ndim == 1
    A = x[None, :] if single else x
    if A.ndim != 2 or A.shape[1] != shape.input_width:
        raise DomainError(
            f"network input has shape {x.shape}, expected (..., {shape.input_width})"
        )
    if not np.all(np.isfinite(A)):
        raise DomainError("network input contains non-finite values")

    act, _ = ACTIVATIONS[shape.activation]
    layers = unpack(shape, weights)
    activations = [A]
    pre = []
    for h, (W, b) in enumerate(layers, start=1):
        Zh = activations[-1] @ W.T + b
        pre.append(Zh)
        activations.append(Zh if h == len(layers) else act(Zh))

    tape = ForwardTape(activations=tuple(activations), pre_activations=tuple(pre), single=single)
    return tape.output, tape


def backward(
    shape: NetworkShape, weights: np.ndarray, tape: ForwardTape, upstream: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of sum_i <upstream_i, output_i> w.r.t. the weights (summed over rows)
    and w.r.t. each input row."""
    if len(tape.pre_activations) != shape.n_layers or any(
        a.shape[1] != width for a, width in zip(tape.activations, shape.layer_widths)
    ):
        raise DomainError("forward tape does not match the network shape")

    delta = np.asarray(upstream, dtype=float)
    if delta.ndim == 1:
        delta = delta[None, :]
    if delta.shape != tape.activations[-1].shape:
        raise DomainError(
            f"upstream gradient has shape {delta.shape}, "
            f"expected {tape.activations[-1].shape}"
        )

    _, act_grad = ACTIVATIONS[shape.activation]
    layers = unpack(shape, weights)
    grad_w = np.zeros(shape.n_params)
    slices = layer_slices(shape)
    for h in range(len(layers), 0, -1):
        W, _ = layers[h - 1]
        if h < len(layers):
            delta = delta * act_grad(tape.pre_activations[h - 1], tape.activations[h])
        w_slice, b_slice = slices[h - 1]
        grad_w[w_slice] = (delta.T @ tape.activations[h - 1]).ravel()
        grad_w[b_slice] = delta.sum(axis=0)
        delta = delta @ W

    grad_input = delta[0] if tape.single else delta
    return grad_w, grad_input


class EfiNetwork:
    """Inverse network bound to its shape and current weights."""

    def __init__(self, shape: NetworkShape, weights: Optional[np.ndarray] = None, seed: int = 0):
        self.shape = shape
        self.weights = init_weights(shape, seed) if weights is None else np.asarray(weights, float)

    def forward(self, inputs: np.ndarray) -> Tuple[np.ndarray, ForwardTape]:
        return forward(self.shape, self.weights, inputs)

    def backward(self, tape: ForwardTape, upstream: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return backward(self.shape, self.weights, tape, upstream)


# ── Input standardization ──────────────────────────────────────────────────


class InputScaler:
    """
    Affine standardization of data columns and base-CDF transform of latent
    columns, applied in front of the network. ``backprop`` maps gradients
    w.r.t. scaled inputs back to raw inputs.
    """

    def __init__(
        self,
        mean: np.ndarray,
        scale: np.ndarray,
        n_latent: int,
        cdf: Callable[[np.ndarray], np.ndarray],
        pdf: Callable[[np.ndarray], np.ndarray],
    ):
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.where(np.asarray(scale, dtype=float) > 0.0, scale, 1.0)
        self.n_latent = n_latent
        self.cdf = cdf
        self.pdf = pdf

    @classmethod
    def fit(
        cls,
        data_columns: np.ndarray,
        n_latent: int,
        cdf: Callable[[np.ndarray], np.ndarray],
        pdf: Callable[[np.ndarray], np.ndarray],
    ) -> "InputScaler":
        data_columns = np.atleast_2d(np.asarray(data_columns, dtype=float))
        if data_columns.shape[0] == 0:
            width = data_columns.shape[1]
            return cls(np.zeros(width), np.ones(width), n_latent, cdf, pdf)
        return cls(data_columns.mean(axis=0), data_columns.std(axis=0), n_latent, cdf, pdf)

    def transform(self, inputs: np.ndarray) -> np.ndarray:
        k = inputs.shape[1] - self.n_latent
        out = np.empty_like(inputs, dtype=float)
        out[:, :k] = (inputs[:, :k] - self.mean) / self.scale
        out[:, k:] = self.cdf(inputs[:, k:])
        return out

    def backprop(self, inputs: np.ndarray, grad_scaled: np.ndarray) -> np.ndarray:
        k = inputs.shape[1] - self.n_latent
        out = np.empty_like(grad_scaled, dtype=float)
        out[:, :k] = grad_scaled[:, :k] / self.scale
        out[:, k:] = grad_scaled[:, k:] * self.pdf(inputs[:, k:])
        return out
