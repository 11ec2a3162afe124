"""Network representation, shifted-sigmoid activation and the forward pass.

Weight matrix ``m`` maps the activations of layer ``m`` to layer ``m + 1``.
Each row is one neuron's weight vector; when the network carries biases the
last column multiplies a constant 1.0 appended to the layer input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

MODEL_MAGIC = "mbnn-model v1"
EXP_CLAMP = 500.0
# Largest double strictly below 0.5; keeps the activation range open.
_HALF_OPEN = float(np.nextafter(0.5, 0.0))


class DimensionError(ValueError):
    """Input whose shape does not fit the network or operation."""


class ModelFormatError(ValueError):
    """Malformed model file. ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def activation(z):
    """Logistic sigmoid shifted down by 0.5, so the range is (-0.5, 0.5).

    Evaluated as ``tanh(z / 2) / 2``, which is the same function but exactly
    odd in floating point.
    """
    z = np.clip(z, -EXP_CLAMP, EXP_CLAMP)
    return np.clip(0.5 * np.tanh(0.5 * z), -_HALF_OPEN, _HALF_OPEN)


def activation_derivative(z):
    """``(0.5 + s) * (0.5 - s)`` with ``s = activation(z)``.

    Computed as ``e / (1 + e)**2`` with ``e = exp(-|z|)`` so it stays strictly
    positive after the clamp instead of rounding to zero once ``s`` hits 0.5.
    """
    z = np.clip(z, -EXP_CLAMP, EXP_CLAMP)
    e = np.exp(-np.abs(z))
    # rounding can land one ulp above the true maximum at z ~ 0
    return np.minimum(e / (1.0 + e) ** 2, 0.25)


@dataclass(frozen=True)
class NetworkShape:
    input_dim: int
    hidden_layers: int
    hidden_width: int
    output_dim: int
    bias: bool = True

    def __post_init__(self):
        for name in ("input_dim", "hidden_layers", "hidden_width", "output_dim"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DimensionError(f"{name} must be a positive integer, got {value!r}")

    @property
    def widths(self) -> List[int]:
        """Neuron counts per layer, input first, output last."""
        return [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]

    @property
    def n_weight_layers(self) -> int:
        return self.hidden_layers + 1

    def weight_shapes(self) -> List[tuple]:
        extra = 1 if self.bias else 0
        w = self.widths
        return [(w[m + 1], w[m] + extra) for m in range(self.n_weight_layers)]

    def describe(self) -> str:
        return "-".join(str(w) for w in self.widths)


@dataclass
class Network:
    shape: NetworkShape
    weights: List[np.ndarray]

    def __post_init__(self):
        expected = self.shape.weight_shapes()
        if len(self.weights) != len(expected):
            raise DimensionError(
                f"expected {len(expected)} weight matrices, got {len(self.weights)}"
            )
        self.weights = [np.array(w, dtype=float) for w in self.weights]
        for m, (w, shp) in enumerate(zip(self.weights, expected)):
            if w.shape != shp:
                raise DimensionError(f"weight layer {m}: shape {w.shape}, expected {shp}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"weight layer {m} has non-finite entries")

    @property
    def bias(self) -> bool:
        return self.shape.bias

    def copy(self) -> "Network":
        return Network(self.shape, [w.copy() for w in self.weights])

    def augment(self, y: np.ndarray) -> np.ndarray:
        """Append the constant bias input (along the last axis) when biased."""
        if not self.bias:
            return y
        ones = np.ones(y.shape[:-1] + (1,))
        return np.concatenate([y, ones], axis=-1)

    def strip_bias(self, w: np.ndarray) -> np.ndarray:
        """Columns of ``w`` that multiply neuron outputs (bias column dropped)."""
        return w[..., :-1] if self.bias else w


@dataclass
class ForwardTrace:
    """Activations of every layer (input first) and pre-activations of every
    weight layer for a single sample."""

    activations: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


def init_network(shape: NetworkShape, seed: Union[int, np.random.Generator] = 0) -> Network:
    """Uniform(-r, r) weights with ``r = 1/sqrt(fan_in)``, bias column counted.

    ``seed`` may be an existing generator so callers can share one stream.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights = []
    for rows, cols in shape.weight_shapes():
        r = 1.0 / np.sqrt(cols)
        weights.append(rng.uniform(-r, r, size=(rows, cols)))
    return Network(shape, weights)


def _check_input(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (net.shape.input_dim,):
        raise DimensionError(
            f"input has {x.shape[-1] if x.ndim else 0} features, network expects {net.shape.input_dim}"
        )
    return x


def forward(net: Network, x: Sequence[float]) -> ForwardTrace:
    x = _check_input(net, x)
    if x.ndim != 1:
        raise DimensionError("forward takes a single sample; use forward_batch")
    trace = ForwardTrace(activations=[x])
    y = x
    for w in net.weights:
        z = w @ net.augment(y)
        y = activation(z)
        trace.pre_activations.append(z)
        trace.activations.append(y)
    return trace


def forward_batch(net: Network, X: np.ndarray) -> ForwardTrace:
    """Row-wise forward pass; every stored array has one row per sample."""
    X = _check_input(net, np.atleast_2d(X))
    trace = ForwardTrace(activations=[X])
    y = X
    for w in net.weights:
        z = net.augment(y) @ w.T
        y = activation(z)
        trace.pre_activations.append(z)
        trace.activations.append(y)
    return trace


def predict(net: Network, x: Sequence[float]) -> int:
    # np.argmax returns the first maximum, so ties go to the lowest index.
    return int(np.argmax(forward(net, x).output))


def predict_batch(net: Network, X: np.ndarray) -> np.ndarray:
    return np.argmax(forward_batch(net, X).output, axis=1)


def save_model(net: Network, path: Union[str, Path]) -> None:
    s = net.shape
    lines = [MODEL_MAGIC, f"{s.input_dim} {s.hidden_layers} {s.hidden_width} {s.output_dim}"]
    for w in net.weights:
        for row in w:
            lines.append(" ".join(format(v, ".17g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: Union[str, Path]) -> Network:
    """Read a model file. Whether the network has biases is inferred from the
    column count of the first weight row."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != MODEL_MAGIC:
        raise ModelFormatError(1, f"expected header {MODEL_MAGIC!r}")
    if len(lines) < 2:
        raise ModelFormatError(2, "missing dimension line")
    try:
        dims = [int(tok) for tok in lines[1].split()]
    except ValueError:
        raise ModelFormatError(2, "dimensions must be integers") from None
    if len(dims) != 4:
        raise ModelFormatError(2, f"expected 4 dimensions, got {len(dims)}")
    try:
        NetworkShape(*dims)
    except DimensionError as exc:
        raise ModelFormatError(2, str(exc)) from None

    rows = []
    for lineno, text in enumerate(lines[2:], start=3):
        if not text.strip():
            continue
        try:
            rows.append((lineno, [float(tok) for tok in text.split()]))
        except ValueError:
            raise ModelFormatError(lineno, "non-numeric weight") from None
    if not rows:
        raise ModelFormatError(3, "no weight rows")
    bias = len(rows[0][1]) == dims[0] + 1
    shape = NetworkShape(*dims, bias=bias)

    weights = []
    pos = 0
    for n_rows, n_cols in shape.weight_shapes():
        block = []
        for _ in range(n_rows):
            if pos >= len(rows):
                raise ModelFormatError(len(lines) + 1, "unexpected end of file")
            lineno, vals = rows[pos]
            if len(vals) != n_cols:
                raise ModelFormatError(lineno, f"expected {n_cols} values, got {len(vals)}")
            if not all(np.isfinite(vals)):
                raise ModelFormatError(lineno, "non-finite weight")
            block.append(vals)
            pos += 1
        weights.append(np.array(block))
    if pos != len(rows):
        raise ModelFormatError(rows[pos][0], "trailing weight rows")
    return Network(shape, weights)
