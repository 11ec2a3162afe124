"""Gradients of the per-sample margin objective.

Three routes are provided:

* ``exact_gradient``: reverse-mode chain rule through the objective exactly as
  :mod:`mbnn.objective` evaluates it (bias columns and norm floor included).
  This is what the trainer uses by default.
* ``paper_gradient``: the published delta/gamma recursions transcribed term for
  term. On networks with more than one hidden layer it drops some terms of
  the true gradient; ``gradient_check`` measures by how much.
* ``finite_difference_gradient``: central differences, the independent oracle.

Layer numbering in the ``paper_*`` helpers is 1-based to match the recursions:
hidden layer ``m`` (1..M) owns ``net.weights[m - 1]`` and reads activation
``trace.activations[m - 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from mbnn.network import DimensionError, ForwardTrace, Network, activation_derivative, forward
from mbnn.objective import DEFAULT_LAMBDA, NORM_FLOOR, floored_norm, sample_objective

DEFAULT_FD_STEP = 1e-5
REL_ERROR_FLOOR = 1e-8


class NumericError(ArithmeticError):
    """A gradient or weight became non-finite."""


@dataclass
class GradientSet:
    per_layer: List[np.ndarray]

    def __len__(self):
        return len(self.per_layer)

    def __getitem__(self, m):
        return self.per_layer[m]

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.per_layer])

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet([g * factor for g in self.per_layer])

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet([a + b for a, b in zip(self.per_layer, other.per_layer)])


def _check_finite(grads: List[np.ndarray]) -> None:
    for m, g in enumerate(grads):
        bad = np.argwhere(~np.isfinite(g))
        if len(bad):
            r, c = bad[0]
            raise NumericError(f"non-finite gradient at layer {m}, row {r}, column {c}")


# -- exact mode --------------------------------------------------------------


def _row_norm_terms(w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Floored norms and a mask of rows whose norm is above the floor; only
    those rows have a norm that depends on the weights."""
    raw = np.linalg.norm(w, axis=1)
    return np.maximum(raw, NORM_FLOOR), raw >= NORM_FLOOR


def exact_gradient(net: Network, x, t, lam: float = DEFAULT_LAMBDA,
                   trace: Optional[ForwardTrace] = None) -> GradientSet:
    if trace is None:
        trace = forward(net, x)
    t = np.asarray(t, dtype=float)
    W = net.weights
    grads: List[np.ndarray] = [None] * len(W)  # type: ignore[list-item]

    # Output layer: margin term only.
    w = W[-1]
    u = net.augment(trace.activations[-2])
    z = trace.pre_activations[-1]
    n, live = _row_norm_terms(w)
    dz = t / n
    grads[-1] = np.outer(dz, u) - ((t * z / n**3) * live)[:, None] * w
    upstream = net.strip_bias(w).T @ dz

    for m in range(len(W) - 2, -1, -1):
        w = W[m]
        u = net.augment(trace.activations[m])
        z = trace.pre_activations[m]
        s = trace.activations[m + 1]
        n, live = _row_norm_terms(w)
        # d/dz of z*act(z)
        dpen = s + z * activation_derivative(z)
        dz = upstream * activation_derivative(z) - lam * dpen / n
        grads[m] = np.outer(dz, u) + ((lam * z * s / n**3) * live)[:, None] * w
        upstream = net.strip_bias(w).T @ dz

    _check_finite(grads)
    return GradientSet(grads)


# -- published recursions ------------------------------------------------------


def paper_delta_output_chain(net: Network, trace: ForwardTrace, t) -> List[np.ndarray]:
    """Output-margin deltas for hidden layers M, M-1, ..., 1 (in that order)."""
    t = np.asarray(t, dtype=float)
    M = net.shape.hidden_layers
    if t.shape != (net.shape.output_dim,) or len(trace.pre_activations) != M + 1:
        raise DimensionError("trace/target do not match the network")
    w_out = net.weights[-1]
    coef = t / floored_norm(w_out)
    delta = (net.strip_bias(w_out).T @ coef) * activation_derivative(trace.pre_activations[M - 1])
    chain = [delta]
    for m in range(M, 1, -1):
        w = net.strip_bias(net.weights[m - 1])
        delta = (w.T @ delta) * activation_derivative(trace.pre_activations[m - 2])
        chain.append(delta)
    return chain


def paper_delta_hidden_chain(net: Network, trace: ForwardTrace, target_layer: int,
                             literal_n: bool = False) -> List[np.ndarray]:
    """Penalty deltas seeded at hidden layer ``target_layer`` and recursed down
    to layer 1; returned for layers m, m-1, ..., 1.

    The seed sums over the neurons of layer m+2. With ``literal_n`` the sum
    stops after ``output_dim`` neurons, the bound as literally printed.
    """
    M = net.shape.hidden_layers
    m = target_layer
    if not 1 <= m <= M:
        raise DimensionError(f"target layer {m} outside 1..{M}")
    w_next = net.weights[m]
    y_next = trace.activations[m + 1]
    if literal_n:
        k = min(net.shape.output_dim, w_next.shape[0])
        w_next, y_next = w_next[:k], y_next[:k]
    coef = y_next / floored_norm(w_next)
    delta = (net.strip_bias(w_next).T @ coef) * activation_derivative(trace.pre_activations[m - 1])
    chain = [delta]
    for k in range(m, 1, -1):
        w = net.strip_bias(net.weights[k - 1])
        delta = (w.T @ delta) * activation_derivative(trace.pre_activations[k - 2])
        chain.append(delta)
    return chain


def paper_gamma(net: Network, trace: ForwardTrace, layer: int, neuron: int) -> np.ndarray:
    M = net.shape.hidden_layers
    if not 1 <= layer <= M:
        raise DimensionError(f"layer {layer} outside 1..{M}")
    w_layer = net.weights[layer - 1]
    if not 0 <= neuron < w_layer.shape[0]:
        raise DimensionError(f"neuron {neuron} outside 0..{w_layer.shape[0] - 1}")
    w = w_layer[neuron]
    u = net.augment(trace.activations[layer - 1])
    z = float(trace.pre_activations[layer - 1][neuron])
    y = float(trace.activations[layer][neuron])
    return gamma_vector(w, u, z, y)


def gamma_vector(w: np.ndarray, u: np.ndarray, z: float, y: float) -> np.ndarray:
    n = float(floored_norm(w))
    return (y / n) * u - (z * y / n**3) * w + (z * float(activation_derivative(z)) / n) * u


def output_row_gradient(w: np.ndarray, u: np.ndarray, t_i: float) -> np.ndarray:
    """Gradient of one output row's margin term, as published."""
    w = np.asarray(w, dtype=float)
    u = np.asarray(u, dtype=float)
    n = float(floored_norm(w))
    return (t_i / n) * u - (t_i * float(w @ u) / n**3) * w


def paper_gradient(net: Network, trace: ForwardTrace, t, lam: float = DEFAULT_LAMBDA,
                   literal_n: bool = False) -> GradientSet:
    t = np.asarray(t, dtype=float)
    M = net.shape.hidden_layers
    grads: List[np.ndarray] = []

    out_chain = paper_delta_output_chain(net, trace, t)  # layers M..1
    hidden_chains = {s: paper_delta_hidden_chain(net, trace, s, literal_n) for s in range(2, M + 1)}
    for m in range(1, M + 1):
        u = net.augment(trace.activations[m - 1])
        delta = out_chain[M - m].copy()
        for s in range(m + 1, M + 1):
            delta -= lam * hidden_chains[s][s - m]
        g = np.outer(delta, u)
        for i in range(g.shape[0]):
            g[i] -= lam * paper_gamma(net, trace, m, i)
        grads.append(g)

    w_out = net.weights[-1]
    u = net.augment(trace.activations[M])
    grads.append(np.array([output_row_gradient(w_out[i], u, t[i]) for i in range(len(t))]))
    _check_finite(grads)
    return GradientSet(grads)


# -- squared-error baseline ----------------------------------------------------


def squared_error_loss(net: Network, x, t) -> float:
    out = forward(net, x).output
    return float(np.sum((out - np.asarray(t, dtype=float)) ** 2))


def squared_error_gradient(net: Network, x, t, trace: Optional[ForwardTrace] = None) -> GradientSet:
    """Backprop gradient of ``sum((output - t)**2)``."""
    if trace is None:
        trace = forward(net, x)
    t = np.asarray(t, dtype=float)
    W = net.weights
    grads: List[np.ndarray] = [None] * len(W)  # type: ignore[list-item]
    upstream = 2.0 * (trace.output - t)
    for m in range(len(W) - 1, -1, -1):
        dz = upstream * activation_derivative(trace.pre_activations[m])
        grads[m] = np.outer(dz, net.augment(trace.activations[m]))
        upstream = net.strip_bias(W[m]).T @ dz
    _check_finite(grads)
    return GradientSet(grads)


# -- finite differences --------------------------------------------------------


def finite_difference_gradient(net: Network, x=None, t=None, lam: float = DEFAULT_LAMBDA,
                               step: float = DEFAULT_FD_STEP,
                               objective: Optional[Callable[[Network], float]] = None) -> GradientSet:
    """Central differences with per-coordinate step ``step * max(1, |w|)``.

    ``objective`` overrides the default per-sample margin objective; it is
    called with a perturbed copy of ``net``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if objective is None:
        def objective(n: Network) -> float:
            return sample_objective(n, forward(n, x), t, lam).j_t

    probe = net.copy()
    grads = []
    for m, w in enumerate(probe.weights):
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            h = step * max(1.0, abs(orig))
            w[idx] = orig + h
            plus = objective(probe)
            w[idx] = orig - h
            minus = objective(probe)
            w[idx] = orig
            g[idx] = (plus - minus) / (2.0 * h)
        grads.append(g)
    return GradientSet(grads)


# -- comparison ----------------------------------------------------------------


@dataclass
class LayerError:
    layer: int
    max_abs_error: float
    max_rel_error: float


@dataclass
class GradCheckReport:
    max_abs_error: float
    max_rel_error: float
    worst_coordinate: Tuple[int, int, int]
    mode_compared: str
    per_layer: List[LayerError] = field(default_factory=list)

    def summary_line(self) -> str:
        l, r, c = self.worst_coordinate
        return (f"mode={self.mode_compared} max_abs_error={self.max_abs_error:.3e} "
                f"max_rel_error={self.max_rel_error:.3e} worst=(layer {l}, row {r}, col {c})")

    def table(self) -> str:
        lines = ["layer  max_abs_error  max_rel_error"]
        for e in self.per_layer:
            lines.append(f"{e.layer:>5}  {e.max_abs_error:>13.3e}  {e.max_rel_error:>13.3e}")
        return "\n".join(lines)


def relative_error(a: np.ndarray, f: np.ndarray) -> np.ndarray:
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), REL_ERROR_FLOOR)


def compare_gradients(analytic: GradientSet, numeric: GradientSet, mode: str) -> GradCheckReport:
    per_layer = []
    worst, worst_rel, worst_abs = (0, 0, 0), -1.0, 0.0
    for m, (a, f) in enumerate(zip(analytic.per_layer, numeric.per_layer)):
        if a.shape != f.shape:
            raise DimensionError(f"layer {m}: {a.shape} vs {f.shape}")
        abs_err = np.abs(a - f)
        rel_err = relative_error(a, f)
        per_layer.append(LayerError(m, float(abs_err.max()), float(rel_err.max())))
        worst_abs = max(worst_abs, float(abs_err.max()))
        idx = np.unravel_index(np.argmax(rel_err), rel_err.shape)
        if rel_err[idx] > worst_rel:
            worst_rel = float(rel_err[idx])
            worst = (m, int(idx[0]), int(idx[1]))
    return GradCheckReport(worst_abs, max(worst_rel, 0.0), worst, mode, per_layer)


def gradient_check(net: Network, x, t, lam: float = DEFAULT_LAMBDA, mode: str = "exact",
                   step: float = DEFAULT_FD_STEP, literal_n: bool = False) -> GradCheckReport:
    """Compare an analytic gradient mode against central differences. Never
    raises on disagreement; the report carries the numbers."""
    if mode == "exact":
        analytic = exact_gradient(net, x, t, lam)
    elif mode == "paper":
        analytic = paper_gradient(net, forward(net, x), t, lam, literal_n=literal_n)
    else:
        raise ValueError(f"unknown gradient mode {mode!r}")
    numeric = finite_difference_gradient(net, x, t, lam, step)
    return compare_gradients(analytic, numeric, mode)


def random_instance(rng: np.random.Generator, widths: Sequence[int], bias: bool = True):
    """A random (network, x, t) triple for gradient checks. Weights are drawn
    wider than ``init_network`` so activations leave the linear regime."""
    from mbnn.network import NetworkShape

    hidden = widths[1:-1]
    if len(set(hidden)) != 1:
        raise DimensionError("hidden layers must share one width")
    shape = NetworkShape(widths[0], len(hidden), hidden[0], widths[-1], bias=bias)
    weights = [rng.normal(0.0, 1.0, size=s) for s in shape.weight_shapes()]
    net = Network(shape, weights)
    x = rng.normal(0.0, 1.0, size=widths[0])
    t = np.full(widths[-1], -0.5)
    t[rng.integers(widths[-1])] = 0.5
    return net, x, t
