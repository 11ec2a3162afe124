"""The margin objective for one sample and for a dataset.

For one sample the objective is the output margin, summed over output
neurons, minus ``lam`` times the abstraction penalty summed over every hidden
neuron::

    output margin   <w_i, y> * t_i / |w_i|
    penalty         z * act(z) / |w|,   z = <w, y_in>

Norms are floored at ``NORM_FLOOR`` so rows near zero stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mbnn.network import DimensionError, ForwardTrace, Network, activation, forward_batch

NORM_FLOOR = 1e-8
DEFAULT_LAMBDA = 0.1


def floored_norm(w: np.ndarray) -> np.ndarray:
    """Row norms of ``w`` (last axis), never below ``NORM_FLOOR``."""
    return np.maximum(np.linalg.norm(w, axis=-1), NORM_FLOOR)


def _pair(w, y):
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    if w.shape != y.shape or w.ndim != 1:
        raise DimensionError(f"vector shapes differ: {w.shape} vs {y.shape}")
    return w, y


def output_margin_term(w_out_row, y_last_hidden, t_i: float) -> float:
    w, y = _pair(w_out_row, y_last_hidden)
    return float(w @ y) * t_i / float(floored_norm(w))


def abstraction_penalty_term(w_row, y_in) -> float:
    w, y = _pair(w_row, y_in)
    z = float(w @ y)
    return z * float(activation(z)) / float(floored_norm(w))


@dataclass(frozen=True)
class ObjectiveBreakdown:
    output_margin: float
    abstraction_penalty: float
    j_t: float
    lam: float


def _check_trace(net: Network, trace: ForwardTrace) -> None:
    if len(trace.activations) != net.shape.n_weight_layers + 1:
        raise DimensionError("trace depth does not match network")
    for m, w in enumerate(net.weights):
        if trace.pre_activations[m].shape[-1] != w.shape[0]:
            raise DimensionError(f"trace layer {m} does not match network")


def sample_objective(net: Network, trace: ForwardTrace, t, lam: float = DEFAULT_LAMBDA) -> ObjectiveBreakdown:
    _check_trace(net, trace)
    t = np.asarray(t, dtype=float)
    if t.shape != (net.shape.output_dim,):
        raise DimensionError(f"target has shape {t.shape}, expected ({net.shape.output_dim},)")
    w_out = net.weights[-1]
    y_last = net.augment(trace.activations[-2])
    margin = sum(
        output_margin_term(w_out[i], y_last, t[i]) for i in range(w_out.shape[0])
    )
    penalty = 0.0
    for m, w in enumerate(net.weights[:-1]):
        y_in = net.augment(trace.activations[m])
        penalty += sum(abstraction_penalty_term(row, y_in) for row in w)
    return ObjectiveBreakdown(margin, penalty, margin - lam * penalty, lam)


def batch_objective(net: Network, X: np.ndarray, targets: np.ndarray, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    """Per-sample objective values for the rows of ``X`` (vectorised)."""
    trace = forward_batch(net, X)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.shape != trace.output.shape:
        raise DimensionError(f"targets shape {targets.shape} != outputs {trace.output.shape}")
    margin = (trace.pre_activations[-1] * targets / floored_norm(net.weights[-1])).sum(axis=1)
    penalty = np.zeros(len(targets))
    for m, w in enumerate(net.weights[:-1]):
        z = trace.pre_activations[m]
        penalty += (z * trace.activations[m + 1] / floored_norm(w)).sum(axis=1)
    return margin - lam * penalty


def dataset_objective(net: Network, data, lam: float = DEFAULT_LAMBDA) -> float:
    """Sum of the per-sample objective over a labelled dataset."""
    if data.n_samples == 0:
        raise DimensionError("dataset is empty")
    targets = data.targets(net.shape.output_dim)
    return float(batch_objective(net, data.features, targets, lam).sum())
