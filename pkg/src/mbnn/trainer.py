"""Per-sample gradient training: margin ascent and the squared-error baseline.

Both trainers share initialisation, shuffling, bias handling and inference;
they differ only in the objective they follow.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np

from mbnn.gradients import NumericError, exact_gradient, paper_gradient, squared_error_gradient
from mbnn.network import Network, NetworkShape, forward, forward_batch, init_network
from mbnn.objective import DEFAULT_LAMBDA, batch_objective

ALGORITHMS = ("margin", "squared_error")
GRADIENT_MODES = ("exact", "paper")


@dataclass(frozen=True)
class TrainConfig:
    lam: float = DEFAULT_LAMBDA
    alpha: float = 0.01
    epochs: int = 200
    seed: int = 0
    gradient_mode: str = "exact"
    algorithm: str = "margin"
    shuffle_each_epoch: bool = True
    full_batch: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {self.epochs}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    per_epoch_objective: List[float] = field(default_factory=list)
    per_epoch_train_accuracy: List[float] = field(default_factory=list)
    final_network: Network = None  # type: ignore[assignment]
    seed: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,objective,train_accuracy\n")
            for e, (obj, acc) in enumerate(zip(self.per_epoch_objective, self.per_epoch_train_accuracy), 1):
                fh.write(f"{e},{obj!r},{acc!r}\n")


def _ascent_direction(net: Network, x, t, config: TrainConfig):
    """Signed update direction: the margin gradient, or the negated
    squared-error gradient. Non-finite values surface as NumericError, so
    the floating-point warnings are silenced here."""
    with np.errstate(all="ignore"):
        return _direction(net, x, t, config)


def _direction(net: Network, x, t, config: TrainConfig):
    if config.algorithm == "squared_error":
        return squared_error_gradient(net, x, t).scaled(-1.0)
    if config.gradient_mode == "paper":
        return paper_gradient(net, forward(net, x), t, config.lam)
    return exact_gradient(net, x, t, config.lam)


def _apply(net: Network, direction, alpha: float) -> Network:
    for w, g in zip(net.weights, direction.per_layer):
        w += alpha * g
    return net


def _step_size(config: TrainConfig, alpha) -> float:
    if alpha is None:
        return config.alpha
    if not alpha >= 0:
        raise ValueError(f"step size override must be >= 0, got {alpha}")
    return float(alpha)


def sgd_step(net: Network, x, t, config: TrainConfig, alpha=None) -> Network:
    """One in-place single-sample update ``w <- w + alpha * direction``.

    ``alpha`` overrides ``config.alpha`` and, unlike the config, may be 0.
    """
    direction = _ascent_direction(net, x, t, config)
    return _apply(net, direction, _step_size(config, alpha))


def full_batch_step(net: Network, X: np.ndarray, T: np.ndarray, config: TrainConfig, alpha=None) -> Network:
    total = None
    for x, t in zip(X, T):
        d = _ascent_direction(net, x, t, config)
        total = d if total is None else total + d
    return _apply(net, total, _step_size(config, alpha))


def _epoch_metrics(net: Network, X, T, labels, config: TrainConfig):
    if config.algorithm == "squared_error":
        out = forward_batch(net, X).output
        obj = float(np.sum((out - T) ** 2))
    else:
        obj = float(batch_objective(net, X, T, config.lam).sum())
        out = forward_batch(net, X).output
    acc = float(np.mean(np.argmax(out, axis=1) == labels))
    return obj, acc


def train(data, shape: NetworkShape, config: TrainConfig, alpha=None) -> TrainLog:
    """Train a fresh network on ``data`` with the configured algorithm.

    ``alpha`` overrides the configured step size (0 allowed).

    The logged objective is the one the algorithm follows: the summed margin
    objective for ``margin`` and the summed squared error for
    ``squared_error``.
    """
    if data.n_samples == 0:
        raise ValueError("training data is empty")
    if data.n_features != shape.input_dim:
        raise ValueError(f"data has {data.n_features} features, shape expects {shape.input_dim}")
    X = data.features
    T = data.targets(shape.output_dim)
    labels = data.labels

    # One generator: initial weights first, then the shuffle orders.
    rng = np.random.default_rng(config.seed)
    net = init_network(shape, rng)
    log = TrainLog(seed=config.seed)
    order = np.arange(len(X))
    for epoch in range(1, config.epochs + 1):
        if config.full_batch:
            try:
                full_batch_step(net, X, T, config, alpha)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, full batch: {exc}") from None
        else:
            if config.shuffle_each_epoch:
                order = rng.permutation(len(X))
            for i in order:
                try:
                    sgd_step(net, X[i], T[i], config, alpha)
                except NumericError as exc:
                    raise NumericError(f"epoch {epoch}, sample {i}: {exc}") from None
        for m, w in enumerate(net.weights):
            if not np.all(np.isfinite(w)):
                raise NumericError(f"epoch {epoch}: non-finite weights in layer {m}")
        obj, acc = _epoch_metrics(net, X, T, labels, config)
        log.per_epoch_objective.append(obj)
        log.per_epoch_train_accuracy.append(acc)
    log.final_network = net
    return log


def train_margin(data, shape: NetworkShape, config: TrainConfig, alpha=None) -> TrainLog:
    if config.algorithm != "margin":
        raise ValueError("train_margin needs algorithm='margin'")
    return train(data, shape, config, alpha)


def train_squared_error(data, shape: NetworkShape, config: TrainConfig, alpha=None) -> TrainLog:
    if config.algorithm != "squared_error":
        raise ValueError("train_squared_error needs algorithm='squared_error'")
    return train(data, shape, config, alpha)
