"""Benchmark harness: repeated random splits, both trainers, summary tables."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from mbnn.data import DataError, LabelledDataset, normalize, split_once
from mbnn.network import Network, NetworkShape, predict_batch
from mbnn.trainer import TrainConfig, train

RESULT_COLUMNS = ["dataset", "fraction", "algorithm", "hidden", "seed", "repeat",
                  "test_accuracy", "train_accuracy", "wall_time_s"]
SUMMARY_COLUMNS = ["dataset", "fraction", "algorithm", "mean_accuracy", "stddev", "repeats"]
SWEEP_COLUMNS = ["dataset", "fraction", "hidden", "algorithm", "mean_accuracy", "stddev", "repeats"]

# Hidden widths per dataset, one hidden layer each.
DEFAULT_HIDDEN = {"banknote": 8, "magic": 16, "isolet": 32}

SHORT_NAMES = {"margin": "margin", "squared_error": "ann", "ann": "ann"}


def default_hidden_width(dataset_name: str, fallback: int = 8) -> int:
    key = dataset_name.lower()
    for name, width in DEFAULT_HIDDEN.items():
        if name in key:
            return width
    return fallback


def evaluate_accuracy(net: Network, data: LabelledDataset, indices=None) -> float:
    """Fraction of rows whose argmax prediction equals the label."""
    if indices is None:
        indices = np.arange(data.n_samples)
    indices = np.asarray(indices, dtype=int)
    if indices.size == 0:
        raise DataError("cannot score an empty index set")
    pred = predict_batch(net, data.features[indices])
    return float(np.mean(pred == data.labels[indices]))


def trial_seed(seed: int, repeat: int) -> int:
    """Training seed for one repeat; shared by both algorithms so they start
    from the same weights."""
    return int(np.random.SeedSequence([seed, repeat, 1]).generate_state(1)[0])


@dataclass(frozen=True)
class TrialResult:
    dataset_name: str
    train_fraction: float
    algorithm: str
    seed: int
    repeat: int
    test_accuracy: float
    train_accuracy: float
    wall_time: float = field(compare=False)
    config_snapshot: dict = field(compare=False, hash=False)

    @property
    def hidden(self) -> int:
        return self.config_snapshot["shape"]["hidden_width"]

    def key(self) -> Tuple:
        return (self.train_fraction, self.algorithm, self.repeat)

    def csv_row(self) -> list:
        return [self.dataset_name, repr(self.train_fraction), SHORT_NAMES[self.algorithm], self.hidden,
                self.seed, self.repeat, repr(self.test_accuracy), repr(self.train_accuracy),
                "" if np.isnan(self.wall_time) else f"{self.wall_time:.3f}"]


def run_trial(dataset: LabelledDataset, fraction: float, shape: NetworkShape,
              config: TrainConfig, repeat_index: int) -> TrialResult:
    """Split, normalise on the training rows, train, score the held-out rows.

    The split is seeded by ``(config.seed, repeat_index)``; the network by
    ``trial_seed(config.seed, repeat_index)``.
    """
    train_idx, test_idx = split_once(dataset.n_samples, fraction, config.seed, repeat_index)
    data = normalize(dataset, train_idx)
    run_config = replace(config, seed=trial_seed(config.seed, repeat_index))
    start = time.perf_counter()
    log = train(data.subset(train_idx), shape, run_config)
    elapsed = time.perf_counter() - start
    net = log.final_network
    snapshot = {
        "shape": {"input_dim": shape.input_dim, "hidden_layers": shape.hidden_layers,
                  "hidden_width": shape.hidden_width, "output_dim": shape.output_dim,
                  "bias": shape.bias},
        "config": config.as_dict(),
        "fraction": fraction,
        "repeat": repeat_index,
    }
    return TrialResult(
        dataset_name=dataset.name,
        train_fraction=fraction,
        algorithm=config.algorithm,
        seed=config.seed,
        repeat=repeat_index,
        test_accuracy=evaluate_accuracy(net, data, test_idx),
        train_accuracy=evaluate_accuracy(net, data, train_idx),
        wall_time=elapsed,
        config_snapshot=snapshot,
    )


def rerun_from_snapshot(dataset: LabelledDataset, snapshot: dict) -> TrialResult:
    shape = NetworkShape(**snapshot["shape"])
    config = TrainConfig(**snapshot["config"])
    return run_trial(dataset, snapshot["fraction"], shape, config, snapshot["repeat"])


@dataclass(frozen=True)
class SummaryRow:
    dataset_name: str
    fraction: float
    algorithm: str
    mean_accuracy: float
    stddev: float
    repeats: int

    def csv_row(self) -> list:
        return [self.dataset_name, repr(self.fraction), SHORT_NAMES[self.algorithm],
                repr(self.mean_accuracy), repr(self.stddev), self.repeats]


@dataclass
class BenchmarkResult:
    trials: List[TrialResult]
    summary: List[SummaryRow]

    def cell(self, fraction: float, algorithm: str) -> SummaryRow:
        for row in self.summary:
            if row.fraction == fraction and row.algorithm == algorithm:
                return row
        raise KeyError((fraction, algorithm))

    def format_table(self) -> str:
        algorithms = list(dict.fromkeys(r.algorithm for r in self.summary))
        fractions = list(dict.fromkeys(r.fraction for r in self.summary))
        header = f"{'fraction':>10}" + "".join(f"{SHORT_NAMES[a]:>18}" for a in algorithms)
        lines = [header]
        for f in fractions:
            cells = []
            for a in algorithms:
                row = self.cell(f, a)
                cells.append(f"{row.mean_accuracy:.4f} +/- {row.stddev:.4f}".rjust(18))
            lines.append(f"{f:>10.4g}" + "".join(cells))
        return "\n".join(lines)


def summarize(trials: Sequence[TrialResult], fractions: Sequence[float],
              algorithms: Sequence[str]) -> List[SummaryRow]:
    rows = []
    for f in fractions:
        for a in algorithms:
            accs = [t.test_accuracy for t in trials if t.train_fraction == f and t.algorithm == a]
            if not accs:
                continue
            name = next(t.dataset_name for t in trials)
            rows.append(SummaryRow(name, f, a, float(np.mean(accs)), float(np.std(accs)), len(accs)))
    return rows


def _run_job(args):
    return run_trial(*args)


def run_benchmark(dataset: LabelledDataset, fractions: Sequence[float], shape: NetworkShape,
                  configs: Sequence[TrainConfig], repeats: int = 5, jobs: int = 1) -> BenchmarkResult:
    """Every (fraction, algorithm, repeat) trial plus per-cell mean/stddev.

    ``configs`` holds one config per algorithm. Trials are independent, so
    ``jobs > 1`` runs them in worker processes; results are re-ordered by
    key before summarising, so the output does not depend on ``jobs``.
    """
    if repeats < 1:
        raise ValueError("repeats must be positive")
    for f in fractions:
        split_once(dataset.n_samples, f, 0, 0)  # fail fast on unusable fractions
    tasks = [(dataset, f, shape, c, r) for f in fractions for c in configs for r in range(repeats)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(_run_job, tasks))
    else:
        trials = [_run_job(t) for t in tasks]
    order = {(f, c.algorithm): i for i, (f, c) in enumerate((f, c) for f in fractions for c in configs)}
    trials.sort(key=lambda t: (order[(t.train_fraction, t.algorithm)], t.repeat))
    algorithms = [c.algorithm for c in configs]
    return BenchmarkResult(trials, summarize(trials, fractions, algorithms))


@dataclass
class SweepResult:
    hidden_counts: List[int]
    mean_accuracy_per_count: Dict[str, List[float]]
    stddev_per_count: Dict[str, List[float]]
    benchmarks: List[BenchmarkResult]
    fraction: float
    dataset_name: str

    def series(self, algorithm: str) -> List[float]:
        return self.mean_accuracy_per_count[algorithm]


def hidden_sweep(dataset: LabelledDataset, fraction: float, hidden_counts: Sequence[int],
                 configs: Sequence[TrainConfig], repeats: int = 5, hidden_layers: int = 1,
                 bias: bool = True, jobs: int = 1) -> SweepResult:
    counts = list(hidden_counts)
    if not counts:
        raise ValueError("hidden_counts is empty")
    if counts != sorted(counts):
        raise ValueError("hidden_counts must be ascending")
    means: Dict[str, List[float]] = {c.algorithm: [] for c in configs}
    stds: Dict[str, List[float]] = {c.algorithm: [] for c in configs}
    benches = []
    for h in counts:
        shape = NetworkShape(dataset.n_features, hidden_layers, h, dataset.n_classes, bias=bias)
        bench = run_benchmark(dataset, [fraction], shape, configs, repeats, jobs)
        benches.append(bench)
        for c in configs:
            cell = bench.cell(fraction, c.algorithm)
            means[c.algorithm].append(cell.mean_accuracy)
            stds[c.algorithm].append(cell.stddev)
    return SweepResult(counts, means, stds, benches, fraction, dataset.name)


def write_results_csv(trials: Sequence[TrialResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for t in trials:
            w.writerow(t.csv_row())


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow(r.csv_row())


def write_sweep_csv(sweep: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for i, h in enumerate(sweep.hidden_counts):
            for a, series in sweep.mean_accuracy_per_count.items():
                reps = sweep.benchmarks[i].cell(sweep.fraction, a).repeats
                w.writerow([sweep.dataset_name, repr(sweep.fraction), h, SHORT_NAMES[a],
                            repr(series[i]), repr(sweep.stddev_per_count[a][i]), reps])
