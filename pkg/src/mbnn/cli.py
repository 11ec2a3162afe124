"""Command-line entry point: ``mbnn train|eval|gradcheck|benchmark|sweep``.

Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
3 runtime or numeric error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from mbnn.data import (
    DataError,
    FeatureStats,
    LabelledDataset,
    binarize_isolet_dataset,
    load_csv,
    normalize,
    split_once,
)
from mbnn.experiments import (
    default_hidden_width,
    evaluate_accuracy,
    hidden_sweep,
    run_benchmark,
    write_results_csv,
    write_summary_csv,
    write_sweep_csv,
)
from mbnn.gradients import (
    NumericError,
    compare_gradients,
    exact_gradient,
    finite_difference_gradient,
    paper_gradient,
    random_instance,
)
from mbnn.network import DimensionError, ModelFormatError, NetworkShape, forward, load_model, save_model
from mbnn.trainer import TrainConfig, train

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

ALGORITHM_NAMES = {"margin": "margin", "ann": "squared_error", "squared_error": "squared_error"}
GRADCHECK_SHAPES = [(4, 3, 2), (6, 5, 3), (10, 8, 8, 4), (5, 4, 4, 4, 3)]
GRADCHECK_LAMBDAS = (0.0, 0.1, 1.0)


class UsageError(Exception):
    pass


def _float_list(text: str) -> List[float]:
    try:
        return [float(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Keys use flag names
    with dashes or underscores."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--data", help="CSV dataset path")
    p.add_argument("--header", action="store_true", default=None, help="first CSV row is a header")
    p.add_argument("--label-col", dest="label_col", default="last", help="'last' or a 0-based column index")
    p.add_argument("--isolet-binary", dest="isolet_binary", action="store_true", default=None,
                   help="map ISOLET letter labels 1..26 to vowel/consonant")
    p.add_argument("--shape", type=_int_list, help="hidden widths, e.g. 8 or 16,16 (uniform)")
    p.add_argument("--no-bias", dest="no_bias", action="store_true", default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--fraction", type=_float_list)
    p.add_argument("--algorithm", default=None, help="margin, ann, or a comma list")
    p.add_argument("--grad-mode", dest="grad_mode", default="exact", choices=["exact", "paper"])
    p.add_argument("--out", help="output file (train) or directory (benchmark, sweep)")
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one network and save it")
    _add_common(p)
    p.add_argument("--log", help="TrainLog CSV path (default: <out>.log.csv)")

    p = sub.add_parser("eval", help="score a saved model on a dataset")
    _add_common(p)
    p.add_argument("--model", help="model file written by 'train'")
    p.add_argument("--subset", choices=["all", "train", "test"], default="all",
                   help="rows to score; train/test use --fraction and --seed to rebuild the split")

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    _add_common(p)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--input-dim", dest="input_dim", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--corrupt-exact", dest="corrupt_exact", action="store_true", help=argparse.SUPPRESS)
    # Without --lambda the instances cycle through 0, 0.1 and 1.
    p.set_defaults(lam=None)

    p = sub.add_parser("benchmark", help="repeated-split accuracy table")
    _add_common(p)
    p.add_argument("--timing", action="store_true", default=None, help="record wall time per trial")

    p = sub.add_parser("sweep", help="accuracy against hidden width")
    _add_common(p)
    p.add_argument("--hidden", type=_int_list, default=[8, 16, 32, 64])
    p.add_argument("--timing", action="store_true", default=None, help="record wall time per trial")
    return parser


def parse_args(argv: Optional[Sequence[str]]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            file_values = read_config_file(args.config)
        except OSError as exc:
            raise UsageError(f"--config: {exc}") from None
        sub = parser._subparsers._group_actions[0].choices[args.command]  # type: ignore[union-attr]
        dests = {opt.lstrip("-").replace("-", "_"): a.dest
                 for a in sub._actions for opt in a.option_strings if opt.startswith("--")}
        unknown = sorted(set(file_values) - set(dests) - {"config"})
        if unknown:
            raise UsageError(f"--config: unknown keys {unknown}")
        sub.set_defaults(**{dests[k]: v for k, v in file_values.items() if k != "config"})
        args = parser.parse_args(argv)
    for flag in ("header", "isolet_binary", "no_bias", "timing"):
        if hasattr(args, flag):
            setattr(args, flag, _bool(getattr(args, flag) or False))
    return args


def _algorithms(args, default: Sequence[str]) -> List[str]:
    text = args.algorithm
    if text is None:
        return list(default)
    names = [tok.strip() for tok in str(text).split(",") if tok.strip()]
    try:
        return list(dict.fromkeys(ALGORITHM_NAMES[n] for n in names))
    except KeyError as exc:
        raise UsageError(f"--algorithm: unknown algorithm {exc.args[0]!r} (use margin or ann)") from None


def _train_config(args, algorithm: str) -> TrainConfig:
    try:
        return TrainConfig(lam=args.lam, alpha=args.alpha, epochs=args.epochs, seed=args.seed,
                           gradient_mode=args.grad_mode, algorithm=algorithm)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(args) -> LabelledDataset:
    if not args.data:
        raise UsageError("--data is required")
    if not Path(args.data).is_file():
        raise UsageError(f"--data: no such file {args.data}")
    try:
        label_col = args.label_col if args.label_col == "last" else int(args.label_col)
    except ValueError:
        raise UsageError(f"--label-col: expected 'last' or an integer, got {args.label_col!r}") from None
    try:
        data = load_csv(args.data, has_header=args.header, label_column=label_col)
        if args.isolet_binary:
            data = binarize_isolet_dataset(data)
    except DataError as exc:
        raise UsageError(f"--data: {exc}") from None
    return data


def _shape(args, data: LabelledDataset) -> NetworkShape:
    widths = args.shape or [default_hidden_width(data.name)]
    if len(set(widths)) != 1:
        raise UsageError("--shape: hidden layers must all have the same width")
    try:
        return NetworkShape(data.n_features, len(widths), widths[0], data.n_classes, bias=not args.no_bias)
    except DimensionError as exc:
        raise UsageError(f"--shape: {exc}") from None


def _single_fraction(args) -> Optional[float]:
    if not args.fraction:
        return None
    if len(args.fraction) != 1:
        raise UsageError("--fraction: give a single value for this command")
    return args.fraction[0]


def _split_rows(args, data: LabelledDataset):
    fraction = _single_fraction(args)
    if fraction is None:
        rows = np.arange(data.n_samples)
        return rows, rows
    try:
        return split_once(data.n_samples, fraction, args.seed, 0)
    except DataError as exc:
        raise UsageError(f"--fraction: {exc}") from None


def _write_stats(stats: FeatureStats, path: Path) -> None:
    lines = [" ".join(format(v, ".17g") for v in vec) for vec in (stats.mean, stats.std)]
    path.write_text("\n".join(lines) + "\n")


def _read_stats(path: Path) -> FeatureStats:
    lines = path.read_text().splitlines()
    if len(lines) < 2:
        raise UsageError(f"{path}: expected two lines (means, stddevs)")
    try:
        mean, std = (np.array([float(tok) for tok in line.split()]) for line in lines[:2])
    except ValueError:
        raise UsageError(f"{path}: non-numeric statistics") from None
    return FeatureStats(mean, std)


def cmd_train(args) -> int:
    algorithms = _algorithms(args, ["margin"])
    if len(algorithms) != 1:
        raise UsageError("--algorithm: train takes one algorithm")
    config = _train_config(args, algorithms[0])
    data = _load(args)
    if not args.out:
        raise UsageError("--out is required")
    shape = _shape(args, data)
    train_rows, _ = _split_rows(args, data)
    data = normalize(data, train_rows)
    log = train(data.subset(train_rows), shape, config)

    out = Path(args.out)
    save_model(log.final_network, out)
    _write_stats(data.feature_stats, Path(f"{out}.norm"))
    log_path = Path(args.log) if getattr(args, "log", None) else Path(f"{out}.log.csv")
    log.to_csv(log_path)
    print(f"seed={config.seed} shape={shape.describe()} algorithm={config.algorithm} "
          f"rows={len(train_rows)}")
    print(f"model: {out}  log: {log_path}")
    print(f"final train accuracy: {log.per_epoch_train_accuracy[-1]!r}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if not args.model:
        raise UsageError("--model is required")
    try:
        net = load_model(args.model)
    except ModelFormatError as exc:
        raise UsageError(f"--model {args.model}: {exc}") from None
    except OSError as exc:
        raise UsageError(f"--model: {exc}") from None
    data = _load(args)
    if data.n_features != net.shape.input_dim:
        raise UsageError(f"dimension mismatch: data has {data.n_features} features, "
                         f"model expects {net.shape.input_dim}")
    stats_path = Path(f"{args.model}.norm")
    if stats_path.is_file():
        stats = _read_stats(stats_path)
        if stats.mean.shape != (data.n_features,):
            raise UsageError(f"{stats_path}: statistics for {stats.mean.size} features, data has {data.n_features}")
        data = LabelledDataset(stats.apply(data.features), data.labels, data.class_names, stats, data.name)
    train_rows, test_rows = _split_rows(args, data)
    rows = {"all": np.arange(data.n_samples), "train": train_rows, "test": test_rows}[args.subset]
    if data.n_classes > net.shape.output_dim:
        raise UsageError(f"dimension mismatch: data has {data.n_classes} classes, "
                         f"model has {net.shape.output_dim} outputs")
    acc = evaluate_accuracy(net, data, rows)
    print(f"seed={args.seed} subset={args.subset} rows={len(rows)}")
    print(f"accuracy: {acc!r}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.instances < 1:
        raise UsageError("--instances must be positive")
    if args.step <= 0:
        raise UsageError("--step must be positive")
    rng = np.random.default_rng(args.seed)
    worst = {"exact": None, "paper": None}
    for k in range(args.instances):
        if args.shape:
            if len(set(args.shape)) != 1:
                raise UsageError("--shape: hidden layers must all have the same width")
            widths = (args.input_dim or 4, *args.shape, args.classes or 2)
        else:
            widths = GRADCHECK_SHAPES[k % len(GRADCHECK_SHAPES)]
        bias = False if args.no_bias else (k // len(GRADCHECK_SHAPES)) % 2 == 0
        lam = args.lam if args.lam is not None else GRADCHECK_LAMBDAS[k % 3]
        net, x, t = random_instance(rng, widths, bias)
        numeric = finite_difference_gradient(net, x, t, lam, args.step)
        exact = exact_gradient(net, x, t, lam)
        if args.corrupt_exact:
            exact = exact.scaled(1.01)
        paper = paper_gradient(net, forward(net, x), t, lam)
        for mode, analytic in (("exact", exact), ("paper", paper)):
            rep = compare_gradients(analytic, numeric, mode)
            if worst[mode] is None or rep.max_rel_error > worst[mode][0].max_rel_error:
                worst[mode] = (rep, widths, bias, lam)

    print(f"seed={args.seed} instances={args.instances} step={args.step:g}")
    for mode in ("exact", "paper"):
        rep, widths, bias, lam = worst[mode]
        note = "" if mode == "exact" else "  (informational)"
        print(f"{rep.summary_line()}{note}")
        print(f"  worst instance: shape={'-'.join(map(str, widths))} bias={bias} lambda={lam:g}")
        print("  " + rep.table().replace("\n", "\n  "))
    ok = worst["exact"][0].max_rel_error < args.tolerance
    print(f"exact mode {'PASS' if ok else 'FAIL'} (tolerance {args.tolerance:g})")
    return EXIT_OK if ok else EXIT_CHECK


def _out_dir(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _blank_timing(trials):
    from dataclasses import replace as dc_replace
    return [dc_replace(t, wall_time=float("nan")) for t in trials]


def cmd_benchmark(args) -> int:
    data = _load(args)
    if not args.fraction:
        raise UsageError("--fraction is required")
    configs = [_train_config(args, a) for a in _algorithms(args, ["margin", "squared_error"])]
    shape = _shape(args, data)
    out = _out_dir(args)
    try:
        result = run_benchmark(data, args.fraction, shape, configs, args.repeats, args.jobs)
    except DataError as exc:
        raise UsageError(f"--fraction: {exc}") from None
    trials = result.trials if args.timing else _blank_timing(result.trials)
    write_results_csv(trials, out / "results.csv")
    write_summary_csv(result.summary, out / "summary.csv")
    print(f"dataset={data.name} shape={shape.describe()} seed={args.seed} repeats={args.repeats}")
    print(result.format_table())
    return EXIT_OK


def cmd_sweep(args) -> int:
    data = _load(args)
    fraction = _single_fraction(args)
    if fraction is None:
        raise UsageError("--fraction is required")
    configs = [_train_config(args, a) for a in _algorithms(args, ["margin", "squared_error"])]
    layers = len(args.shape) if args.shape else 1
    out = _out_dir(args)
    try:
        sweep = hidden_sweep(data, fraction, args.hidden, configs, args.repeats,
                             hidden_layers=layers, bias=not args.no_bias, jobs=args.jobs)
    except DataError as exc:
        raise UsageError(f"--fraction: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"--hidden: {exc}") from None
    trials = [t for b in sweep.benchmarks for t in b.trials]
    write_results_csv(trials if args.timing else _blank_timing(trials), out / "sweep_results.csv")
    write_sweep_csv(sweep, out / "sweep.csv")
    print(f"dataset={data.name} fraction={fraction:g} seed={args.seed} repeats={args.repeats}")
    print(f"{'hidden':>8}" + "".join(f"{a:>16}" for a in sweep.mean_accuracy_per_count))
    for i, h in enumerate(sweep.hidden_counts):
        print(f"{h:>8}" + "".join(f"{s[i]:>16.4f}" for s in sweep.mean_accuracy_per_count.values()))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
            "benchmark": cmd_benchmark, "sweep": cmd_sweep}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse: --help or bad flags
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"mbnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FloatingPointError) as exc:
        print(f"mbnn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (DataError, DimensionError, ValueError, OSError) as exc:
        print(f"mbnn: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
