"""Command-line interface.

Subcommands: select | fit | learn | score | synth | experiment | report.
Exit codes: 0 on success, 2 on usage or data errors, 3 on numeric failures.
SPBN_JOBS sets the default worker count for `experiment`.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .bn import Spbn
from .data import Dataset
from .errors import (
    DataError,
    DimensionMismatch,
    InsufficientData,
    InsufficientSamples,
    NonFinite,
    NotPositiveDefinite,
    OptimizerFailed,
    RankDeficient,
    SingularCovariance,
    SpbnError,
    TooManyGroups,
)
from .experiment import ExperimentConfig, format_float, pairwise_report, run_experiment
from .graph import load_structure
from .selectors import SelectorKind, select_bandwidth
from .structure import HcConfig, best_of_two_starts
from .synthetic import builtin_net, load_net, truth_sample

USAGE_ERRORS = (DataError, DimensionMismatch, InsufficientData, TooManyGroups)
NUMERIC_ERRORS = (
    NotPositiveDefinite,
    SingularCovariance,
    RankDeficient,
    OptimizerFailed,
    InsufficientSamples,
    NonFinite,
)


def read_csv_dataset(path, columns=None) -> Dataset:
    """Parse a comma-separated file with a header row into a Dataset,
    citing the offending row and column on failure."""
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {line_no} has {len(row)} fields, expected {len(header)}"
                )
            values = []
            for name, cell in zip(header, row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {line_no}, column {name!r}: "
                        f"cannot parse {cell.strip()!r} as a number"
                    ) from None
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = Dataset(header, np.asarray(rows))
    if columns:
        data = data.project(columns)
    return data


def write_csv_dataset(path_or_stream, data: Dataset):
    close = False
    if isinstance(path_or_stream, (str, os.PathLike)):
        stream = open(path_or_stream, "w", encoding="utf-8", newline="")
        close = True
    else:
        stream = path_or_stream
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(data.columns)
        for row in data.values:
            writer.writerow([format_float(v) for v in row])
    finally:
        if close:
            stream.close()


def _emit(payload):
    print(json.dumps(payload, indent=2, sort_keys=True))


def _matrix(values) -> list:
    return [[float(v) for v in row] for row in np.asarray(values)]


def _load_net_arg(args):
    if args.net:
        return builtin_net(args.net)
    return load_net(args.spec)


def cmd_select(args) -> int:
    columns = args.columns.split(",") if args.columns else None
    data = read_csv_dataset(args.csv, columns)
    result = select_bandwidth(
        data, SelectorKind(args.selector), restarts=args.restarts, seed=args.seed
    )
    payload = {
        "selector": args.selector,
        "columns": list(data.columns),
        "n": data.n,
        "bandwidth": _matrix(result.bandwidth.values),
        "objective": None if np.isnan(result.objective) else result.objective,
    }
    if result.pilot is not None:
        payload["pilot"] = _matrix(result.pilot.values)
    if result.diagnostics is not None:
        payload["iterations"] = result.diagnostics.iterations
        payload["converged"] = result.diagnostics.converged
    _emit(payload)
    return 0


def cmd_fit(args) -> int:
    data = read_csv_dataset(args.csv)
    dag, types = load_structure(args.structure)
    if types is None:
        raise DataError(f"{args.structure}: structure file lacks node types")
    model = Spbn.fit(
        data, dag, types, selector=SelectorKind(args.selector), restarts=args.restarts
    )
    model.save(args.out)
    _emit(
        {
            "model": args.out,
            "nodes": list(dag.nodes),
            "arcs": [list(a) for a in dag.sorted_arcs()],
            "train_loglik": model.total_logpdf(data),
        }
    )
    return 0


def cmd_learn(args) -> int:
    data = read_csv_dataset(args.csv)
    config = HcConfig(
        folds=args.folds,
        epsilon=args.epsilon,
        seed=args.seed,
        selector=SelectorKind(args.selector),
        starts=args.starts,
        restarts=args.restarts,
        per_instance_epsilon=not args.absolute_epsilon,
    )
    result = best_of_two_starts(data, config)
    result.model.save(args.out)
    _emit(
        {
            "model": args.out,
            "cv_score": result.score,
            "iterations": result.iterations,
            "start": result.start,
            "arcs": [list(a) for a in result.model.dag.sorted_arcs()],
            "types": {n: t.value for n, t in result.model.types.items()},
        }
    )
    return 0


def cmd_score(args) -> int:
    model = Spbn.load(args.model)
    data = read_csv_dataset(args.csv)
    _emit({"n": data.n, "total_logpdf": model.total_logpdf(data)})
    return 0


def cmd_synth(args) -> int:
    net = _load_net_arg(args)
    data = truth_sample(net, args.n, args.seed)
    if args.out:
        write_csv_dataset(args.out, data)
        _emit({"net": net.name, "n": args.n, "seed": args.seed, "out": args.out})
    else:
        write_csv_dataset(sys.stdout, data)
    return 0


def cmd_experiment(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.output_dir is not None:
        config.output_dir = args.output_dir
    rows = run_experiment(config)
    _emit(
        {
            "rows": len(rows),
            "output_dir": config.output_dir,
            "results": os.path.join(config.output_dir, "results.csv"),
        }
    )
    return 0


def cmd_report(args) -> int:
    with open(args.results, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for line_no, record in enumerate(reader, start=2):
            try:
                rows.append(
                    {
                        "selector": record["selector"],
                        "n": int(record["n"]),
                        "replicate": int(record["replicate"]),
                        args.metric: float(record[args.metric]),
                    }
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{args.results}: row {line_no}: {exc}") from exc
    if not rows:
        raise DataError(f"{args.results}: no rows")
    selectors = sorted({row["selector"] for row in rows})
    report = pairwise_report(
        rows, selectors, args.n_perm, args.alpha, args.seed, metric=args.metric
    )
    _emit(report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spbn",
        description="Semiparametric Bayesian networks with data-driven KDE bandwidths",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    selector_names = [k.value for k in SelectorKind]

    p = sub.add_parser("select", help="select a KDE bandwidth for CSV columns")
    p.add_argument("csv")
    p.add_argument("--selector", choices=selector_names, default="nr")
    p.add_argument("--columns", help="comma-separated column subset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=1)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("fit", help="fit CPDs for a fixed structure")
    p.add_argument("csv")
    p.add_argument("--structure", required=True, help="structure JSON with node types")
    p.add_argument("--selector", choices=selector_names, default="nr")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("learn", help="hill-climb a structure from two starts")
    p.add_argument("csv")
    p.add_argument("--selector", choices=selector_names, default="nr")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument(
        "--absolute-epsilon",
        action="store_true",
        help="compare epsilon against the summed score improvement instead of per row",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--starts", choices=["both", "lg_only", "ckde_only"], default="both")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("score", help="total log-likelihood of a model on a CSV")
    p.add_argument("model")
    p.add_argument("csv")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("synth", help="sample a ground-truth network")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--net", help="built-in network name")
    group.add_argument("--spec", help="density spec JSON file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("experiment", help="run a replication experiment config")
    p.add_argument("config")
    p.add_argument(
        "--jobs",
        type=int,
        default=int(os.environ.get("SPBN_JOBS", "0")) or None,
        help="worker processes (default SPBN_JOBS or the config value)",
    )
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="pairwise median tests over a results CSV")
    p.add_argument("results")
    p.add_argument("--metric", default="loglik_abs_error")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n-perm", type=int, default=4999)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except SpbnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
