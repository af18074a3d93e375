"""Command-line interface.

Subcommands: train, predict, encode, inspect, eval, grid. Every run echoes
the fully resolved configuration on stdout so results are reproducible from
the log alone; diagnostics go to stderr. Exit status is 0 on success, 2 for
a missing input file, 1 for any other error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .codec import CodecError, read_model, size_report, write_model
from .data import (
    BINARY,
    REGRESSION,
    DatasetError,
    TaskKind,
    load_csv,
    load_matrix,
    multiclass,
)
from .evaluation import (
    GridRow,
    evaluate,
    grid_search,
    pareto_filter,
    reuse_factor,
)
from .model import Ensemble, FeatureEntry, GlobalTables, Internal, Leaf, Tree
from .model import predict_raw_matrix, _logistic, _softmax
from .trainer import TrainConfig, train

GRID_CSV_COLUMNS = (
    "iota",
    "xi",
    "max_iterations",
    "max_depth",
    "metric_name",
    "metric_value",
    "toad_bytes",
    "baseline32_bytes",
    "baseline16_bytes",
    "node_count",
    "leaf_count",
    "global_threshold_count",
    "global_leaf_value_count",
    "feature_count",
    "reuse_factor",
)


# -- argument helpers ---------------------------------------------------------


def _label_arg(value: str) -> str | int:
    try:
        return int(value)
    except ValueError:
        return value


def _penalty_value(token: str) -> float:
    """Parse a penalty grid token; ``2**-10`` style powers are accepted."""
    token = token.strip()
    if "**" in token:
        base, _, exp = token.partition("**")
        return float(base) ** float(exp)
    return float(token)


def _float_list(text: str) -> list[float]:
    return [_penalty_value(t) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _task_from_args(args: argparse.Namespace) -> TaskKind:
    if args.task == "regression":
        return REGRESSION
    if args.task == "binary":
        return BINARY
    if args.classes is not None:
        return multiclass(args.classes)
    return TaskKind("multiclass", 0)  # class count inferred at load time


def _config_from_args(args: argparse.Namespace) -> TrainConfig:
    return TrainConfig(
        iota=args.tinygbdt_penalty_feature,
        xi=args.tinygbdt_penalty_threshold,
        gamma=args.gamma,
        lam=args.lam,
        learning_rate=args.learning_rate,
        max_iterations=args.max_iterations,
        max_depth=args.max_depth,
        forestsize_budget=args.tinygbdt_forestsize,
        max_bins=args.max_bins,
        min_gain=args.min_gain,
        seed=args.seed,
    )


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="CSV file (first row may be a header)")
    p.add_argument(
        "--label",
        type=_label_arg,
        default="label",
        help="label column: header name or zero-based index (default: label)",
    )
    p.add_argument(
        "--task",
        choices=("regression", "binary", "multiclass"),
        required=True,
    )
    p.add_argument(
        "--classes",
        type=int,
        default=None,
        help="class count for multiclass (default: inferred from labels)",
    )


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tinygbdt-penalty-feature", type=_penalty_value, default=0.0,
                   help="penalty for using a new feature (iota)")
    p.add_argument("--tinygbdt-penalty-threshold", type=_penalty_value, default=0.0,
                   help="penalty for using a new threshold (xi)")
    p.add_argument("--tinygbdt-forestsize", type=int, default=None, metavar="BYTES",
                   help="byte budget for the encoded model")
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="L2 penalty on leaf values")
    p.add_argument("--gamma", type=float, default=0.0,
                   help="penalty per leaf")
    p.add_argument("--max-bins", type=int, default=255)
    p.add_argument("--min-gain", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=42)


# -- model <-> JSON description ------------------------------------------------


def ensemble_to_json(e: Ensemble) -> dict:
    """Human-editable description of a model (the inspect/encode bridge)."""
    trees = []
    for tree in e.trees:
        nodes = {}
        for i in sorted(tree.nodes):
            node = tree.nodes[i]
            if isinstance(node, Internal):
                nodes[str(i)] = {
                    "feature_ref": node.feature_ref,
                    "threshold_ref": node.threshold_ref,
                }
            else:
                nodes[str(i)] = {"leaf_ref": node.leaf_ref}
        trees.append(nodes)
    return {
        "format": "tinygbdt-model",
        "task": e.task.kind,
        "class_count": e.class_count,
        "max_depth": e.max_depth,
        "feature_count": e.feature_count,
        "features": [
            {
                "input_index": f.input_feature_index,
                "width_exponent": f.width_exponent,
                "numeric_type": "float" if f.is_float else "integer",
                "thresholds": f.thresholds,
            }
            for f in e.tables.features
        ],
        "leaf_values": e.tables.leaf_values,
        "trees": trees,
    }


def ensemble_from_json(doc: dict) -> Ensemble:
    if doc.get("format") != "tinygbdt-model":
        raise ValueError("not a tinygbdt model description")
    kind = doc["task"]
    if kind == "regression":
        task = REGRESSION
    elif kind == "binary":
        task = BINARY
    else:
        task = multiclass(int(doc["class_count"]))
    features = [
        FeatureEntry(
            int(f["input_index"]),
            [float(t) for t in f["thresholds"]],
            int(f["width_exponent"]),
            f["numeric_type"] == "float",
        )
        for f in doc["features"]
    ]
    trees = []
    for tree_doc in doc["trees"]:
        nodes: dict[int, Internal | Leaf] = {}
        for key, nd in tree_doc.items():
            if "leaf_ref" in nd:
                nodes[int(key)] = Leaf(int(nd["leaf_ref"]))
            else:
                nodes[int(key)] = Internal(
                    int(nd["feature_ref"]), int(nd["threshold_ref"])
                )
        trees.append(Tree(nodes))
    return Ensemble(
        trees=trees,
        tables=GlobalTables(features, [float(v) for v in doc["leaf_values"]]),
        task=task,
        max_depth=int(doc["max_depth"]),
        feature_count=int(doc["feature_count"]),
        class_count=int(doc["class_count"]),
        base_score=0.0,
        learning_rate=1.0,
    )


# -- output helpers -----------------------------------------------------------


def _print_size_report(e: Ensemble) -> None:
    rep = size_report(e)
    print("section bits: "
          f"metadata={rep.metadata_bits} map={rep.map_bits} "
          f"thresholds={rep.threshold_bits} leaf_values={rep.leaf_value_bits} "
          f"trees={rep.tree_bits} padding={rep.padding_bits}")
    print(f"encoded size: {rep.total_bits} bits = {rep.total_bytes} bytes")


def _print_model_summary(e: Ensemble) -> None:
    print(
        f"model: task={e.task.kind} trees={len(e.trees)} "
        f"internal_nodes={e.internal_count} leaves={e.leaf_count} "
        f"used_features={len(e.tables.features)} "
        f"thresholds={e.tables.threshold_count} "
        f"leaf_values={len(e.tables.leaf_values)}"
    )
    if e.trees:
        print(f"reuse factor: {reuse_factor(e):.4f}")


def _row_record(row: GridRow) -> dict:
    rep = row.report
    return {
        "iota": row.iota,
        "xi": row.xi,
        "max_iterations": row.max_iterations,
        "max_depth": row.max_depth,
        "metric_name": rep.metric_name,
        "metric_value": rep.metric_value,
        "toad_bytes": rep.toad_bytes,
        "baseline32_bytes": rep.baseline32_bytes,
        "baseline16_bytes": rep.baseline16_bytes,
        "node_count": rep.node_count,
        "leaf_count": rep.leaf_count,
        "global_threshold_count": rep.global_threshold_count,
        "global_leaf_value_count": rep.global_leaf_value_count,
        "feature_count": rep.feature_count,
        "reuse_factor": rep.reuse_factor,
    }


def _format_cell(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def write_grid_csv(rows: list[GridRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(GRID_CSV_COLUMNS)
        for row in rows:
            record = _row_record(row)
            writer.writerow([_format_cell(record[c]) for c in GRID_CSV_COLUMNS])


def write_grid_json(
    rows: list[GridRow], path: str | Path, dataset: str, config_base: TrainConfig
) -> None:
    doc = {
        "schema_version": 1,
        "dataset": dataset,
        "config_base": asdict(config_base),
        "rows": [
            {**_row_record(r), "config": asdict(r.report.config)}
            for r in rows
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# -- subcommands ----------------------------------------------------------------


def cmd_train(args: argparse.Namespace) -> int:
    task = _task_from_args(args)
    ds = load_csv(args.data, args.label, task)
    config = _config_from_args(args)
    model = train(ds, config)
    write_model(model, args.out)
    _print_model_summary(model)
    _print_size_report(model)
    print(f"wrote {args.out}")
    return 0


def _load_features(
    path: str, label: str | int | None, expected_d: int
) -> np.ndarray:
    # predict inputs may or may not carry a label column
    X = load_matrix(path, drop_column=label)
    if X.shape[1] != expected_d:
        raise DatasetError(
            f"model expects {expected_d} features, file provides {X.shape[1]}"
        )
    return X


def cmd_predict(args: argparse.Namespace) -> int:
    model = read_model(args.model)
    X = _load_features(args.data, args.label, model.feature_count)
    raw = predict_raw_matrix(model, X)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if model.task.kind == "regression":
            writer.writerow(["prediction"])
            for v in raw[:, 0]:
                writer.writerow([repr(float(v))])
        elif model.task.kind == "binary":
            writer.writerow(["prediction", "p0", "p1"])
            p1 = _logistic(raw[:, 0])
            for v in p1:
                cls = 1 if v >= 0.5 else 0
                writer.writerow([cls, repr(float(1.0 - v)), repr(float(v))])
        else:
            c = model.class_count
            writer.writerow(["prediction"] + [f"p{k}" for k in range(c)])
            probs = _softmax(raw)
            for p in probs:
                cls = int(np.argmax(p))
                writer.writerow([cls] + [repr(float(v)) for v in p])
    print(f"wrote {X.shape[0]} predictions to {args.out}")
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    with open(args.description, encoding="utf-8") as fh:
        doc = json.load(fh)
    model = ensemble_from_json(doc)
    write_model(model, args.out)
    _print_size_report(model)
    print(f"wrote {args.out}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    model = read_model(args.model)
    rep = size_report(model)
    print(
        f"metadata: task={model.task.kind} class_count={model.class_count} "
        f"trees={len(model.trees)} max_depth={model.max_depth} "
        f"input_features={model.feature_count} "
        f"used_features={len(model.tables.features)} "
        f"max_thresholds={max((len(f.thresholds) for f in model.tables.features), default=0)} "
        f"leaf_values={len(model.tables.leaf_values)}"
    )
    print("feature map:")
    for f in model.tables.features:
        kind = "float" if f.is_float else "integer"
        print(
            f"  feature {f.input_feature_index}: {len(f.thresholds)} x "
            f"{1 << f.width_exponent}-bit {kind} thresholds"
        )
    _print_size_report(model)
    if model.trees:
        print(f"reuse factor: {reuse_factor(model):.4f}")
        counts = " ".join(
            f"t{k}:{t.internal_count}+{t.leaf_count}"
            for k, t in enumerate(model.trees)
        )
        print(f"per-tree nodes (internal+leaves): {counts}")
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(ensemble_to_json(model), fh, indent=2)
            fh.write("\n")
        print(f"wrote {args.json_out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = read_model(args.model)
    task = _task_from_args(args)
    ds = load_csv(args.data, args.label, task)
    report = evaluate(model, ds, None)
    print(f"{report.metric_name}: {report.metric_value:.6f}")
    print(
        f"memory: toad={report.toad_bytes} B "
        f"baseline128bit={report.baseline32_bytes} B "
        f"baseline64bit={report.baseline16_bytes} B"
    )
    print(
        f"counts: internal={report.node_count} leaves={report.leaf_count} "
        f"thresholds={report.global_threshold_count} "
        f"leaf_values={report.global_leaf_value_count} "
        f"used_features={report.feature_count} "
        f"reuse_factor={report.reuse_factor:.4f}"
    )
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    task = _task_from_args(args)
    ds = load_csv(args.data, args.label, task)
    config_base = _config_from_args(args)
    rows = grid_search(
        ds,
        args.iota_grid,
        args.xi_grid,
        args.iterations_grid,
        args.depth_grid,
        config_base,
        budget=args.budget,
        test_fraction=args.test_fraction,
        jobs=args.jobs,
    )
    if args.pareto:
        rows = pareto_filter(rows)
    write_grid_csv(rows, args.out_csv)
    print(f"wrote {len(rows)} rows to {args.out_csv}")
    if args.out_json:
        write_grid_json(rows, args.out_json, str(args.data), config_base)
        print(f"wrote {args.out_json}")
    if args.figures:
        from .plots import render_figures

        written = render_figures(rows, args.figures, Path(args.data).stem)
        for p in written:
            print(f"wrote {p}")
    best = max(rows, key=lambda r: r.report.metric_value, default=None)
    if best is not None:
        print(
            f"best: {best.report.metric_name}={best.report.metric_value:.6f} "
            f"at iota={best.iota:g} xi={best.xi:g} "
            f"iterations={best.max_iterations} depth={best.max_depth} "
            f"({best.report.toad_bytes} B)"
        )
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tinygbdt",
        description="Train, pack, and evaluate penalty-regularized boosted trees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a .toad file")
    _add_data_args(p)
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output model path (.toad)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write per-row predictions as CSV")
    p.add_argument("model", help=".toad model file")
    p.add_argument("data", help="CSV of feature rows")
    p.add_argument("--label", type=_label_arg, default=None,
                   help="label column to ignore, when the file carries one")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("encode", help="pack a JSON model description into .toad")
    p.add_argument("description", help="JSON model description")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("inspect", help="print the layout of a .toad file")
    p.add_argument("model")
    p.add_argument("--json-out", default=None,
                   help="also dump the model as a JSON description")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("eval", help="score a model against a labelled CSV")
    p.add_argument("model")
    _add_data_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="penalty grid search with CSV/JSON reports")
    _add_data_args(p)
    _add_config_args(p)
    p.add_argument("--iota-grid", type=_float_list, default=[0.0],
                   help="comma list; 2**k tokens allowed (default: 0)")
    p.add_argument("--xi-grid", type=_float_list, default=[0.0])
    p.add_argument("--iterations-grid", type=_int_list, default=None,
                   help="default: the single --max-iterations value")
    p.add_argument("--depth-grid", type=_int_list, default=None,
                   help="default: the single --max-depth value")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--budget", type=int, default=None, metavar="BYTES",
                   help="train every cell under this byte budget")
    p.add_argument("--pareto", action="store_true",
                   help="emit only the nondominated rows")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json", default=None)
    p.add_argument("--figures", default=None, metavar="DIR",
                   help="render figures alongside the reports")
    p.set_defaults(func=cmd_grid)
    return parser


def _echo_config(args: argparse.Namespace) -> None:
    skip = {"func", "command"}
    parts = [f"command={args.command}"]
    for key in sorted(vars(args)):
        if key in skip:
            continue
        parts.append(f"{key}={getattr(args, key)!r}")
    print("config:", " ".join(parts))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "grid":
        if args.iterations_grid is None:
            args.iterations_grid = [args.max_iterations]
        if args.depth_grid is None:
            args.depth_grid = [args.max_depth]
    _echo_config(args)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, CodecError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
