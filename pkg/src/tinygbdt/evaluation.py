"""Metrics, memory accounting, reuse factor, penalty grids, Pareto filtering."""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .codec import size_report
from .data import Dataset, split_train_test
from .model import Ensemble, predict_matrix
from .trainer import TrainConfig, train


@dataclass(frozen=True)
class EvalReport:
    """Quality and memory summary of one trained model."""

    metric_name: str
    metric_value: float
    toad_bytes: int
    baseline32_bytes: int
    baseline16_bytes: int
    node_count: int
    leaf_count: int
    global_threshold_count: int
    global_leaf_value_count: int
    feature_count: int
    reuse_factor: float
    config: TrainConfig | None = None


@dataclass(frozen=True)
class GridRow:
    """One grid-search configuration and its evaluation."""

    iota: float
    xi: float
    max_iterations: int
    max_depth: int
    report: EvalReport


def score(e: Ensemble, ds: Dataset) -> float:
    """Accuracy for classification, R^2 for regression."""
    if e.task != ds.task:
        raise ValueError(f"model task {e.task} does not match dataset task {ds.task}")
    pred = predict_matrix(e, ds.features)
    if ds.task.kind == "regression":
        residual = float(np.sum((ds.labels - pred) ** 2))
        spread = float(np.sum((ds.labels - ds.labels.mean()) ** 2))
        if spread == 0.0:
            raise ValueError("R^2 is undefined for zero-variance labels")
        return 1.0 - residual / spread
    return float(np.mean(pred == ds.labels))


def metric_name_for(ds: Dataset) -> str:
    return "r2" if ds.task.kind == "regression" else "accuracy"


def baseline_memory(e: Ensemble, bits_per_node: int) -> int:
    """Bytes of the flat per-node layout baseline (128-bit float32 nodes or
    64-bit half-precision nodes), counting every node of every tree."""
    if bits_per_node not in (128, 64):
        raise ValueError(f"bits_per_node must be 128 or 64, got {bits_per_node}")
    return (e.internal_count + e.leaf_count) * bits_per_node // 8


def reuse_factor(e: Ensemble) -> float:
    """Value usages (nodes + leaves) divided by distinct stored values
    (global thresholds + global leaf values). 1 means no sharing."""
    usages = e.internal_count + e.leaf_count
    distinct = e.tables.threshold_count + len(e.tables.leaf_values)
    if usages == 0:
        raise ValueError("reuse factor is undefined for an empty ensemble")
    return usages / distinct


def evaluate(e: Ensemble, test: Dataset, config: TrainConfig | None) -> EvalReport:
    """Assemble the full report for a trained model on a test split."""
    return EvalReport(
        metric_name=metric_name_for(test),
        metric_value=score(e, test),
        toad_bytes=size_report(e).total_bytes,
        baseline32_bytes=baseline_memory(e, 128),
        baseline16_bytes=baseline_memory(e, 64),
        node_count=e.internal_count,
        leaf_count=e.leaf_count,
        global_threshold_count=e.tables.threshold_count,
        global_leaf_value_count=len(e.tables.leaf_values),
        feature_count=len(e.tables.features),
        reuse_factor=reuse_factor(e) if e.trees else float("nan"),
        config=config,
    )


def _run_cell(args) -> GridRow:
    train_ds, test_ds, config, iota, xi, iterations, depth = args
    try:
        model = train(train_ds, config)
        report = evaluate(model, test_ds, config)
    except Exception as exc:
        raise RuntimeError(
            f"grid cell failed (iota={iota}, xi={xi}, "
            f"max_iterations={iterations}, max_depth={depth}): {exc}"
        ) from exc
    return GridRow(iota, xi, iterations, depth, report)


def grid_search(
    ds: Dataset,
    iota_grid: list[float],
    xi_grid: list[float],
    iter_grid: list[int],
    depth_grid: list[int],
    config_base: TrainConfig,
    budget: int | None = None,
    test_fraction: float = 0.2,
    jobs: int = 1,
) -> list[GridRow]:
    """Train one model per (iota, xi, iterations, depth) tuple on the train
    split and evaluate on the test split.

    Rows come back in deterministic grid order (iota slowest, depth fastest)
    regardless of ``jobs``. When ``budget`` is set, each model is trained
    under that byte cap, so every emitted row satisfies it.
    """
    if not (iota_grid and xi_grid and iter_grid and depth_grid):
        raise ValueError("all grids must be non-empty")
    train_ds, test_ds = split_train_test(ds, test_fraction, config_base.seed)
    cells = []
    for iota, xi, iterations, depth in itertools.product(
        iota_grid, xi_grid, iter_grid, depth_grid
    ):
        config = replace(
            config_base,
            iota=iota,
            xi=xi,
            max_iterations=iterations,
            max_depth=depth,
            forestsize_budget=budget,
        )
        cells.append((train_ds, test_ds, config, iota, xi, iterations, depth))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(cell) for cell in cells]
    if budget is not None:
        rows = [r for r in rows if r.report.toad_bytes <= budget]
    return rows


def pareto_filter(rows: list[GridRow]) -> list[GridRow]:
    """Keep the nondominated rows (higher metric, lower encoded bytes),
    ordered by bytes ascending; duplicates keep one representative."""
    if not rows:
        raise ValueError("pareto_filter needs at least one row")
    ordered = sorted(
        rows, key=lambda r: (r.report.toad_bytes, -r.report.metric_value)
    )
    kept: list[GridRow] = []
    best = -np.inf
    for row in ordered:
        if row.report.metric_value > best:
            kept.append(row)
            best = row.report.metric_value
    return kept
