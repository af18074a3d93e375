"""Render grid-search reports as figures next to the CSV/JSON output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import GridRow, pareto_filter

_DPI = 150


def _penalty_positions(values: list[float]) -> np.ndarray:
    """Map penalty values to plot positions: log2 for positives, with zero
    pinned two slots left of the smallest positive value."""
    positive = [v for v in values if v > 0]
    floor = np.log2(min(positive)) - 2 if positive else -1.0
    return np.array([np.log2(v) if v > 0 else floor for v in values])


def _metric_label(rows: list[GridRow]) -> str:
    name = rows[0].report.metric_name
    return {"r2": "$R^2$ score", "accuracy": "accuracy"}.get(name, name)


def _group_rows(rows, key):
    groups: dict = {}
    for row in rows:
        groups.setdefault(key(row), []).append(row)
    return groups


def plot_tradeoff(rows: list[GridRow], path: Path, title: str) -> None:
    """Metric vs encoded size, with the nondominated front highlighted."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    kb = [r.report.toad_bytes / 1024 for r in rows]
    metric = [r.report.metric_value for r in rows]
    ax.scatter(kb, metric, s=14, alpha=0.45, label="all configurations")
    front = pareto_filter(rows)
    ax.plot(
        [r.report.toad_bytes / 1024 for r in front],
        [r.report.metric_value for r in front],
        "o-",
        color="tab:orange",
        label="nondominated",
    )
    ax.set_xscale("log")
    ax.set_xlabel("encoded model size (KB)")
    ax.set_ylabel(_metric_label(rows))
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_threshold_penalty(rows: list[GridRow], path: Path, title: str) -> bool:
    """Metric, global value count, and reuse factor against xi (iota = 0)."""
    slice_rows = [r for r in rows if r.iota == 0.0]
    groups = _group_rows(slice_rows, lambda r: (r.max_iterations, r.max_depth))
    groups = {k: v for k, v in groups.items() if len({r.xi for r in v}) >= 2}
    if not groups:
        return False
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    ax2 = ax.twinx()
    for (iters, depth), grp in sorted(groups.items()):
        grp = sorted(grp, key=lambda r: r.xi)
        pos = _penalty_positions([r.xi for r in grp])
        values = [
            r.report.global_threshold_count + r.report.global_leaf_value_count
            for r in grp
        ]
        ax.plot(pos, [r.report.metric_value for r in grp], "o-",
                label=f"metric ({iters} it, depth {depth})")
        ax2.plot(pos, values, "s--", alpha=0.6,
                 label=f"global values ({iters} it, depth {depth})")
        ax2.plot(pos, [r.report.reuse_factor for r in grp], "^:", alpha=0.6,
                 label=f"reuse factor ({iters} it, depth {depth})")
    ax.set_xlabel(r"threshold penalty $\log_2(\xi)$")
    ax.set_ylabel(_metric_label(rows))
    ax2.set_ylabel("global values / reuse factor")
    ax2.set_yscale("log")
    ax.set_title(title)
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return True


def plot_feature_penalty(rows: list[GridRow], path: Path, title: str) -> bool:
    """Metric and used-feature count against iota (xi = 0)."""
    slice_rows = [r for r in rows if r.xi == 0.0]
    groups = _group_rows(slice_rows, lambda r: (r.max_iterations, r.max_depth))
    groups = {k: v for k, v in groups.items() if len({r.iota for r in v}) >= 2}
    if not groups:
        return False
    fig, ax = plt.subplots(figsize=(6.5, 4.0))
    ax2 = ax.twinx()
    for (iters, depth), grp in sorted(groups.items()):
        grp = sorted(grp, key=lambda r: r.iota)
        pos = _penalty_positions([r.iota for r in grp])
        ax.plot(pos, [r.report.metric_value for r in grp], "o-",
                label=f"metric ({iters} it, depth {depth})")
        ax2.plot(pos, [r.report.feature_count for r in grp], "s--", alpha=0.6,
                 label=f"used features ({iters} it, depth {depth})")
    ax.set_xlabel(r"feature penalty $\log_2(\iota)$")
    ax.set_ylabel(_metric_label(rows))
    ax2.set_ylabel("used features")
    ax.set_title(title)
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return True


def plot_penalty_grid(rows: list[GridRow], path: Path, title: str) -> bool:
    """Heatmaps of memory (KB) and metric over the iota x xi grid for the
    largest (iterations, depth) setting present."""
    groups = _group_rows(rows, lambda r: (r.max_iterations, r.max_depth))
    candidates = []
    for key, grp in groups.items():
        iotas = sorted({r.iota for r in grp})
        xis = sorted({r.xi for r in grp})
        if len(iotas) >= 2 and len(xis) >= 2 and len(grp) == len(iotas) * len(xis):
            candidates.append((key, iotas, xis, grp))
    if not candidates:
        return False
    (iters, depth), iotas, xis, grp = max(candidates, key=lambda c: c[0])
    memory = np.full((len(iotas), len(xis)), np.nan)
    metric = np.full((len(iotas), len(xis)), np.nan)
    for r in grp:
        i = iotas.index(r.iota)
        j = xis.index(r.xi)
        memory[i, j] = r.report.toad_bytes / 1024
        metric[i, j] = r.report.metric_value

    fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.0))
    labels_i = [f"{v:g}" for v in iotas]
    labels_x = [f"{v:g}" for v in xis]
    for ax, grid_vals, name in (
        (axes[0], memory, "memory (KB)"),
        (axes[1], metric, _metric_label(rows)),
    ):
        im = ax.imshow(grid_vals, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(xis)), labels_x, rotation=45, fontsize=7)
        ax.set_yticks(range(len(iotas)), labels_i, fontsize=7)
        ax.set_xlabel(r"threshold penalty $\xi$")
        ax.set_ylabel(r"feature penalty $\iota$")
        ax.set_title(name)
        fig.colorbar(im, ax=ax)
    fig.suptitle(f"{title} ({iters} iterations, depth {depth})")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return True


def render_figures(rows: list[GridRow], out_dir: str | Path, title: str) -> list[Path]:
    """Write every figure the rows support; returns the created paths."""
    if not rows:
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    path = out_dir / "tradeoff.png"
    plot_tradeoff(rows, path, title)
    written.append(path)
    for fn, name in (
        (plot_threshold_penalty, "threshold_penalty.png"),
        (plot_feature_penalty, "feature_penalty.png"),
        (plot_penalty_grid, "penalty_grid.png"),
    ):
        path = out_dir / name
        if fn(rows, path, title):
            written.append(path)
    return written
