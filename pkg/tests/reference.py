"""Independent unpenalized boosting implementation, used as the identity
oracle for zero-penalty training runs.

Grows trees recursively (no leaf pool, no global tables, no caching, no
packing) but follows the same arithmetic conventions as the library so that
exact prediction equality on training rows is well-defined: node aggregates
are np.sum over ascending row indices, candidate prefixes are np.cumsum in
stable feature-sorted order, the right side is parent minus left, ties go to
the lower feature index then the lower threshold, and leaf values are
rounded to float32 after shrinkage.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tinygbdt.data import Dataset, candidate_thresholds
from tinygbdt.trainer import TrainConfig


@dataclass
class RefSplit:
    feature: int
    threshold: float
    left: "RefSplit | RefLeaf"
    right: "RefSplit | RefLeaf"


@dataclass
class RefLeaf:
    value: float


RefNode = RefSplit | RefLeaf


def _best_split(X, rows, g, h, cand_set, lam, gamma):
    G = float(np.sum(g[rows]))
    H = float(np.sum(h[rows]))
    best = None  # (delta, feature, threshold)
    for f in range(X.shape[1]):
        cand = cand_set.thresholds[f]
        if cand.size == 0 or rows.size < 2:
            continue
        x = X[rows, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        if xs[0] == xs[-1]:
            continue
        cg = np.cumsum(g[rows][order])
        ch = np.cumsum(h[rows][order])
        pos = np.searchsorted(xs, cand, side="right")
        ok = (pos > 0) & (pos < xs.size)
        if not ok.any():
            continue
        GL = cg[pos[ok] - 1]
        HL = ch[pos[ok] - 1]
        GR = G - GL
        HR = H - HL
        dl = HL + lam
        dr = HR + lam
        dp = H + lam
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = 0.5 * (GL * GL / dl + GR * GR / dr - G * G / dp) - gamma
        delta = np.where((dl <= 0) | (dr <= 0) | (dp <= 0), -np.inf, delta)
        k = int(np.argmax(delta))  # first max = lowest threshold
        if best is None or float(delta[k]) > best[0]:
            best = (float(delta[k]), f, float(cand[ok][k]))
    return best


def _build(X, rows, g, h, depth, config, cand_set) -> RefNode:
    if depth < config.max_depth:
        best = _best_split(X, rows, g, h, cand_set, config.lam, config.gamma)
        if best is not None and best[0] > config.min_gain:
            _, f, mu = best
            mask = X[rows, f] <= mu
            return RefSplit(
                f,
                mu,
                _build(X, rows[mask], g, h, depth + 1, config, cand_set),
                _build(X, rows[~mask], g, h, depth + 1, config, cand_set),
            )
    G = float(np.sum(g[rows]))
    H = float(np.sum(h[rows]))
    v = config.learning_rate * (-G / (H + config.lam))
    return RefLeaf(float(np.float32(v)))


def _route(node: RefNode, x: np.ndarray) -> float:
    while isinstance(node, RefSplit):
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def _tree_scores(node: RefNode, X: np.ndarray) -> np.ndarray:
    return np.array([_route(node, X[i]) for i in range(X.shape[0])])


def _gradients(task, labels, raw):
    if task.kind == "regression":
        g = raw[:, 0] - labels
        return [(g, np.ones_like(g))]
    if task.kind == "binary":
        p = 1.0 / (1.0 + np.exp(-raw[:, 0]))
        return [(p - labels, p * (1.0 - p))]
    shifted = raw - raw.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    p = ez / ez.sum(axis=1, keepdims=True)
    onehot = (labels[:, None] == np.arange(task.classes)[None, :]).astype(np.float64)
    g = p - onehot
    h = p * (1.0 - p)
    return [(g[:, k], h[:, k]) for k in range(task.classes)]


def _is_stump(node: RefNode) -> bool:
    return isinstance(node, RefLeaf)


def reference_train(ds: Dataset, config: TrainConfig) -> list[RefNode]:
    """Boosting loop mirroring the library's semantics without penalties."""
    X = ds.features
    n = ds.n
    channels = ds.task.score_width
    cand_set = candidate_thresholds(ds, config.max_bins)
    raw = np.zeros((n, channels), dtype=np.float64)
    all_rows = np.arange(n)
    forest: list[RefNode] = []
    for _ in range(config.max_iterations):
        stats = _gradients(ds.task, ds.labels, raw)
        round_trees = []
        for k in range(channels):
            g, h = stats[k]
            tree = _build(X, all_rows, g, h, 0, config, cand_set)
            round_trees.append(tree)
            raw[:, k] += _tree_scores(tree, X)
        forest.extend(round_trees)
        if all(_is_stump(t) for t in round_trees):
            if all(t.value == 0.0 for t in round_trees):
                del forest[-len(round_trees):]
            break
    return forest


def reference_predict_raw(
    forest: list[RefNode], X: np.ndarray, channels: int
) -> np.ndarray:
    raw = np.zeros((X.shape[0], channels), dtype=np.float64)
    for k, tree in enumerate(forest):
        raw[:, k % channels] += _tree_scores(tree, X)
    return raw
