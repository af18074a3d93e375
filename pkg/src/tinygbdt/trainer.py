"""Gradient boosting with feature/threshold reuse penalties.

Trees grow leaf-wise: the pool of splittable leaves is maintained across the
whole tree and the globally best penalized gain is applied next. A split's
gain is

    delta = 0.5 * (GL^2/(HL+lam) + GR^2/(HR+lam) - GI^2/(HI+lam)) - gamma

and the penalized gain subtracts ``iota`` when the split introduces a feature
unseen anywhere in the ensemble so far and ``xi`` when it introduces a new
threshold, so reusing already-interned features/thresholds is free.

Summation conventions (shared with the tests' independent reference trainer
so that zero-penalty runs can be compared exactly): node aggregates are
np.sum over the node's ascending row-index array; per-candidate prefixes are
np.cumsum over gradients stably sorted by feature value; right-side sums are
parent minus left.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import finalize_layout, size_report
from .data import CandidateSet, Dataset, TaskKind, candidate_thresholds
from .model import (
    Ensemble,
    GlobalTables,
    Internal,
    Leaf,
    Tree,
    TreeNode,
    heap_depth,
)


@dataclass(frozen=True)
class TrainConfig:
    """All boosting hyperparameters.

    ``iota`` penalizes first use of a feature, ``xi`` first use of a
    threshold; ``forestsize_budget`` caps the encoded model size in bytes
    (the tree that would overflow it is discarded and training stops).
    """

    iota: float = 0.0
    xi: float = 0.0
    gamma: float = 0.0
    lam: float = 1.0
    learning_rate: float = 0.1
    max_iterations: int = 100
    max_depth: int = 4
    forestsize_budget: int | None = None
    max_bins: int = 255
    min_gain: float = 0.0
    seed: int = 42

    def validate(self) -> None:
        for name in ("iota", "xi", "gamma", "lam"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.max_bins < 1:
            raise ValueError("max_bins must be >= 1")
        if self.forestsize_budget is not None and self.forestsize_budget < 1:
            raise ValueError("forestsize_budget must be a positive byte count")


@dataclass
class GradStats:
    """Per-row first/second loss derivatives; one column per score channel."""

    g: np.ndarray
    h: np.ndarray

    def channel(self, k: int) -> "GradStats":
        if self.g.ndim == 1:
            return self
        return GradStats(self.g[:, k], self.h[:, k])

    def sums(self, rows: np.ndarray) -> tuple[float, float]:
        return float(np.sum(self.g[rows])), float(np.sum(self.h[rows]))


@dataclass
class GainResult:
    """One evaluated candidate split."""

    delta: float
    delta_l: float
    s_f: int
    s_t: int
    feature: int
    threshold: float
    left_rows: np.ndarray
    right_rows: np.ndarray


@dataclass
class LeafWorkItem:
    """A splittable leaf: heap position, its rows, and gradient aggregates."""

    position: int
    rows: np.ndarray
    G: float
    H: float
    best_split: GainResult | None = None
    # Cached per-feature best candidates: (delta_l, delta, s_f, s_t, threshold)
    feature_bests: list[tuple | None] = field(default_factory=list, repr=False)

    @property
    def depth(self) -> int:
        return heap_depth(self.position)


def _logistic(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def compute_gradients(
    task: TaskKind, labels: np.ndarray, raw_scores: np.ndarray
) -> GradStats:
    """Gradients/hessians of the loss at the current raw scores.

    Regression uses squared loss, binary the logistic loss, multiclass the
    softmax cross-entropy (one column per class).
    """
    raw = np.asarray(raw_scores, dtype=np.float64)
    if raw.ndim == 1:
        raw = raw[:, None]
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw scores contain non-finite values")
    if task.kind == "regression":
        g = raw[:, 0] - labels
        h = np.ones_like(g)
        return GradStats(g[:, None], h[:, None])
    if task.kind == "binary":
        p = _logistic(raw[:, 0])
        g = p - labels
        h = p * (1.0 - p)
        return GradStats(g[:, None], h[:, None])
    shifted = raw - raw.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    p = ez / ez.sum(axis=1, keepdims=True)
    onehot = (labels[:, None] == np.arange(task.classes)[None, :]).astype(np.float64)
    return GradStats(p - onehot, p * (1.0 - p))


def leaf_value(G: float, H: float, lam: float, learning_rate: float) -> float:
    """Shrunken minimizer of G*v + 0.5*(H+lam)*v^2."""
    if H + lam <= 0:
        raise ValueError(f"H + lambda must be positive, got {H + lam}")
    return learning_rate * (-G / (H + lam))


def _gain_terms(GL, HL, GR, HR, G, H, lam: float, gamma: float):
    """Split gain; candidates with a zero denominator are ruled out (-inf)."""
    dl = HL + lam
    dr = HR + lam
    dp = H + lam
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = 0.5 * (GL * GL / dl + GR * GR / dr - G * G / dp) - gamma
    bad = (dl <= 0) | (dr <= 0) | (dp <= 0)
    return np.where(bad, -np.inf, delta)


def _novelty(
    tables: GlobalTables, feature: int, mus: np.ndarray
) -> tuple[int, np.ndarray]:
    """(s_f, per-candidate s_t) for candidate thresholds of one feature."""
    fref = tables.feature_ref_of(feature)
    if fref is None:
        return 1, np.ones(len(mus), dtype=np.int64)
    known = np.isin(mus, np.asarray(tables.features[fref].thresholds))
    return 0, (~known).astype(np.int64)


def _scan_feature(
    X: np.ndarray,
    item: LeafWorkItem,
    feature: int,
    grads: GradStats,
    config: TrainConfig,
    tables: GlobalTables,
    cand: np.ndarray,
) -> tuple | None:
    """Best candidate on one feature: (delta_l, delta, s_f, s_t, threshold)."""
    if cand.size == 0 or item.rows.size < 2:
        return None
    x = X[item.rows, feature]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    if xs[0] == xs[-1]:
        return None
    pos = np.searchsorted(xs, cand, side="right")
    valid = (pos > 0) & (pos < xs.size)
    if not valid.any():
        return None
    g = grads.g[item.rows][order]
    h = grads.h[item.rows][order]
    cg = np.cumsum(g)
    ch = np.cumsum(h)
    p = pos[valid] - 1
    mus = cand[valid]
    GL = cg[p]
    HL = ch[p]
    GR = item.G - GL
    HR = item.H - HL
    delta = _gain_terms(GL, HL, GR, HR, item.G, item.H, config.lam, config.gamma)
    s_f, s_t = _novelty(tables, feature, mus)
    delta_l = delta - s_f * config.iota - s_t * config.xi
    k = int(np.argmax(delta_l))  # first max = lowest threshold
    return (
        float(delta_l[k]),
        float(delta[k]),
        s_f,
        int(s_t[k]),
        float(mus[k]),
    )


def evaluate_split(
    X: np.ndarray,
    item: LeafWorkItem,
    feature: int,
    mu: float,
    grads: GradStats,
    config: TrainConfig,
    tables: GlobalTables,
) -> GainResult:
    """Gain of splitting the leaf at (feature, mu). Never mutates tables."""
    x = X[item.rows, feature]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    pos = int(np.searchsorted(xs, mu, side="right"))
    if pos == 0 or pos == xs.size:
        raise ValueError(
            f"threshold {mu} leaves one side of the split empty"
        )
    g = grads.g[item.rows][order]
    h = grads.h[item.rows][order]
    GL = float(np.cumsum(g)[pos - 1])
    HL = float(np.cumsum(h)[pos - 1])
    GR = item.G - GL
    HR = item.H - HL
    delta = float(
        _gain_terms(GL, HL, GR, HR, item.G, item.H, config.lam, config.gamma)
    )
    s_f, s_t_arr = _novelty(tables, feature, np.array([mu]))
    s_t = int(s_t_arr[0])
    delta_l = delta - s_f * config.iota - s_t * config.xi
    left_mask = x <= mu
    return GainResult(
        delta=delta,
        delta_l=delta_l,
        s_f=s_f,
        s_t=s_t,
        feature=feature,
        threshold=mu,
        left_rows=item.rows[left_mask],
        right_rows=item.rows[~left_mask],
    )


def _rescan_all(X, item, grads, config, tables, candidates) -> None:
    item.feature_bests = [
        _scan_feature(X, item, f, grads, config, tables, candidates.thresholds[f])
        for f in range(X.shape[1])
    ]


def _pool_item_best(item: LeafWorkItem) -> tuple | None:
    """Reduce the per-feature cache. Scanning features in ascending order and
    replacing only on strictly higher gain implements the tie rule (lower
    feature index wins; within a feature the scan already kept the lowest
    threshold)."""
    best = None
    best_f = -1
    for f, rec in enumerate(item.feature_bests):
        if rec is None:
            continue
        if best is None or rec[0] > best[0]:
            best = rec
            best_f = f
    return (best, best_f) if best is not None else None


def best_split(
    X: np.ndarray,
    item: LeafWorkItem,
    candidates: CandidateSet,
    grads: GradStats,
    config: TrainConfig,
    tables: GlobalTables,
) -> GainResult | None:
    """Best penalized-gain split over all candidates, or None when the best
    does not exceed ``min_gain``."""
    best = None
    best_f = -1
    for f in range(X.shape[1]):
        rec = _scan_feature(X, item, f, grads, config, tables, candidates.thresholds[f])
        if rec is None:
            continue
        if best is None or rec[0] > best[0]:
            best, best_f = rec, f
    if best is None or best[0] <= config.min_gain:
        return None
    delta_l, delta, s_f, s_t, mu = best
    x = X[item.rows, best_f]
    left_mask = x <= mu
    return GainResult(
        delta=delta,
        delta_l=delta_l,
        s_f=s_f,
        s_t=s_t,
        feature=best_f,
        threshold=mu,
        left_rows=item.rows[left_mask],
        right_rows=item.rows[~left_mask],
    )


def grow_tree(
    X: np.ndarray,
    rows: np.ndarray,
    grads: GradStats,
    candidates: CandidateSet,
    config: TrainConfig,
    tables: GlobalTables,
) -> Tree:
    """Grow one tree leaf-wise, interning features/thresholds as splits are
    committed so later splits (and later trees) see them as reused.

    After every interning event the cached candidate scans of the other pool
    leaves are refreshed for the affected feature, since their novelty flags
    may have dropped to zero.
    """
    G, H = grads.sums(rows)
    root = LeafWorkItem(0, rows, G, H)
    _rescan_all(X, root, grads, config, tables, candidates)
    pool = [root]
    nodes: dict[int, TreeNode] = {}

    while True:
        chosen = None
        chosen_rec = None
        chosen_f = -1
        for item in pool:
            found = _pool_item_best(item)
            if found is None:
                continue
            rec, f = found
            if (
                chosen_rec is None
                or rec[0] > chosen_rec[0]
                or (rec[0] == chosen_rec[0] and (f, rec[4]) < (chosen_f, chosen_rec[4]))
            ):
                chosen, chosen_rec, chosen_f = item, rec, f
        if chosen is None or chosen_rec[0] <= config.min_gain:
            break

        _, _, _, _, mu = chosen_rec
        fref, s_f = tables.intern_feature(chosen_f)
        tref, s_t = tables.intern_threshold(fref, mu)
        nodes[chosen.position] = Internal(fref, tref)
        x = X[chosen.rows, chosen_f]
        left_mask = x <= mu
        pool.remove(chosen)
        children = []
        for pos, sub in (
            (2 * chosen.position + 1, chosen.rows[left_mask]),
            (2 * chosen.position + 2, chosen.rows[~left_mask]),
        ):
            Gc, Hc = grads.sums(sub)
            child = LeafWorkItem(pos, sub, Gc, Hc)
            if child.depth < config.max_depth:
                _rescan_all(X, child, grads, config, tables, candidates)
            children.append(child)
        if s_f or s_t:
            for item in pool:
                if item.feature_bests:
                    item.feature_bests[chosen_f] = _scan_feature(
                        X, item, chosen_f, grads, config, tables,
                        candidates.thresholds[chosen_f],
                    )
        pool.extend(children)

    for item in pool:
        v = leaf_value(item.G, item.H, config.lam, config.learning_rate)
        nodes[item.position] = Leaf(tables.intern_leaf_value(v))
    return Tree(nodes)


def _tree_leaf_scores(tree: Tree, tables: GlobalTables, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)

    def assign(i: int, rows: np.ndarray) -> None:
        node = tree.nodes[i]
        if isinstance(node, Leaf):
            out[rows] = tables.leaf_values[node.leaf_ref]
            return
        entry = tables.features[node.feature_ref]
        mu = entry.thresholds[node.threshold_ref]
        go_left = X[rows, entry.input_feature_index] <= mu
        assign(2 * i + 1, rows[go_left])
        assign(2 * i + 2, rows[~go_left])

    assign(0, np.arange(X.shape[0]))
    return out


def encoded_size_bits(e: Ensemble) -> int:
    """Exact bit length the codec would produce for this ensemble."""
    return size_report(e).total_bits


def train(ds: Dataset, config: TrainConfig) -> Ensemble:
    """Run the boosting loop and return the finalized ensemble.

    Each round recomputes gradients at the current raw scores and grows one
    tree per score channel. Training stops early when a round yields only
    depth-0 trees (nothing left to split: with zero-valued stumps the round
    is discarded, otherwise it is kept), or when the encoded size would
    exceed ``forestsize_budget`` (the partial round is discarded).
    """
    config.validate()
    if ds.n < 2:
        raise ValueError("training needs at least 2 rows")
    X = ds.features
    n, d = X.shape
    task = ds.task
    channels = task.score_width
    candidates = candidate_thresholds(ds, config.max_bins)

    tables = GlobalTables()
    trees: list[Tree] = []
    raw = np.zeros((n, channels), dtype=np.float64)
    all_rows = np.arange(n)
    budget_bits = (
        8 * config.forestsize_budget if config.forestsize_budget is not None else None
    )
    unique_cols = {j: np.unique(X[:, j]) for j in range(d)}

    def current_size_bits() -> int:
        e = Ensemble(trees, tables, task, config.max_depth, d, channels,
                     0.0, config.learning_rate)
        return size_report(finalize_layout(e, X, unique_cols)).total_bits

    for _ in range(config.max_iterations):
        stats = compute_gradients(task, ds.labels, raw)
        snapshot = tables.copy()
        round_start = len(trees)
        overflow = False
        for k in range(channels):
            tree = grow_tree(X, all_rows, stats.channel(k), candidates, config, tables)
            trees.append(tree)
            if budget_bits is not None and current_size_bits() > budget_bits:
                del trees[round_start:]
                tables = snapshot
                overflow = True
                break
            raw[:, k] += _tree_leaf_scores(tree, tables, X)
        if overflow:
            break
        round_trees = trees[round_start:]
        if all(t.depth == 0 for t in round_trees):
            values = [
                tables.leaf_values[t.nodes[0].leaf_ref] for t in round_trees
            ]
            if all(v == 0.0 for v in values):
                del trees[round_start:]
                tables = snapshot
            break

    final = Ensemble(
        trees=trees,
        tables=tables,
        task=task,
        max_depth=config.max_depth,
        feature_count=d,
        class_count=channels,
        base_score=0.0,
        learning_rate=config.learning_rate,
    )
    return finalize_layout(final, X, unique_cols)
