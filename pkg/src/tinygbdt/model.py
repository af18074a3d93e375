"""Tree-ensemble model: interned global tables plus pointer-less trees.

Internal nodes reference a feature entry and one of its thresholds; leaves
reference a shared pool of 32-bit leaf values. Sharing these tables across
all trees is what the packed format (see codec) exploits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import TaskKind


def _canonical(value: float) -> float:
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"value must be finite, got {v}")
    return 0.0 if v == 0.0 else v


@dataclass
class FeatureEntry:
    """One used input feature with its interned thresholds.

    ``width_exponent`` (0..5) and ``is_float`` describe the storage width of
    the thresholds (2**exponent bits each); they are placeholders until the
    layout is finalized for encoding.
    """

    input_feature_index: int
    thresholds: list[float] = field(default_factory=list)
    width_exponent: int = 5
    is_float: bool = True
    _lookup: dict[float, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._lookup = {t: i for i, t in enumerate(self.thresholds)}

    def copy(self) -> "FeatureEntry":
        return FeatureEntry(
            self.input_feature_index,
            list(self.thresholds),
            self.width_exponent,
            self.is_float,
        )


@dataclass
class GlobalTables:
    """Ensemble-wide feature/threshold and leaf-value tables.

    Features are ordered by first use. Thresholds are matched bit-wise after
    canonicalizing -0.0 to +0.0; leaf values are rounded to 32-bit precision
    before matching, so equal 32-bit values are stored once.
    """

    features: list[FeatureEntry] = field(default_factory=list)
    leaf_values: list[float] = field(default_factory=list)
    _feature_refs: dict[int, int] = field(default_factory=dict, repr=False, compare=False)
    _leaf_refs: dict[float, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._feature_refs = {
            e.input_feature_index: i for i, e in enumerate(self.features)
        }
        self._leaf_refs = {v: i for i, v in enumerate(self.leaf_values)}

    def copy(self) -> "GlobalTables":
        return GlobalTables([e.copy() for e in self.features], list(self.leaf_values))

    def intern_feature(self, input_index: int) -> tuple[int, int]:
        """Return (feature_ref, s_f); s_f = 1 when the feature is new."""
        ref = self._feature_refs.get(input_index)
        if ref is not None:
            return ref, 0
        ref = len(self.features)
        self.features.append(FeatureEntry(input_index))
        self._feature_refs[input_index] = ref
        return ref, 1

    def intern_threshold(self, feature_ref: int, mu: float) -> tuple[int, int]:
        """Return (threshold_ref, s_t); s_t = 1 when the threshold is new."""
        entry = self.features[feature_ref]
        mu = _canonical(mu)
        ref = entry._lookup.get(mu)
        if ref is not None:
            return ref, 0
        ref = len(entry.thresholds)
        entry.thresholds.append(mu)
        entry._lookup[mu] = ref
        return ref, 1

    def intern_leaf_value(self, v: float) -> int:
        """Round to 32-bit precision, then reuse or append."""
        v32 = _canonical(float(np.float32(_canonical(v))))
        ref = self._leaf_refs.get(v32)
        if ref is not None:
            return ref
        ref = len(self.leaf_values)
        self.leaf_values.append(v32)
        self._leaf_refs[v32] = ref
        return ref

    def feature_ref_of(self, input_index: int) -> int | None:
        return self._feature_refs.get(input_index)

    def has_threshold(self, feature_ref: int, mu: float) -> bool:
        return _canonical(mu) in self.features[feature_ref]._lookup

    @property
    def threshold_count(self) -> int:
        return sum(len(e.thresholds) for e in self.features)


@dataclass(frozen=True)
class Internal:
    feature_ref: int
    threshold_ref: int


@dataclass(frozen=True)
class Leaf:
    leaf_ref: int


TreeNode = Internal | Leaf


def heap_depth(index: int) -> int:
    """Depth of a heap position (root = 0)."""
    return (index + 1).bit_length() - 1


@dataclass
class Tree:
    """Heap-indexed tree: root at 0, children of i at 2i+1 and 2i+2."""

    nodes: dict[int, TreeNode]
    depth: int = 0

    def __post_init__(self):
        self.depth = max(heap_depth(i) for i in self.nodes)

    def level_order(self):
        """Yield (index, node) in BFS order, skipping absent subtrees."""
        queue = [0]
        while queue:
            i = queue.pop(0)
            node = self.nodes[i]
            yield i, node
            if isinstance(node, Internal):
                queue.append(2 * i + 1)
                queue.append(2 * i + 2)

    @property
    def internal_count(self) -> int:
        return sum(1 for n in self.nodes.values() if isinstance(n, Internal))

    @property
    def leaf_count(self) -> int:
        return sum(1 for n in self.nodes.values() if isinstance(n, Leaf))


@dataclass
class Ensemble:
    """Ordered trees over shared tables; tree j scores class j mod class_count.

    Leaf values are stored with shrinkage already applied, so prediction is a
    plain sum of reached leaf values starting from ``base_score``.
    """

    trees: list[Tree]
    tables: GlobalTables
    task: TaskKind
    max_depth: int
    feature_count: int
    class_count: int = 1
    base_score: float = 0.0
    learning_rate: float = 0.1

    @property
    def internal_count(self) -> int:
        return sum(t.internal_count for t in self.trees)

    @property
    def leaf_count(self) -> int:
        return sum(t.leaf_count for t in self.trees)


def validate_ensemble(e: Ensemble) -> None:
    """Check structural invariants; raises ValueError on the first breach."""
    if e.class_count != e.task.score_width:
        raise ValueError("class_count does not match the task")
    if e.task.kind == "multiclass" and len(e.trees) % e.class_count != 0:
        raise ValueError("multiclass tree count must be a multiple of class_count")
    seen_inputs = set()
    for entry in e.tables.features:
        if entry.input_feature_index in seen_inputs:
            raise ValueError("duplicate input feature index in tables")
        if not 0 <= entry.input_feature_index < e.feature_count:
            raise ValueError("input feature index out of range")
        seen_inputs.add(entry.input_feature_index)
        if not entry.thresholds:
            raise ValueError("feature entry with zero thresholds")
        if len(set(entry.thresholds)) != len(entry.thresholds):
            raise ValueError("duplicate threshold within one feature entry")
        if entry.width_exponent not in range(6):
            raise ValueError(f"width exponent {entry.width_exponent} out of range")
    if len(set(e.tables.leaf_values)) != len(e.tables.leaf_values):
        raise ValueError("duplicate leaf value in tables")
    for k, tree in enumerate(e.trees):
        if 0 not in tree.nodes:
            raise ValueError(f"tree {k} has no root")
        for i, node in tree.nodes.items():
            if i > 0:
                parent = tree.nodes.get((i - 1) // 2)
                if not isinstance(parent, Internal):
                    raise ValueError(f"tree {k} node {i} has no internal parent")
            if isinstance(node, Internal):
                if 2 * i + 1 not in tree.nodes or 2 * i + 2 not in tree.nodes:
                    raise ValueError(f"tree {k} internal node {i} lacks a child")
                if node.feature_ref >= len(e.tables.features):
                    raise ValueError(f"tree {k} node {i}: feature_ref out of range")
                entry = e.tables.features[node.feature_ref]
                if node.threshold_ref >= len(entry.thresholds):
                    raise ValueError(f"tree {k} node {i}: threshold_ref out of range")
            else:
                if node.leaf_ref >= len(e.tables.leaf_values):
                    raise ValueError(f"tree {k} node {i}: leaf_ref out of range")
        if tree.depth > e.max_depth:
            raise ValueError(f"tree {k} exceeds max_depth")


def _route(tree: Tree, tables: GlobalTables, x: np.ndarray) -> float:
    i = 0
    node = tree.nodes[0]
    while isinstance(node, Internal):
        entry = tables.features[node.feature_ref]
        mu = entry.thresholds[node.threshold_ref]
        i = 2 * i + 1 if x[entry.input_feature_index] <= mu else 2 * i + 2
        node = tree.nodes[i]
    return tables.leaf_values[node.leaf_ref]


def predict_raw(e: Ensemble, x: np.ndarray) -> np.ndarray:
    """Raw per-class scores for a single row (single-row traversal)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != e.feature_count:
        raise ValueError(
            f"expected a feature vector of length {e.feature_count}, "
            f"got shape {x.shape}"
        )
    scores = np.full(e.class_count, e.base_score, dtype=np.float64)
    for k, tree in enumerate(e.trees):
        scores[k % e.class_count] += _route(tree, e.tables, x)
    return scores


def _tree_values(tree: Tree, tables: GlobalTables, X: np.ndarray) -> np.ndarray:
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


def predict_raw_matrix(e: Ensemble, X: np.ndarray) -> np.ndarray:
    """Raw scores for a matrix of rows, shape (n, class_count)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != e.feature_count:
        raise ValueError(
            f"expected an (n, {e.feature_count}) feature matrix, got shape {X.shape}"
        )
    scores = np.full((X.shape[0], e.class_count), e.base_score, dtype=np.float64)
    for k, tree in enumerate(e.trees):
        scores[:, k % e.class_count] += _tree_values(tree, e.tables, X)
    return scores


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=-1, keepdims=True)


def predict_proba(e: Ensemble, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a single row (classification tasks only)."""
    if not e.task.is_classification:
        raise ValueError("probabilities are only defined for classification")
    raw = predict_raw(e, x)
    if e.task.kind == "binary":
        p1 = float(_logistic(raw[0]))
        return np.array([1.0 - p1, p1])
    return _softmax(raw)


def predict(e: Ensemble, x: np.ndarray):
    """Link-function prediction: real value, or class index for classification."""
    raw = predict_raw(e, x)
    if e.task.kind == "regression":
        return float(raw[0])
    if e.task.kind == "binary":
        return 1 if _logistic(raw[0]) >= 0.5 else 0
    return int(np.argmax(_softmax(raw)))


def predict_matrix(e: Ensemble, X: np.ndarray) -> np.ndarray:
    """Vector of link-function predictions for a matrix of rows."""
    raw = predict_raw_matrix(e, X)
    if e.task.kind == "regression":
        return raw[:, 0]
    if e.task.kind == "binary":
        return (_logistic(raw[:, 0]) >= 0.5).astype(np.int64)
    return np.argmax(_softmax(raw), axis=1).astype(np.int64)
