"""Random valid ensemble generator spanning all widths and task kinds."""
from __future__ import annotations

import random
import struct

import numpy as np

from tinygbdt.data import BINARY, REGRESSION, multiclass
from tinygbdt.model import (
    Ensemble,
    FeatureEntry,
    GlobalTables,
    Internal,
    Leaf,
    Tree,
)


def _f16_from_bits(bits: int) -> float:
    return struct.unpack(">e", struct.pack(">H", bits))[0]


def _f32_from_bits(bits: int) -> float:
    return struct.unpack(">f", struct.pack(">I", bits))[0]


def _random_thresholds(rng: random.Random, exponent: int, is_float: bool, count: int):
    width = 1 << exponent
    values: set[float] = set()
    while len(values) < count:
        if is_float and exponent == 4:
            bits = rng.randrange(1 << 16)
            if bits & 0x7C00 == 0x7C00:  # inf/nan
                continue
            values.add(_f16_from_bits(bits))
        elif is_float:
            bits = rng.randrange(1 << 32)
            if (bits >> 23) & 0xFF == 0xFF:
                continue
            values.add(_f32_from_bits(bits))
        else:
            values.add(float(rng.randrange(1 << width)))
    return sorted(values)


def random_ensemble(seed: int) -> Ensemble:
    rng = random.Random(seed)
    kind = rng.choice(["regression", "binary", "multiclass"])
    if kind == "multiclass":
        task = multiclass(rng.randint(3, 5))
    else:
        task = REGRESSION if kind == "regression" else BINARY
    channels = task.score_width

    d = rng.randint(1, 40)
    used = rng.randint(0, min(d, 5))
    inputs = rng.sample(range(d), used)
    entries = []
    for idx in inputs:
        is_float = rng.random() < 0.4
        exponent = rng.choice([4, 5]) if is_float else rng.randint(0, 5)
        count = min(rng.randint(1, 7), 1 << (1 << exponent))
        entries.append(
            FeatureEntry(idx, _random_thresholds(rng, exponent, is_float, count),
                         exponent, is_float)
        )

    leaf_values: set[float] = set()
    target = rng.randint(1, 9)
    while len(leaf_values) < target:
        leaf_values.add(float(np.float32(rng.uniform(-4.0, 4.0))))
    values = sorted(leaf_values)

    max_depth = rng.randint(1, 6)
    rounds = rng.randint(0, 2) if kind == "multiclass" else rng.randint(0, 5)
    tree_count = rounds * channels if kind == "multiclass" else rounds

    def gen_tree() -> Tree:
        nodes: dict[int, Internal | Leaf] = {}

        def gen(i: int, depth: int) -> None:
            if entries and depth < max_depth and rng.random() < 0.6:
                fref = rng.randrange(len(entries))
                tref = rng.randrange(len(entries[fref].thresholds))
                nodes[i] = Internal(fref, tref)
                gen(2 * i + 1, depth + 1)
                gen(2 * i + 2, depth + 1)
            else:
                nodes[i] = Leaf(rng.randrange(len(values)))

        gen(0, 0)
        return Tree(nodes)

    trees = [gen_tree() for _ in range(tree_count)]
    return Ensemble(
        trees=trees,
        tables=GlobalTables(entries, values),
        task=task,
        max_depth=max_depth,
        feature_count=d,
        class_count=channels,
        base_score=0.0,
        learning_rate=1.0,
    )


def probe_matrix(e: Ensemble, seed: int, rows: int = 24) -> np.ndarray:
    """Feature rows that exercise routing: random values plus exact threshold
    hits on the used features."""
    rng = np.random.default_rng(seed)
    X = rng.normal(scale=3.0, size=(rows, e.feature_count))
    thresholds = [
        (f.input_feature_index, t) for f in e.tables.features for t in f.thresholds
    ]
    for i, (j, t) in enumerate(thresholds):
        X[i % rows, j] = t
    return X
