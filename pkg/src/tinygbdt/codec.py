"""Bit-packed model format: encoder, decoder, and size accounting.

The stream has five sections, each zero-padded to a byte boundary:

  1. metadata        - fixed-width header (magic, version, task, counts)
  2. feature map     - per used feature: input index, threshold bit width
                       (stored as a power-of-two exponent), numeric type,
                       and threshold count minus one
  3. thresholds      - per feature, count x 2**exponent bits
  4. leaf values     - 32-bit floats, shared by all trees
  5. trees           - level-order nodes; 1 tag bit per node, then either
                       feature/threshold references or a leaf-value reference

Bit order is most-significant-bit first; multi-bit fields are big-endian.
Reference widths are the minimal ceil(log2(n)) for n options, with 0 bits
when there is a single option. Trees are pointer-less: children of the node
at heap index i live at 2i+1 and 2i+2, so no child offsets are stored.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import BINARY, REGRESSION, multiclass
from .model import (
    Ensemble,
    FeatureEntry,
    GlobalTables,
    Internal,
    Leaf,
    Tree,
    heap_depth,
    validate_ensemble,
)

MAGIC = 0b11010111
VERSION = 1

# (name, bits) of the fixed metadata fields, in stream order.
METADATA_FIELDS = (
    ("magic", 8),
    ("version", 4),
    ("task", 2),
    ("class_count", 8),
    ("tree_count", 16),
    ("max_depth", 6),
    ("feature_count", 16),
    ("used_feature_count", 12),
    ("max_threshold_count", 12),
    ("leaf_value_count", 12),
)
METADATA_BITS = sum(bits for _, bits in METADATA_FIELDS)

_TASK_CODES = {"regression": 0, "binary": 1, "multiclass": 2}
_SECTIONS = ("metadata", "feature_map", "thresholds", "leaf_values", "trees")


class CodecError(ValueError):
    """Malformed or unencodable model; carries the section and bit offset."""

    def __init__(self, message: str, section: str = "", bit_offset: int | None = None):
        self.section = section
        self.bit_offset = bit_offset
        detail = message
        if section:
            detail += f" (section {section!r}"
            if bit_offset is not None:
                detail += f", bit offset {bit_offset}"
            detail += ")"
        super().__init__(detail)


def ceil_log2(n: int) -> int:
    """Bits needed to index n options; 0 when there is at most one."""
    return (n - 1).bit_length() if n > 1 else 0


class BitWriter:
    """MSB-first bit accumulator."""

    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nbits = 0

    def write(self, value: int, width: int) -> None:
        if width == 0:
            if value != 0:
                raise ValueError("nonzero value in zero-width field")
            return
        if not 0 <= value < (1 << width):
            raise ValueError(f"value {value} does not fit in {width} bits")
        self._acc = (self._acc << width) | value
        self._nbits += width
        while self._nbits >= 8:
            self._nbits -= 8
            self._buf.append((self._acc >> self._nbits) & 0xFF)
        self._acc &= (1 << self._nbits) - 1

    def align(self) -> None:
        if self._nbits:
            self.write(0, 8 - self._nbits)

    @property
    def bit_length(self) -> int:
        return len(self._buf) * 8 + self._nbits

    def getvalue(self) -> bytes:
        if self._nbits:
            raise ValueError("stream not byte-aligned")
        return bytes(self._buf)


class BitReader:
    """MSB-first bit cursor with section tracking for error reports."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self.section = _SECTIONS[0]

    @property
    def bit_offset(self) -> int:
        return self._pos

    def read(self, width: int) -> int:
        if width == 0:
            return 0
        if self._pos + width > len(self._data) * 8:
            raise CodecError("truncated stream", self.section, self._pos)
        value = 0
        remaining = width
        while remaining:
            byte_i, bit_i = divmod(self._pos, 8)
            take = min(8 - bit_i, remaining)
            chunk = (self._data[byte_i] >> (8 - bit_i - take)) & ((1 << take) - 1)
            value = (value << take) | chunk
            self._pos += take
            remaining -= take
        return value

    def align(self) -> None:
        self._pos = (self._pos + 7) // 8 * 8
        if self._pos > len(self._data) * 8:
            raise CodecError("truncated stream", self.section, self._pos)

    def at_end(self) -> bool:
        return self._pos == len(self._data) * 8


@dataclass(frozen=True)
class EncodedModel:
    """The deployable byte stream; every section is byte-aligned."""

    data: bytes

    @property
    def bit_length(self) -> int:
        return len(self.data) * 8


@dataclass(frozen=True)
class SizeReport:
    """Per-section bit counts (before padding) plus padded totals."""

    metadata_bits: int
    map_bits: int
    threshold_bits: int
    leaf_value_bits: int
    tree_bits: int

    @property
    def section_bits(self) -> tuple[int, ...]:
        return (
            self.metadata_bits,
            self.map_bits,
            self.threshold_bits,
            self.leaf_value_bits,
            self.tree_bits,
        )

    @property
    def padding_bits(self) -> int:
        return sum(-b % 8 for b in self.section_bits)

    @property
    def total_bits(self) -> int:
        return sum(self.section_bits) + self.padding_bits

    @property
    def total_bytes(self) -> int:
        return self.total_bits // 8


# -- threshold value packing ------------------------------------------------


def _f32_bits(v: float) -> int:
    return struct.unpack(">I", struct.pack(">f", v))[0]


def _f32_from_bits(b: int) -> float:
    return struct.unpack(">f", struct.pack(">I", b))[0]


def _f16_bits(v: float) -> int:
    return struct.unpack(">H", struct.pack(">e", v))[0]


def _f16_from_bits(b: int) -> float:
    return struct.unpack(">e", struct.pack(">H", b))[0]


def _pack_threshold(value: float, exponent: int, is_float: bool) -> int:
    """Encode one threshold; raises CodecError when the value is not
    losslessly representable at the declared width/type."""
    width = 1 << exponent
    if is_float:
        if exponent == 5:
            if _f32_from_bits(_f32_bits(value)) != value:
                raise CodecError(f"threshold {value!r} is not float32-exact")
            return _f32_bits(value)
        if exponent == 4:
            try:
                bits = _f16_bits(value)
            except (OverflowError, ValueError):
                raise CodecError(f"threshold {value!r} overflows float16") from None
            if _f16_from_bits(bits) != value:
                raise CodecError(f"threshold {value!r} is not float16-exact")
            return bits
        raise CodecError(f"float thresholds need width 16 or 32, got {width}")
    iv = int(value)
    if iv != value or not 0 <= iv < (1 << width):
        raise CodecError(
            f"threshold {value!r} is not an unsigned {width}-bit integer"
        )
    return iv


def _unpack_threshold(bits: int, exponent: int, is_float: bool) -> float:
    if is_float:
        return _f32_from_bits(bits) if exponent == 5 else _f16_from_bits(bits)
    return float(bits)


# -- size accounting ----------------------------------------------------------


def _tree_section_bits(e: Ensemble) -> int:
    fw = ceil_log2(len(e.tables.features))
    lw = ceil_log2(len(e.tables.leaf_values))
    bits = 0
    for tree in e.trees:
        for _, node in tree.level_order():
            if isinstance(node, Internal):
                count = len(e.tables.features[node.feature_ref].thresholds)
                bits += 1 + fw + ceil_log2(count)
            else:
                bits += 1 + lw
    return bits


def size_report(e: Ensemble) -> SizeReport:
    """Analytic per-section bit counts; matches encode() exactly."""
    features = e.tables.features
    max_count = max((len(f.thresholds) for f in features), default=0)
    entry_bits = ceil_log2(e.feature_count) + 3 + 1 + ceil_log2(max_count)
    return SizeReport(
        metadata_bits=METADATA_BITS,
        map_bits=len(features) * entry_bits,
        threshold_bits=sum(len(f.thresholds) * (1 << f.width_exponent) for f in features),
        leaf_value_bits=len(e.tables.leaf_values) * 32,
        tree_bits=_tree_section_bits(e),
    )


# -- encode -------------------------------------------------------------------


def _check_metadata_ranges(e: Ensemble) -> None:
    limits = {
        "tree count": (len(e.trees), 1 << 16),
        "max_depth": (e.max_depth, 1 << 6),
        "feature count": (e.feature_count, 1 << 16),
        "used feature count": (len(e.tables.features), 1 << 12),
        "threshold count per feature": (
            max((len(f.thresholds) for f in e.tables.features), default=0),
            1 << 12,
        ),
        "leaf value count": (len(e.tables.leaf_values), 1 << 12),
        "class count": (e.class_count, 1 << 8),
    }
    for name, (value, bound) in limits.items():
        if value >= bound:
            raise CodecError(f"{name} {value} exceeds the format limit {bound - 1}")


def encode(e: Ensemble) -> EncodedModel:
    """Serialize an ensemble to the packed byte stream (deterministic)."""
    validate_ensemble(e)
    _check_metadata_ranges(e)
    features = e.tables.features
    max_count = max((len(f.thresholds) for f in features), default=0)

    w = BitWriter()
    w.write(MAGIC, 8)
    w.write(VERSION, 4)
    w.write(_TASK_CODES[e.task.kind], 2)
    w.write(e.class_count, 8)
    w.write(len(e.trees), 16)
    w.write(e.max_depth, 6)
    w.write(e.feature_count, 16)
    w.write(len(features), 12)
    w.write(max_count, 12)
    w.write(len(e.tables.leaf_values), 12)
    w.align()

    idx_w = ceil_log2(e.feature_count)
    cnt_w = ceil_log2(max_count)
    for entry in features:
        w.write(entry.input_feature_index, idx_w)
        w.write(entry.width_exponent, 3)
        w.write(1 if entry.is_float else 0, 1)
        w.write(len(entry.thresholds) - 1, cnt_w)
    w.align()

    for entry in features:
        for t in entry.thresholds:
            w.write(
                _pack_threshold(t, entry.width_exponent, entry.is_float),
                1 << entry.width_exponent,
            )
    w.align()

    for v in e.tables.leaf_values:
        if _f32_from_bits(_f32_bits(v)) != v:
            raise CodecError(f"leaf value {v!r} is not float32-exact")
        w.write(_f32_bits(v), 32)
    w.align()

    fw = ceil_log2(len(features))
    lw = ceil_log2(len(e.tables.leaf_values))
    for tree in e.trees:
        for _, node in tree.level_order():
            if isinstance(node, Internal):
                w.write(0, 1)
                w.write(node.feature_ref, fw)
                count = len(features[node.feature_ref].thresholds)
                w.write(node.threshold_ref, ceil_log2(count))
            else:
                w.write(1, 1)
                w.write(node.leaf_ref, lw)
    w.align()
    return EncodedModel(w.getvalue())


# -- decode -------------------------------------------------------------------


def decode(data: bytes | EncodedModel) -> Ensemble:
    """Reconstruct an ensemble from the packed stream.

    The result predicts bit-identically to the ensemble that was encoded;
    re-encoding it reproduces the input bytes.
    """
    raw = data.data if isinstance(data, EncodedModel) else bytes(data)
    r = BitReader(raw)

    magic = r.read(8)
    if magic != MAGIC:
        raise CodecError(f"bad magic byte 0x{magic:02X}", "metadata", 0)
    version = r.read(4)
    if version != VERSION:
        raise CodecError(f"unsupported version {version}", "metadata", r.bit_offset)
    task_code = r.read(2)
    class_count = r.read(8)
    if task_code == _TASK_CODES["regression"]:
        task = REGRESSION
    elif task_code == _TASK_CODES["binary"]:
        task = BINARY
    elif task_code == _TASK_CODES["multiclass"]:
        if class_count < 3:
            raise CodecError(
                f"multiclass stream with class_count {class_count}",
                "metadata",
                r.bit_offset,
            )
        task = multiclass(class_count)
    else:
        raise CodecError(f"unknown task code {task_code}", "metadata", r.bit_offset)
    if task.kind != "multiclass" and class_count != 1:
        raise CodecError(
            f"class_count must be 1 for {task.kind}, got {class_count}",
            "metadata",
            r.bit_offset,
        )
    tree_count = r.read(16)
    max_depth = r.read(6)
    feature_count = r.read(16)
    used_features = r.read(12)
    max_count = r.read(12)
    leaf_count = r.read(12)
    r.align()

    r.section = "feature_map"
    idx_w = ceil_log2(feature_count)
    cnt_w = ceil_log2(max_count)
    entries: list[tuple[int, int, bool, int]] = []
    seen_idx: set[int] = set()
    for _ in range(used_features):
        idx = r.read(idx_w)
        if idx >= feature_count or idx in seen_idx:
            raise CodecError(
                f"invalid input feature index {idx}", r.section, r.bit_offset
            )
        seen_idx.add(idx)
        exponent = r.read(3)
        if exponent > 5:
            raise CodecError(
                f"invalid width exponent {exponent}", r.section, r.bit_offset
            )
        is_float = bool(r.read(1))
        if is_float and exponent < 4:
            raise CodecError(
                f"float threshold with width {1 << exponent}", r.section, r.bit_offset
            )
        count = r.read(cnt_w) + 1
        if count > max_count:
            raise CodecError(
                f"threshold count {count} exceeds declared maximum {max_count}",
                r.section,
                r.bit_offset,
            )
        entries.append((idx, exponent, is_float, count))
    if entries and max(c for _, _, _, c in entries) != max_count:
        raise CodecError(
            f"declared max threshold count {max_count} not attained",
            r.section,
            r.bit_offset,
        )
    if not entries and max_count != 0:
        raise CodecError(
            "nonzero max threshold count with no features", r.section, r.bit_offset
        )
    r.align()

    r.section = "thresholds"
    features = []
    for idx, exponent, is_float, count in entries:
        values = []
        for _ in range(count):
            v = _unpack_threshold(r.read(1 << exponent), exponent, is_float)
            if not np.isfinite(v):
                raise CodecError(
                    f"non-finite threshold {v!r}", r.section, r.bit_offset
                )
            values.append(float(v))
        if len(set(values)) != len(values):
            raise CodecError(
                f"duplicate threshold for feature {idx}", r.section, r.bit_offset
            )
        features.append(FeatureEntry(idx, values, exponent, is_float))
    r.align()

    r.section = "leaf_values"
    leaf_values = []
    for _ in range(leaf_count):
        v = _f32_from_bits(r.read(32))
        if not np.isfinite(v):
            raise CodecError(f"non-finite leaf value {v!r}", r.section, r.bit_offset)
        leaf_values.append(float(v))
    if len(set(leaf_values)) != len(leaf_values):
        raise CodecError("duplicate leaf value", r.section, r.bit_offset)
    r.align()

    r.section = "trees"
    fw = ceil_log2(len(features))
    lw = ceil_log2(len(leaf_values))
    trees = []
    for k in range(tree_count):
        nodes: dict[int, Internal | Leaf] = {}
        queue = [0]
        while queue:
            i = queue.pop(0)
            if heap_depth(i) > max_depth:
                raise CodecError(
                    f"tree {k} deeper than declared max depth {max_depth}",
                    r.section,
                    r.bit_offset,
                )
            tag = r.read(1)
            if tag == 0:
                fref = r.read(fw)
                if fref >= len(features):
                    raise CodecError(
                        f"feature reference {fref} out of range",
                        r.section,
                        r.bit_offset,
                    )
                tref = r.read(ceil_log2(len(features[fref].thresholds)))
                if tref >= len(features[fref].thresholds):
                    raise CodecError(
                        f"threshold reference {tref} out of range",
                        r.section,
                        r.bit_offset,
                    )
                nodes[i] = Internal(fref, tref)
                queue.append(2 * i + 1)
                queue.append(2 * i + 2)
            else:
                lref = r.read(lw)
                if lref >= len(leaf_values):
                    raise CodecError(
                        f"leaf reference {lref} out of range", r.section, r.bit_offset
                    )
                nodes[i] = Leaf(lref)
        trees.append(Tree(nodes))
    r.align()
    if not r.at_end():
        raise CodecError("trailing data after trees", r.section, r.bit_offset)

    e = Ensemble(
        trees=trees,
        tables=GlobalTables(features, leaf_values),
        task=task,
        max_depth=max_depth,
        feature_count=feature_count,
        class_count=class_count,
        base_score=0.0,
        learning_rate=1.0,
    )
    validate_ensemble(e)
    return e


# -- width selection ----------------------------------------------------------

_WIDTH_ATTEMPTS = (
    (0, False),
    (1, False),
    (2, False),
    (3, False),
    (4, False),
    (4, True),
    (5, False),
    (5, True),
)


def _f16_next_up(x: float) -> float:
    bits = struct.unpack(">H", struct.pack(">e", np.float16(x)))[0]
    if bits == 0x8000:  # -0.0
        bits = 0x0001
    elif bits & 0x8000:
        bits -= 1
    else:
        bits += 1
    return _f16_from_bits(bits)


def _float_in_range(lo: float, hi: float, mu: float, exponent: int) -> float | None:
    """A float of the given width with lo <= r < hi, preferring the rounding
    of mu itself; None when the interval holds no representable value."""
    with np.errstate(over="ignore"):
        if exponent == 5:
            rounded = float(np.float32(mu))
            ceil_lo = float(np.float32(lo))
            if ceil_lo < lo:
                ceil_lo = float(np.nextafter(np.float32(ceil_lo), np.float32(np.inf)))
        else:
            rounded = float(np.float16(mu))
            ceil_lo = float(np.float16(lo))
            if ceil_lo < lo:
                ceil_lo = _f16_next_up(ceil_lo)
    if np.isfinite(rounded) and lo <= rounded < hi:
        return rounded
    if np.isfinite(ceil_lo) and lo <= ceil_lo < hi:
        return ceil_lo
    return None


def _int_in_range(lo: float, hi: float, mu: float, exponent: int) -> float | None:
    """An unsigned integer of the given width inside [lo, hi), as close to
    floor(mu) as the admissible range allows; None when there is none."""
    smallest = max(float(np.ceil(lo)), 0.0)
    largest = min(float(np.ceil(hi)) - 1.0, float((1 << (1 << exponent)) - 1))
    if smallest > largest:
        return None
    return float(min(max(np.floor(mu), smallest), largest))


def select_width(
    thresholds: list[float], sorted_values: np.ndarray
) -> tuple[int, bool, list[float]]:
    """Pick the smallest storage width whose quantized thresholds route every
    training value of this feature exactly like the originals.

    ``sorted_values`` holds the distinct observed values of the feature. A
    quantized threshold q routes like mu iff lo <= q < hi, where lo/hi are
    the neighbors of mu among the observed values. Integer storage is
    unsigned, so negative representatives disqualify integer widths.
    """
    bounds = []
    for mu in thresholds:
        i = int(np.searchsorted(sorted_values, mu, side="right"))
        if i == 0 or i == len(sorted_values):
            bounds = None
            break
        bounds.append((float(sorted_values[i - 1]), float(sorted_values[i])))
    if bounds is not None:
        for exponent, is_float in _WIDTH_ATTEMPTS:
            picker = _float_in_range if is_float else _int_in_range
            quantized = []
            for mu, (lo, hi) in zip(thresholds, bounds):
                q = picker(lo, hi, mu, exponent)
                if q is None:
                    break
                quantized.append(0.0 if q == 0.0 else q)
            else:
                return exponent, is_float, quantized
    # No routing-preserving width found (pathological float64 spacing):
    # store nearest float32 values.
    fallback = [float(np.float32(mu)) for mu in thresholds]
    if len(set(fallback)) != len(fallback):
        raise CodecError("thresholds collide at float32 precision")
    return 5, True, fallback


def finalize_layout(
    e: Ensemble,
    X: np.ndarray,
    unique_columns: dict[int, np.ndarray] | None = None,
) -> Ensemble:
    """Return a copy of the ensemble with per-feature widths selected and
    thresholds quantized, using the training features for routing replay.

    ``unique_columns`` may carry precomputed ``np.unique`` results per input
    feature index to avoid re-sorting on repeated calls.
    """
    features = []
    for entry in e.tables.features:
        j = entry.input_feature_index
        col = unique_columns[j] if unique_columns is not None else np.unique(X[:, j])
        exponent, is_float, quantized = select_width(entry.thresholds, col)
        features.append(FeatureEntry(j, quantized, exponent, is_float))
    tables = GlobalTables(features, list(e.tables.leaf_values))
    return replace(e, tables=tables)


# -- file helpers -------------------------------------------------------------


def write_model(e: Ensemble, path: str | Path) -> EncodedModel:
    encoded = encode(e)
    Path(path).write_bytes(encoded.data)
    return encoded


def read_model(path: str | Path) -> Ensemble:
    return decode(Path(path).read_bytes())
