"""Synthetic post-placement feature maps with oracle hotspot labels.

Each map carries three feature channels scaled to [0, 1]:

  0. pin density      -- sum of random Gaussian blobs
  1. macro regions    -- union of random axis-aligned rectangles (0/1 mask)
  2. net crossings    -- twice box-blurred white noise

The congestion score is, by definition, the 3x3 zero-padded box blur of
``0.6*pins + 0.3*pins*macros + 0.1*crossings`` computed in float64 from the
stored float32 features, accumulated in row-major offset order. Labels mark
the ceil(q*H*W) highest-score pixels (ties broken by pixel index), so the
positive fraction equals the hotspot quantile exactly and labels are
recomputable from the features alone.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfig, FormatError, IoError
from .rng import RngStream, root

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = {TRAIN: "train", VAL: "val", TEST: "test"}

N_PIN_BLOBS = 6
N_MACROS = 3
PIN_WEIGHT, MACRO_WEIGHT, CROSSING_WEIGHT = 0.6, 0.3, 0.1

DATASET_MAGIC = b"SRDS"
DATASET_VERSION = 1


@dataclass
class PlacementMap:
    features: np.ndarray  # (C, H, W) float32 in [0, 1]
    labels: np.ndarray  # (H, W) uint8 in {0, 1}

    def same_as(self, other: "PlacementMap") -> bool:
        return np.array_equal(self.features, other.features) and np.array_equal(
            self.labels, other.labels
        )


@dataclass
class PlacementDataset:
    maps: list[PlacementMap]
    split_tags: np.ndarray = field(default=None)  # uint8 per map
    seed: int = 0

    def __post_init__(self):
        if self.split_tags is None:
            self.split_tags = np.zeros(len(self.maps), dtype=np.uint8)

    @property
    def shape(self):
        c, h, w = self.maps[0].features.shape
        return len(self.maps), c, h, w

    def indices(self, tag: int) -> list[int]:
        return [i for i, t in enumerate(self.split_tags) if t == tag]

    def subset(self, tag: int) -> list[PlacementMap]:
        return [self.maps[i] for i in self.indices(tag)]

    def same_maps(self, other: "PlacementDataset") -> bool:
        return len(self.maps) == len(other.maps) and all(
            a.same_as(b) for a, b in zip(self.maps, other.maps)
        )


def box_blur3(field_2d: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 mean; terms accumulated in row-major offset order."""
    h, w = field_2d.shape
    padded = np.pad(field_2d, 1)
    acc = np.zeros((h, w), dtype=field_2d.dtype)
    for dy in range(3):
        for dx in range(3):
            acc += padded[dy : dy + h, dx : dx + w]
    return acc / 9.0


def _minmax01(field_2d: np.ndarray) -> np.ndarray:
    lo = field_2d.min()
    hi = field_2d.max()
    if hi == lo:
        return np.zeros_like(field_2d)
    return (field_2d - lo) / (hi - lo)


def _pin_field(gen: np.random.Generator, h: int, w: int) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.zeros((h, w), dtype=np.float64)
    for _ in range(N_PIN_BLOBS):
        cy = gen.uniform(0, h - 1)
        cx = gen.uniform(0, w - 1)
        sigma = gen.uniform(1.5, 5.0)
        amp = gen.uniform(0.4, 1.0)
        out += amp * np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2.0 * sigma * sigma))
    return _minmax01(out)


def _macro_mask(gen: np.random.Generator, h: int, w: int) -> np.ndarray:
    out = np.zeros((h, w), dtype=np.float64)
    for _ in range(N_MACROS):
        mh = int(gen.integers(4, max(5, h // 3) + 1))
        mw = int(gen.integers(4, max(5, w // 3) + 1))
        y0 = int(gen.integers(0, max(1, h - mh + 1)))
        x0 = int(gen.integers(0, max(1, w - mw + 1)))
        out[y0 : y0 + mh, x0 : x0 + mw] = 1.0
    return out


def _crossing_field(gen: np.random.Generator, h: int, w: int) -> np.ndarray:
    noise = gen.uniform(0.0, 1.0, size=(h, w))
    return _minmax01(box_blur3(box_blur3(noise)))


def congestion_score(features: np.ndarray) -> np.ndarray:
    """Float64 congestion score of a (3, H, W) feature raster."""
    pins = features[0].astype(np.float64)
    macros = features[1].astype(np.float64)
    crossings = features[2].astype(np.float64)
    base = PIN_WEIGHT * pins + MACRO_WEIGHT * pins * macros + CROSSING_WEIGHT * crossings
    return box_blur3(base)


def hotspot_count(quantile: float, h: int, w: int) -> int:
    return math.ceil(quantile * h * w)


def _labels_from_score(score: np.ndarray, quantile: float) -> np.ndarray:
    h, w = score.shape
    m = hotspot_count(quantile, h, w)
    order = np.argsort(-score.ravel(), kind="stable")
    labels = np.zeros(h * w, dtype=np.uint8)
    labels[order[:m]] = 1
    return labels.reshape(h, w)


def generate(
    seed: int,
    n_maps: int,
    height: int,
    width: int,
    hotspot_quantile: float,
) -> PlacementDataset:
    """Seeded dataset; each map drawn from its own (seed, index) stream."""
    if n_maps < 1 or height < 4 or width < 4:
        raise BadConfig("need n_maps >= 1 and maps at least 4x4")
    if not 0.0 < hotspot_quantile <= 0.5:
        raise BadConfig("hotspot_quantile must lie in (0, 0.5]")
    stream = root(seed).child("synthroute")
    maps = []
    for idx in range(n_maps):
        gen = stream.child("map", idx).generator()
        pins = _pin_field(gen, height, width)
        macros = _macro_mask(gen, height, width)
        crossings = _crossing_field(gen, height, width)
        features = np.stack([pins, macros, crossings]).astype(np.float32)
        labels = _labels_from_score(congestion_score(features), hotspot_quantile)
        maps.append(PlacementMap(features=features, labels=labels))
    return PlacementDataset(maps=maps, seed=seed)


def write_dataset(dataset: PlacementDataset, path) -> None:
    n, c, h, w = dataset.shape
    chunks = [DATASET_MAGIC, struct.pack("<IIHHB", DATASET_VERSION, n, h, w, c)]
    for pm in dataset.maps:
        chunks.append(np.ascontiguousarray(pm.features, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(pm.labels, dtype=np.uint8).tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(chunks))
    except OSError as exc:
        raise IoError(f"cannot write dataset to {path}: {exc}") from exc


def _need(buf: bytes, offset: int, count: int, what: str):
    if offset + count > len(buf):
        raise FormatError(f"truncated dataset: need {what} at offset {offset}")
    return buf[offset : offset + count], offset + count


def read_dataset(path) -> PlacementDataset:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read dataset from {path}: {exc}") from exc
    chunk, off = _need(buf, 0, 4, "magic")
    if chunk != DATASET_MAGIC:
        raise FormatError(f"bad magic {chunk!r}")
    chunk, off = _need(buf, off, 13, "header")
    version, n, h, w, c = struct.unpack("<IIHHB", chunk)
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    maps = []
    for _ in range(n):
        chunk, off = _need(buf, off, 4 * c * h * w, "features")
        features = np.frombuffer(chunk, dtype="<f4").reshape(c, h, w).copy()
        chunk, off = _need(buf, off, h * w, "labels")
        labels = np.frombuffer(chunk, dtype=np.uint8).reshape(h, w).copy()
        maps.append(PlacementMap(features=features, labels=labels))
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes at offset {off}")
    return PlacementDataset(maps=maps)


def split(dataset: PlacementDataset, fractions, seed: int) -> PlacementDataset:
    """Seeded shuffle then partition; floor counts, remainder to train."""
    if len(fractions) != 3:
        raise BadConfig("fractions must be (train, val, test)")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise BadConfig(f"fractions must be nonnegative and sum to 1, got {fractions}")
    n = len(dataset.maps)
    n_val = math.floor(fractions[1] * n + 1e-9)
    n_test = math.floor(fractions[2] * n + 1e-9)
    n_train = n - n_val - n_test
    gen = root(seed).child("split").generator()
    perm = gen.permutation(n)
    tags = np.zeros(n, dtype=np.uint8)
    tags[perm[n_train : n_train + n_val]] = VAL
    tags[perm[n_train + n_val :]] = TEST
    return PlacementDataset(maps=dataset.maps, split_tags=tags, seed=dataset.seed)


def stack_features(maps: list[PlacementMap]) -> np.ndarray:
    return np.stack([m.features for m in maps]).astype(np.float32)


def stack_labels(maps: list[PlacementMap]) -> np.ndarray:
    return np.stack([m.labels for m in maps])
