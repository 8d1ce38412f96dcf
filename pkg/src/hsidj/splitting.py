"""Seeded per-class disjoint train/validation/test splitting.

For each class label (zeros excluded), the class's pixel indices are
shuffled by a seeded portable permutation and cut in two stages: a test
share first, then a validation share of the remainder, the rest training.
Counts use ceiling rounding:

    te = ceil(n * test_ratio)
    va = ceil((n - te) * val_ratio)
    tr = n - te - va

with the ratios read as exact decimal fractions (0.7 means 7/10, not the
nearest binary float), so the counts are platform-independent integers.

The shuffle is a Fisher-Yates pass driven by splitmix64 so that a split is
reproducible from (ground truth, seed, ratios) alone, on any platform and
in any implementation:

* splitmix64: state advances by 0x9E3779B97F4A7C15 per draw (mod 2**64);
  each output is mix64(state) where mix64 is
  ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31`` (all mod 2**64).
* per-class stream: initial state = mix64(mix64(seed) ^ mix64(label)).
* shuffle: for i from n-1 down to 1, swap positions i and j where
  j = next_output % (i + 1). The modulo draw's bias is below 2**-40 for
  any class smaller than 2**24 pixels.
* the class's indices enter the shuffle in ascending (row-major) order;
  after shuffling, the first te go to test, the next va to validation,
  and the remainder to training.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import (
    CorruptSplitError,
    FormatError,
    GroundTruth,
    SplitConfig,
    ValidationError,
    WrongDatasetError,
)

SPLIT_FILE_VERSION = 1

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class ClassTooSmallError(ValidationError):
    """A class has too few pixels to give every set at least one sample."""


class EmptyGroundTruthError(ValidationError):
    """The ground truth contains no labeled (nonzero) pixels."""


def mix64(z: int) -> int:
    """The splitmix64 output scrambler (Stafford variant 13)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Minimal splitmix64 stream; see the module docstring for constants."""

    def __init__(self, state: int):
        self._state = state & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return mix64(self._state)

    def below(self, bound: int) -> int:
        return self.next_u64() % bound


def class_stream(seed: int, label: int) -> SplitMix64:
    return SplitMix64(mix64(mix64(seed) ^ mix64(label)))


def fisher_yates(items: list[int], rng: SplitMix64) -> list[int]:
    """Seeded in-order Fisher-Yates shuffle (descending index form)."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = rng.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def _exact_ratio(ratio: float) -> Fraction:
    # repr() of a float is the shortest decimal that round-trips, so a
    # user-entered 0.7 becomes exactly 7/10 here.
    return Fraction(repr(float(ratio)))


def split_counts(n: int, test_ratio: float, val_ratio: float) -> tuple[int, int, int]:
    """Per-class (train, val, test) counts for a class of n pixels."""
    if not 0.0 < test_ratio < 1.0 or not 0.0 < val_ratio < 1.0:
        raise ValidationError(
            f"ratios must be in (0, 1), got test_ratio={test_ratio} val_ratio={val_ratio}"
        )
    if n < 3:
        raise ClassTooSmallError(f"{n} pixels cannot fill three non-empty sets")
    te = math.ceil(n * _exact_ratio(test_ratio))
    va = math.ceil((n - te) * _exact_ratio(val_ratio))
    tr = n - te - va
    if tr < 1 or va < 1 or te < 1:
        raise ClassTooSmallError(
            f"{n} pixels split into (train={tr}, val={va}, test={te}) leaves an empty set"
        )
    return tr, va, te


def class_histogram(gt: GroundTruth) -> list[tuple[int, int]]:
    """(label, count) for every nonzero label, ascending by label."""
    labels, counts = np.unique(gt.labels, return_counts=True)
    out = [(int(l), int(c)) for l, c in zip(labels, counts) if l != 0]
    if not out:
        raise EmptyGroundTruthError("ground truth has no nonzero labels")
    return out


def gt_fingerprint(gt: GroundTruth) -> str:
    """64-bit FNV-1a over rows, cols, then the row-major labels.

    Byte stream: rows and cols as unsigned 32-bit little-endian, then each
    label as unsigned 32-bit little-endian in row-major order. Offset basis
    0xcbf29ce484222325, prime 0x100000001b3. Rendered as 16 lowercase hex
    digits.
    """
    data = struct.pack("<II", gt.rows, gt.cols) + gt.labels.astype("<u4").tobytes()
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return f"{h:016x}"


@dataclass(frozen=True)
class ClassSplit:
    label: int
    train: list[int]
    val: list[int]
    test: list[int]

    @property
    def total(self) -> int:
        return len(self.train) + len(self.val) + len(self.test)


@dataclass(frozen=True)
class SplitIndices:
    """Per-class disjoint index lists plus the provenance to reproduce them."""

    classes: list[ClassSplit]  # ascending by label
    rows: int
    cols: int
    seed: int
    test_ratio: float
    val_ratio: float
    gt_fingerprint: str

    def train_indices(self) -> list[int]:
        return [i for c in self.classes for i in c.train]

    def val_indices(self) -> list[int]:
        return [i for c in self.classes for i in c.val]

    def test_indices(self) -> list[int]:
        return [i for c in self.classes for i in c.test]

    def labeled_indices(self) -> list[int]:
        return [i for c in self.classes for part in (c.train, c.val, c.test) for i in part]

    def labels(self) -> list[int]:
        return [c.label for c in self.classes]


def disjoint_split(gt: GroundTruth, cfg: SplitConfig) -> SplitIndices:
    """Split every class's pixels into disjoint train/val/test index lists."""
    flattened = gt.labels.ravel()
    classes = []
    for label, count in class_histogram(gt):
        try:
            tr, va, te = split_counts(count, cfg.test_ratio, cfg.val_ratio)
        except ClassTooSmallError as exc:
            raise ClassTooSmallError(f"class {label}: {exc}") from None
        indices = np.flatnonzero(flattened == label).tolist()
        shuffled = fisher_yates(indices, class_stream(cfg.seed, label))
        classes.append(
            ClassSplit(
                label=label,
                test=shuffled[:te],
                val=shuffled[te : te + va],
                train=shuffled[te + va :],
            )
        )
    return SplitIndices(
        classes=classes,
        rows=gt.rows,
        cols=gt.cols,
        seed=cfg.seed,
        test_ratio=cfg.test_ratio,
        val_ratio=cfg.val_ratio,
        gt_fingerprint=gt_fingerprint(gt),
    )


def save_splits(s: SplitIndices, path: str | os.PathLike) -> None:
    """Write a split as deterministic JSON (sorted keys, 2-space indent)."""
    doc = {
        "version": SPLIT_FILE_VERSION,
        "seed": s.seed,
        "test_ratio": s.test_ratio,
        "val_ratio": s.val_ratio,
        "rows": s.rows,
        "cols": s.cols,
        "gt_fingerprint": s.gt_fingerprint,
        "classes": [
            {"label": c.label, "train": c.train, "val": c.val, "test": c.test}
            for c in s.classes
        ],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _structural_check(s: SplitIndices) -> None:
    n_pixels = s.rows * s.cols
    seen: set[int] = set()
    prev_label = 0
    for c in s.classes:
        if c.label <= prev_label:
            raise CorruptSplitError(f"class labels must be ascending and unique, got {c.label}")
        prev_label = c.label
        if not c.train or not c.val or not c.test:
            raise CorruptSplitError(f"class {c.label}: every set must be non-empty")
        for part_name, part in (("train", c.train), ("val", c.val), ("test", c.test)):
            for idx in part:
                if not 0 <= idx < n_pixels:
                    raise CorruptSplitError(
                        f"class {c.label} {part_name}: index {idx} out of range [0, {n_pixels})"
                    )
                if idx in seen:
                    raise CorruptSplitError(
                        f"index {idx} appears more than once (class {c.label} {part_name})"
                    )
                seen.add(idx)


def _gt_check(s: SplitIndices, gt: GroundTruth) -> None:
    if (gt.rows, gt.cols) != (s.rows, s.cols):
        raise WrongDatasetError(
            f"split is for a {s.rows}x{s.cols} raster, ground truth is {gt.rows}x{gt.cols}"
        )
    fp = gt_fingerprint(gt)
    if fp != s.gt_fingerprint:
        raise WrongDatasetError(
            f"ground truth fingerprint {fp} does not match split fingerprint {s.gt_fingerprint}"
        )
    flattened = gt.labels.ravel()
    covered = 0
    for c in s.classes:
        for idx in c.train + c.val + c.test:
            if int(flattened[idx]) != c.label:
                raise CorruptSplitError(
                    f"index {idx} is listed under class {c.label} but has label {flattened[idx]}"
                )
            covered += 1
    if covered != int(np.count_nonzero(flattened)):
        raise CorruptSplitError(
            f"split covers {covered} pixels but ground truth has "
            f"{int(np.count_nonzero(flattened))} labeled pixels"
        )


def load_splits(path: str | os.PathLike, gt: GroundTruth | None = None) -> SplitIndices:
    """Load a split file, re-verifying its invariants (and the ground truth
    fingerprint, label consistency, and completeness when `gt` is given)."""
    try:
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from None
    try:
        if doc["version"] != SPLIT_FILE_VERSION:
            raise FormatError(f"{path}: unsupported split file version {doc['version']}")
        s = SplitIndices(
            classes=[
                ClassSplit(
                    label=int(c["label"]),
                    train=[int(i) for i in c["train"]],
                    val=[int(i) for i in c["val"]],
                    test=[int(i) for i in c["test"]],
                )
                for c in doc["classes"]
            ],
            rows=int(doc["rows"]),
            cols=int(doc["cols"]),
            seed=int(doc["seed"]),
            test_ratio=float(doc["test_ratio"]),
            val_ratio=float(doc["val_ratio"]),
            gt_fingerprint=str(doc["gt_fingerprint"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed split file: {exc!r}") from None
    _structural_check(s)
    if gt is not None:
        _gt_check(s, gt)
    return s
