"""Zero-padded sliding-window patch extraction with center-pixel labels.

Every pixel of the raster yields one window x window x bands patch; cells of
the window that fall outside the raster are exactly zero. Iteration is
streaming: working memory is one padded row block of shape
(window, cols + window - 1, bands), independent of the raster height, rather
than the rows*cols*window^2*bands array a full materialization would need.
"""

from __future__ import annotations

import gc
import time
import tracemalloc
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .core import GroundTruth, HSICube, PatchSpec, ValidationError, from_linear


@dataclass(frozen=True)
class PatchRecord:
    """One window: center (row, col), the center pixel's label, and values."""

    center: tuple[int, int]
    label: int
    values: np.ndarray  # (window, window, bands) float32


@dataclass(frozen=True)
class PatchSet:
    """Materialized patches, in the order they were requested."""

    spec: PatchSpec
    records: list[PatchRecord]

    def __len__(self) -> int:
        return len(self.records)


def _check_pair(cube: HSICube, gt: GroundTruth) -> None:
    if not gt.matches(cube):
        raise ValidationError(
            f"ground truth {gt.rows}x{gt.cols} does not match cube {cube.rows}x{cube.cols}"
        )


def extract_patch(
    cube: HSICube, gt: GroundTruth, row: int, col: int, spec: PatchSpec
) -> PatchRecord:
    """Extract the window centered at (row, col).

    The window spans rows [row - margin, row - margin + window - 1] and the
    analogous columns; out-of-raster cells are zero.
    """
    _check_pair(cube, gt)
    if not (0 <= row < cube.rows and 0 <= col < cube.cols):
        raise IndexError(f"center ({row}, {col}) out of range for {cube.rows}x{cube.cols} raster")
    ws, m = spec.window, spec.margin
    out = np.zeros((ws, ws, cube.bands), dtype=np.float32)
    r0, c0 = row - m, col - m
    rs, re = max(r0, 0), min(r0 + ws, cube.rows)
    cs, ce = max(c0, 0), min(c0 + ws, cube.cols)
    if rs < re and cs < ce:
        out[rs - r0 : re - r0, cs - c0 : ce - c0] = cube.values[rs:re, cs:ce]
    return PatchRecord((row, col), int(gt.labels[row, col]), out)


def iter_patches(cube: HSICube, gt: GroundTruth, spec: PatchSpec) -> Iterator[PatchRecord]:
    """Yield one patch per pixel in row-major order (rows * cols total).

    Maintains a single zero-padded block of `window` raster rows and slides
    the column window across it, so peak extra memory is O(window*cols*bands).
    """
    _check_pair(cube, gt)
    rows, cols, bands = cube.rows, cube.cols, cube.bands
    ws, m = spec.window, spec.margin
    # Padded column c + m corresponds to raster column c; the outer m and
    # ws - 1 - m columns are never written and stay zero.
    block = np.zeros((ws, cols + ws - 1, bands), dtype=np.float32)
    labels = gt.labels
    for r in range(rows):
        r0 = r - m
        for i in range(ws):
            src = r0 + i
            if 0 <= src < rows:
                block[i, m : m + cols] = cube.values[src]
            else:
                block[i, m : m + cols] = 0.0
        for c in range(cols):
            yield PatchRecord((r, c), int(labels[r, c]), block[:, c : c + ws].copy())


def gather_patches(
    cube: HSICube, gt: GroundTruth, indices: Sequence[int], spec: PatchSpec
) -> PatchSet:
    """Materialize the patches at the given linear indices, in the given order."""
    seen = set()
    for idx in indices:
        if idx in seen:
            raise ValidationError(f"duplicate linear index {idx} in patch request")
        seen.add(idx)
    records = []
    for idx in indices:
        row, col = from_linear(int(idx), cube.cols)
        records.append(extract_patch(cube, gt, row, col, spec))
    return PatchSet(spec, records)


def flatten_patch(patch: PatchRecord) -> np.ndarray:
    """Flatten to a vector of length window*window*bands in (row, col, band) order."""
    return np.ascontiguousarray(patch.values).reshape(-1)


@dataclass(frozen=True)
class StreamBenchResult:
    patches: int
    peak_extra_bytes: int
    seconds: float

    @property
    def peak_extra_mib(self) -> float:
        return self.peak_extra_bytes / 2**20


def measure_stream_memory(cube: HSICube, gt: GroundTruth, spec: PatchSpec) -> StreamBenchResult:
    """Iterate every patch under tracemalloc and report peak extra allocation.

    Tracing starts after the inputs exist, so the reported peak covers only
    memory the iteration itself allocates.
    """
    gc.collect()
    tracemalloc.start()
    t0 = time.perf_counter()
    try:
        count = 0
        for _ in iter_patches(cube, gt, spec):
            count += 1
        elapsed = time.perf_counter() - t0
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return StreamBenchResult(count, peak, elapsed)
