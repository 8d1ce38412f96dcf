"""Raster data model, index arithmetic, and shared configuration records.

A scene is a pair (HSICube, GroundTruth) over the same rows x cols grid.
Pixels are addressed either by (row, col) or by a row-major linear index;
all persisted index lists use the linear form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FormatError(ValueError):
    """A file cannot be parsed or fails its format's integrity rules."""


class ValidationError(ValueError):
    """Data-level failure: bad configuration, inconsistent splits, coverage gaps."""


class ConfigError(ValidationError):
    """A configuration record violates its own invariants."""


class CorruptSplitError(ValidationError):
    """A split violates disjointness, completeness, or label consistency."""


class WrongDatasetError(ValidationError):
    """A split file does not belong to the supplied ground truth."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class HSICube:
    """Dense reflectance raster of shape (rows, cols, bands), float32.

    The array is C-contiguous, so each pixel's spectrum is a contiguous
    run of `bands` values (pixel-interleaved layout). Instances are
    read-only after construction and safe to share across threads.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 3:
            raise ValidationError(f"cube must be 3-d (rows, cols, bands), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValidationError(f"cube dimensions must all be >= 1, got {arr.shape}")
        arr = arr.astype(np.float32, copy=not isinstance(self.values, np.ndarray))
        if not np.all(np.isfinite(arr)):
            raise ValidationError("cube contains NaN or Inf values")
        object.__setattr__(self, "values", _freeze(arr))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class GroundTruth:
    """Per-pixel integer class labels of shape (rows, cols); 0 = background."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise ValidationError(f"ground truth must be 2-d (rows, cols), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValidationError(f"ground truth dimensions must all be >= 1, got {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValidationError(f"ground truth labels must be integers, got dtype {arr.dtype}")
        if arr.min() < 0:
            raise ValidationError("ground truth labels must be non-negative")
        object.__setattr__(self, "labels", _freeze(arr.astype(np.int32)))

    @property
    def rows(self) -> int:
        return self.labels.shape[0]

    @property
    def cols(self) -> int:
        return self.labels.shape[1]

    def matches(self, cube: HSICube) -> bool:
        return (self.rows, self.cols) == (cube.rows, cube.cols)


@dataclass(frozen=True)
class PatchSpec:
    """Square sliding-window geometry: side length `window`, margin = window // 2.

    A patch centered at (r, c) covers rows [r - margin, r - margin + window - 1]
    and the analogous column span; for odd windows that span is symmetric about
    the center, for even windows it extends one cell further up/left than
    down/right. Cells outside the raster are zero-filled.
    """

    window: int

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")

    @property
    def margin(self) -> int:
        return self.window // 2


_SEED_LIMIT = 2**64


@dataclass(frozen=True)
class SplitConfig:
    """Ratios and seed driving the per-class disjoint split.

    test_ratio is the share of each class sent to the test set; val_ratio is
    the share of the *remainder* sent to validation. The same config on the
    same ground truth always yields a byte-identical split.
    """

    test_ratio: float
    val_ratio: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.test_ratio < 1.0:
            raise ConfigError(f"test_ratio must be in (0, 1), got {self.test_ratio}")
        if not 0.0 < self.val_ratio < 1.0:
            raise ConfigError(f"val_ratio must be in (0, 1), got {self.val_ratio}")
        if not 0 <= int(self.seed) < _SEED_LIMIT:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def to_linear(row: int, col: int, cols: int) -> int:
    """Row-major linear index of (row, col) in a raster with `cols` columns."""
    if cols < 1:
        raise IndexError(f"cols must be >= 1, got {cols}")
    if row < 0 or col < 0 or col >= cols:
        raise IndexError(f"pixel ({row}, {col}) out of range for cols={cols}")
    return row * cols + col


def from_linear(idx: int, cols: int) -> tuple[int, int]:
    """Inverse of to_linear: (row, col) of a row-major linear index."""
    if cols < 1:
        raise IndexError(f"cols must be >= 1, got {cols}")
    if idx < 0:
        raise IndexError(f"linear index must be >= 0, got {idx}")
    return divmod(idx, cols)


def spectral_vector(cube: HSICube, idx: int) -> np.ndarray:
    """The `bands` reflectance values of the pixel at linear index `idx`."""
    n = cube.rows * cube.cols
    if not 0 <= idx < n:
        raise IndexError(f"linear index {idx} out of range for {cube.rows}x{cube.cols} raster")
    return cube.values.reshape(n, cube.bands)[idx]
