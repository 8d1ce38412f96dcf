"""Thematic map rendering: class rasters to binary PPM images.

Maps show where a classifier was actually evaluated. Pixels outside the
rendered domain stay palette index 0 (black), so a val-only or test-only map
makes the sparsity of an honest evaluation visible at a glance.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import FormatError, GroundTruth, ValidationError
from .splitting import SplitIndices

MAP_MODES = ("val_only", "test_only", "full_labeled", "full_scene")

# Index 0 is reserved black for background and unevaluated pixels; the class
# colors are a high-contrast set that stays distinguishable when tiled.
DEFAULT_PALETTE: tuple[tuple[int, int, int], ...] = (
    (0, 0, 0),
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (220, 190, 255),
    (170, 110, 40),
    (255, 250, 200),
    (128, 0, 0),
    (170, 255, 195),
    (128, 128, 0),
    (255, 215, 180),
    (0, 0, 128),
    (128, 128, 128),
)


def check_palette(palette: tuple[tuple[int, int, int], ...]) -> None:
    if len(palette) < 2:
        raise ValidationError("palette needs the background entry plus at least one class color")
    if palette[0] != (0, 0, 0):
        raise ValidationError("palette index 0 must be black (reserved for background)")
    for i, color in enumerate(palette):
        if len(color) != 3 or any(not 0 <= ch <= 255 for ch in color):
            raise ValidationError(f"palette entry {i} is not an 8-bit RGB triple: {color}")
    class_colors = palette[1:]
    if len(set(class_colors)) != len(class_colors):
        raise ValidationError("class colors must be pairwise distinct")


@dataclass(frozen=True)
class ThematicMap:
    """Palette-index raster plus the domain mode it was rendered under."""

    indices: np.ndarray  # (rows, cols) int32 palette indices
    mode: str


def truth_predictions(gt: GroundTruth, include_background: bool = False) -> dict[int, int]:
    """Identity predictions straight from the ground truth, for GT renders."""
    flat = gt.labels.ravel()
    if include_background:
        return {i: int(flat[i]) for i in range(flat.size)}
    return {int(i): int(flat[i]) for i in np.flatnonzero(flat)}


def _domain(gt: GroundTruth, splits: SplitIndices | None, mode: str) -> list[int]:
    if mode in ("val_only", "test_only"):
        if splits is None:
            raise ValidationError(f"mode {mode!r} needs split indices")
        return splits.val_indices() if mode == "val_only" else splits.test_indices()
    if mode == "full_labeled":
        return np.flatnonzero(gt.labels.ravel()).tolist()
    if mode == "full_scene":
        return list(range(gt.labels.size))
    raise ValidationError(f"unknown map mode {mode!r}; expected one of {MAP_MODES}")


def render(
    gt: GroundTruth,
    splits: SplitIndices | None,
    predictions: Mapping[int, int],
    mode: str,
) -> ThematicMap:
    """Paint predicted labels over the mode's pixel domain; elsewhere stays 0.

    Every domain pixel must have a prediction; missing ones are reported as
    an error (first few quoted) rather than silently painted black, since a
    hole in the map and an unevaluated pixel must stay distinguishable.
    """
    domain = _domain(gt, splits, mode)
    missing = [i for i in domain if i not in predictions]
    if missing:
        raise ValidationError(
            f"{len(missing)} domain pixels have no prediction in mode {mode!r}; "
            f"first missing: {missing[:10]}"
        )
    rows, cols = gt.labels.shape
    out = np.zeros(rows * cols, dtype=np.int32)
    for i in domain:
        label = int(predictions[i])
        if label < 0:
            raise ValidationError(f"negative class label {label} at pixel {i}")
        out[i] = label
    return ThematicMap(indices=out.reshape(rows, cols), mode=mode)


def write_ppm(
    tmap: ThematicMap,
    path: str | Path,
    palette: tuple[tuple[int, int, int], ...] = DEFAULT_PALETTE,
) -> None:
    """Write a binary PPM (P6, maxval 255) colored through the palette."""
    check_palette(palette)
    top = int(tmap.indices.max())
    if top >= len(palette):
        raise ValidationError(
            f"map uses palette index {top} but the palette has {len(palette)} entries"
        )
    lut = np.asarray(palette, dtype=np.uint8)
    rgb = lut[tmap.indices]
    rows, cols = tmap.indices.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P6\n{cols} {rows}\n255\n".encode("ascii"))
            fh.write(rgb.tobytes())
    except OSError as exc:
        raise OSError(f"writing PPM {path}: {exc}") from exc


def read_ppm(path: str | Path) -> np.ndarray:
    """Read back a binary PPM into an (rows, cols, 3) uint8 array."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if len(fields) < 4 or fields[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM")
    cols, rows, maxval = (int(f) for f in fields[1:4])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    payload = data[pos + 1 :]
    expected = rows * cols * 3
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(rows, cols, 3)


def palette_csv(palette: tuple[tuple[int, int, int], ...] = DEFAULT_PALETTE) -> str:
    """CSV listing of palette entries, one `index,r,g,b` row per color."""
    check_palette(palette)
    lines = ["index,r,g,b"]
    for i, (r, g, b) in enumerate(palette):
        lines.append(f"{i},{r},{g},{b}")
    return "\n".join(lines) + "\n"
