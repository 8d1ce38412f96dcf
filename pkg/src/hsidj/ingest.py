"""File ingestion and synthetic scene generation.

Two on-disk formats are supported, chosen because both are bit-exactly
specifiable:

* ENVI header + raw: the header is a text file of ``key = value`` lines
  (required keys: samples, lines, bands, interleave, data type, byte order;
  optional: header offset, default 0; unknown keys ignored). The raw file
  holds contiguous samples in the declared interleave (bsq / bil / bip) and
  byte order. Supported data type codes: 1 = uint8, 2 = int16, 4 = float32,
  12 = uint16.
* PGM: binary ``P5`` per the Netpbm spec, 1-byte samples for maxval < 256,
  otherwise 2-byte big-endian. Used for ground-truth label rasters.

Synthetic scenes are seeded Voronoi mosaics: blob sites partition the grid,
each site carries a class, class mean spectra sit ``class_separation`` apart,
and i.i.d. Gaussian noise is added per cell. A one-pixel-or-wider background
border is left unlabeled so patch windows at labeled pixels can still touch
zero padding.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, FormatError, GroundTruth, HSICube

INTERLEAVES = ("bsq", "bil", "bip")

# ENVI data type code -> numpy dtype character code (without byte order)
_DTYPE_CODES = {1: "u1", 2: "i2", 4: "f4", 12: "u2"}
_INT_CODES = (1, 2, 12)


@dataclass(frozen=True)
class EnviHeader:
    samples: int  # cols
    lines: int  # rows
    bands: int
    interleave: str
    data_type: int
    byte_order: int  # 0 = little, 1 = big
    header_offset: int = 0

    def __post_init__(self):
        if self.interleave not in INTERLEAVES:
            raise FormatError(f"unknown interleave {self.interleave!r}, expected one of {INTERLEAVES}")
        if self.data_type not in _DTYPE_CODES:
            raise FormatError(
                f"unsupported ENVI data type {self.data_type} (supported: {sorted(_DTYPE_CODES)})"
            )
        if self.byte_order not in (0, 1):
            raise FormatError(f"byte order must be 0 (little) or 1 (big), got {self.byte_order}")
        if min(self.samples, self.lines, self.bands) < 1 or self.header_offset < 0:
            raise FormatError("samples, lines, bands must be >= 1 and header offset >= 0")

    @property
    def dtype(self) -> np.dtype:
        order = "<" if self.byte_order == 0 else ">"
        return np.dtype(order + _DTYPE_CODES[self.data_type])


def parse_envi_header(path: str | os.PathLike) -> EnviHeader:
    """Parse an ENVI text header. Malformed lines are reported by number."""
    fields: dict[str, str] = {}
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith(";"):
                continue
            if lineno == 1 and line == "ENVI":
                continue
            if "=" not in line:
                raise FormatError(f"{path}: line {lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            fields[key.strip().lower()] = value.strip()

    def intfield(name: str, default: int | None = None) -> int:
        if name not in fields:
            if default is not None:
                return default
            raise FormatError(f"{path}: missing required header key {name!r}")
        try:
            return int(fields[name])
        except ValueError:
            raise FormatError(f"{path}: key {name!r} has non-integer value {fields[name]!r}") from None

    if "interleave" not in fields:
        raise FormatError(f"{path}: missing required header key 'interleave'")
    return EnviHeader(
        samples=intfield("samples"),
        lines=intfield("lines"),
        bands=intfield("bands"),
        interleave=fields["interleave"].lower(),
        data_type=intfield("data type"),
        byte_order=intfield("byte order"),
        header_offset=intfield("header offset", default=0),
    )


def _read_raw(header: EnviHeader, raw_path: str | os.PathLike) -> np.ndarray:
    """Read a raw payload into canonical (rows, cols, bands) order, source dtype."""
    n = header.samples * header.lines * header.bands
    expected = n * header.dtype.itemsize + header.header_offset
    actual = os.path.getsize(raw_path)
    if actual != expected:
        raise FormatError(
            f"{raw_path}: size {actual} does not match header "
            f"(expected {expected} = {header.lines}x{header.samples}x{header.bands}"
            f"x{header.dtype.itemsize} + offset {header.header_offset})"
        )
    with open(raw_path, "rb") as fh:
        fh.seek(header.header_offset)
        flat = np.frombuffer(fh.read(), dtype=header.dtype, count=n)
    r, c, b = header.lines, header.samples, header.bands
    if header.interleave == "bip":
        return flat.reshape(r, c, b)
    if header.interleave == "bil":
        return flat.reshape(r, b, c).transpose(0, 2, 1)
    return flat.reshape(b, r, c).transpose(1, 2, 0)  # bsq


def read_envi(header_path: str | os.PathLike, raw_path: str | os.PathLike) -> HSICube:
    """Load an ENVI cube; values are converted to float32 in canonical layout."""
    header = parse_envi_header(header_path)
    arr = _read_raw(header, raw_path).astype(np.float32)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{raw_path}: cube contains non-finite values")
    return HSICube(arr)


def write_envi(
    cube: HSICube,
    header_path: str | os.PathLike,
    raw_path: str | os.PathLike,
    interleave: str = "bip",
) -> None:
    """Write a cube as float32 little-endian raw plus a matching text header."""
    if interleave not in INTERLEAVES:
        raise FormatError(f"unknown interleave {interleave!r}, expected one of {INTERLEAVES}")
    arr = cube.values.astype("<f4")
    if interleave == "bil":
        arr = arr.transpose(0, 2, 1)
    elif interleave == "bsq":
        arr = arr.transpose(2, 0, 1)
    try:
        with open(header_path, "w", encoding="ascii") as fh:
            fh.write("ENVI\n")
            fh.write(f"samples = {cube.cols}\n")
            fh.write(f"lines = {cube.rows}\n")
            fh.write(f"bands = {cube.bands}\n")
            fh.write("header offset = 0\n")
            fh.write("data type = 4\n")
            fh.write(f"interleave = {interleave}\n")
            fh.write("byte order = 0\n")
        with open(raw_path, "wb") as fh:
            fh.write(np.ascontiguousarray(arr).tobytes())
    except OSError as exc:
        raise OSError(f"writing ENVI pair ({header_path}, {raw_path}): {exc}") from exc


def _read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Decode a binary (P5) PGM file into a 2-d uint array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM file (missing P5 magic)")

    # Header tokens are separated by whitespace; '#' starts a comment to EOL.
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise FormatError(f"{path}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            end = pos
            while end < len(data) and data[end : end + 1].isdigit():
                end += 1
            tokens.append(int(data[pos:end]))
            pos = end
        else:
            raise FormatError(f"{path}: unexpected byte {ch!r} in PGM header")
    pos += 1  # single whitespace byte after maxval

    width, height, maxval = tokens
    if width < 1 or height < 1:
        raise FormatError(f"{path}: PGM dimensions must be >= 1, got {width}x{height}")
    if maxval < 1 or maxval > 65535:
        raise FormatError(f"{path}: PGM maxval must be in [1, 65535], got {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    payload = data[pos:]
    expected = width * height * dtype.itemsize
    if len(payload) != expected:
        raise FormatError(f"{path}: PGM payload is {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    if arr.max(initial=0) > maxval:
        raise FormatError(f"{path}: PGM sample exceeds declared maxval {maxval}")
    return arr


def sibling_raw(header_path: str | os.PathLike) -> str:
    stem, _ = os.path.splitext(os.fspath(header_path))
    for candidate in (stem + ".raw", stem + ".img", stem + ".dat", stem + ".bin", stem):
        if os.path.isfile(candidate):
            return candidate
    raise FormatError(f"no raw file found next to header {header_path!r} (tried .raw/.img/.dat/.bin)")


def read_gt(path: str | os.PathLike) -> GroundTruth:
    """Load a label raster from a binary PGM or a single-band integer ENVI pair.

    ENVI headers are detected by content; the raw file is looked up next to
    the header by extension. Float bands and negative labels are rejected.
    """
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        return GroundTruth(_read_pgm(path).astype(np.int32))
    header = parse_envi_header(path)
    if header.bands != 1:
        raise FormatError(f"{path}: ground truth must be single-band, got {header.bands} bands")
    if header.data_type not in _INT_CODES:
        raise FormatError(
            f"{path}: ground truth requires an integer data type, got code {header.data_type}"
        )
    arr = _read_raw(header, sibling_raw(path))[:, :, 0]
    if arr.min() < 0:
        raise FormatError(f"{path}: ground truth contains negative labels")
    return GroundTruth(arr.astype(np.int32))


def write_gt(gt: GroundTruth, path: str | os.PathLike) -> None:
    """Write a label raster as binary PGM (2-byte big-endian above maxval 255)."""
    maxval = max(1, int(gt.labels.max()))
    if maxval > 65535:
        raise FormatError(f"labels up to {maxval} exceed the PGM maxval limit of 65535")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{gt.cols} {gt.rows}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(gt.labels.astype(dtype).tobytes())


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the seeded synthetic scene generator."""

    rows: int
    cols: int
    bands: int
    num_classes: int
    blob_count: int
    class_separation: float = 1.0
    noise_sigma: float = 0.0
    seed: int = 0
    border: int = 1

    def __post_init__(self):
        if min(self.rows, self.cols, self.bands) < 1:
            raise ConfigError("rows, cols, bands must all be >= 1")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.blob_count < self.num_classes:
            raise ConfigError(
                f"blob_count ({self.blob_count}) must be >= num_classes ({self.num_classes})"
            )
        if self.class_separation <= 0:
            raise ConfigError("class_separation must be > 0")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.border < 1:
            raise ConfigError("border must be >= 1")


def class_means(cfg: SynthConfig) -> np.ndarray:
    """Mean spectra indexed by class label; consecutive classes sit
    exactly class_separation apart in Euclidean distance. Row 0 (background
    material is still some class) is unused but kept for direct indexing."""
    scale = cfg.class_separation / np.sqrt(cfg.bands)
    return (np.arange(cfg.num_classes + 1, dtype=np.float64)[:, None] * scale) * np.ones(cfg.bands)


def synth_dataset(cfg: SynthConfig) -> tuple[HSICube, GroundTruth]:
    """Generate a seeded Voronoi-blob scene.

    Blob sites are sampled without replacement from the interior (inside the
    background border); the first num_classes sites take classes 1..K so every
    class occurs at least once. Every pixel, border included, belongs to the
    Voronoi cell of its nearest site (ties to the lowest site index) and gets
    that class's mean spectrum plus Gaussian noise; the ground truth reports
    the class everywhere except the border, which is labeled 0.
    """
    irows = cfg.rows - 2 * cfg.border
    icols = cfg.cols - 2 * cfg.border
    if irows < 1 or icols < 1 or irows * icols < cfg.blob_count:
        raise ConfigError(
            f"{cfg.rows}x{cfg.cols} raster with border {cfg.border} cannot host "
            f"{cfg.blob_count} distinct blob sites"
        )
    rng = np.random.default_rng(cfg.seed)
    flat_sites = rng.choice(irows * icols, size=cfg.blob_count, replace=False)
    site_r = cfg.border + flat_sites // icols
    site_c = cfg.border + flat_sites % icols
    site_class = np.empty(cfg.blob_count, dtype=np.int32)
    site_class[: cfg.num_classes] = np.arange(1, cfg.num_classes + 1)
    if cfg.blob_count > cfg.num_classes:
        site_class[cfg.num_classes :] = rng.integers(
            1, cfg.num_classes + 1, size=cfg.blob_count - cfg.num_classes
        )

    rr = np.arange(cfg.rows, dtype=np.int64)[:, None]
    cc = np.arange(cfg.cols, dtype=np.int64)[None, :]
    best_d2 = np.full((cfg.rows, cfg.cols), np.iinfo(np.int64).max)
    nearest = np.zeros((cfg.rows, cfg.cols), dtype=np.int32)
    for k in range(cfg.blob_count):
        d2 = (rr - site_r[k]) ** 2 + (cc - site_c[k]) ** 2
        closer = d2 < best_d2  # strict: ties stay with the lower site index
        nearest[closer] = k
        best_d2[closer] = d2[closer]

    full_class = site_class[nearest]
    labels = full_class.copy()
    labels[: cfg.border, :] = 0
    labels[-cfg.border :, :] = 0
    labels[:, : cfg.border] = 0
    labels[:, -cfg.border :] = 0

    spectra = class_means(cfg)[full_class]
    if cfg.noise_sigma > 0:
        spectra = spectra + cfg.noise_sigma * rng.standard_normal(
            (cfg.rows, cfg.cols, cfg.bands)
        )
    return HSICube(spectra.astype(np.float32)), GroundTruth(labels)
