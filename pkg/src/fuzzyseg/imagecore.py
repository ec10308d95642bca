"""Grayscale image primitives.

Images are immutable 2D grids of intensities normalized to [0, 1]. All window
operations clip to the image bounds: statistics and histograms are computed
over the intersection of the window with the image, never over mirrored or
padded content.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from PIL import Image

from .errors import (
    EmptyWindowError,
    LayoutGapError,
    LayoutOverlapError,
    PatchTooLargeError,
    UnsupportedFormatError,
)

GRAY_LEVELS = 256

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class Spel(NamedTuple):
    """A spatial element: one pixel position (x = column, y = row)."""

    x: int
    y: int


def _round_half_up(values, scale):
    return np.floor(np.asarray(values, dtype=np.float64) * scale + 0.5)


class GrayImage:
    """Immutable grayscale image with intensities in [0, 1]."""

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2D array, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("image must contain at least one pixel")
        if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        arr.flags.writeable = False
        self._data = arr
        self._quantized = None

    @classmethod
    def from_uint8(cls, arr) -> "GrayImage":
        return cls(np.asarray(arr, dtype=np.float64) / 255.0)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    def quantized(self) -> np.ndarray:
        """Intensities quantized to gray levels 0..255 (half-up rounding)."""
        if self._quantized is None:
            q = _round_half_up(self._data, 255.0).astype(np.uint8)
            q.flags.writeable = False
            self._quantized = q
        return self._quantized

    def in_bounds(self, spel: Spel) -> bool:
        return 0 <= spel.x < self.width and 0 <= spel.y < self.height

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self._data, other._data)

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


@dataclass(frozen=True)
class Window:
    """Square neighborhood of odd side 2*halfwidth + 1 around a center spel."""

    center: Spel
    halfwidth: int

    def __post_init__(self):
        if self.halfwidth < 1:
            raise ValueError("halfwidth must be >= 1")

    @property
    def side(self) -> int:
        return 2 * self.halfwidth + 1

    def clipped_bounds(self, width: int, height: int):
        """Inclusive (x0, y0, x1, y1) of the window intersected with the image."""
        x0 = max(self.center.x - self.halfwidth, 0)
        y0 = max(self.center.y - self.halfwidth, 0)
        x1 = min(self.center.x + self.halfwidth, width - 1)
        y1 = min(self.center.y + self.halfwidth, height - 1)
        return x0, y0, x1, y1


class Histogram:
    """Fixed 256-bin intensity histogram with integer counts."""

    __slots__ = ("_bins",)

    def __init__(self, bins):
        arr = np.array(bins, dtype=np.int64)
        if arr.shape != (GRAY_LEVELS,):
            raise ValueError(f"expected {GRAY_LEVELS} bins, got shape {arr.shape}")
        if (arr < 0).any():
            raise ValueError("histogram counts must be non-negative")
        arr.flags.writeable = False
        self._bins = arr

    @classmethod
    def empty(cls) -> "Histogram":
        return cls(np.zeros(GRAY_LEVELS, dtype=np.int64))

    @classmethod
    def of_values(cls, quantized_values) -> "Histogram":
        counts = np.bincount(
            np.asarray(quantized_values, dtype=np.int64).ravel(), minlength=GRAY_LEVELS
        )
        return cls(counts)

    @classmethod
    def pooled(cls, histograms: Sequence["Histogram"]) -> "Histogram":
        total = np.zeros(GRAY_LEVELS, dtype=np.int64)
        for h in histograms:
            total += h.bins
        return cls(total)

    @property
    def bins(self) -> np.ndarray:
        return self._bins

    @property
    def total(self) -> int:
        return int(self._bins.sum())

    def normalized(self) -> np.ndarray:
        """Counts as a probability vector; zeros if the histogram is empty."""
        t = self.total
        if t == 0:
            return np.zeros(GRAY_LEVELS, dtype=np.float64)
        return self._bins / float(t)

    def __eq__(self, other):
        return isinstance(other, Histogram) and np.array_equal(self._bins, other._bins)

    def __repr__(self):
        return f"Histogram(total={self.total})"


# ---------------------------------------------------------------------------
# Loading and saving
# ---------------------------------------------------------------------------


def _parse_pgm(data: bytes) -> GrayImage:
    magic = data[:2]
    # Header tokens may be separated by whitespace and '#' comments.
    def tokens():
        i = 2
        while i < len(data):
            c = data[i : i + 1]
            if c.isspace():
                i += 1
            elif c == b"#":
                while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                    i += 1
            else:
                j = i
                while j < len(data) and not data[j : j + 1].isspace():
                    j += 1
                yield i, data[i:j]
                i = j

    header = []
    pos = 2
    for start, tok in tokens():
        header.append(tok)
        pos = start + len(tok)
        if len(header) == 3:
            break
    if len(header) < 3:
        raise UnsupportedFormatError("truncated PGM header")
    try:
        width, height, maxval = (int(t) for t in header)
    except ValueError as exc:
        raise UnsupportedFormatError(f"malformed PGM header: {exc}") from exc
    if width <= 0 or height <= 0:
        raise UnsupportedFormatError("PGM dimensions must be positive")
    if maxval <= 0 or maxval > 255:
        raise UnsupportedFormatError(f"only 8-bit PGM supported, maxval={maxval}")

    if magic == b"P5":
        raster = data[pos + 1 : pos + 1 + width * height]
        if len(raster) < width * height:
            raise UnsupportedFormatError("truncated PGM raster")
        values = np.frombuffer(raster, dtype=np.uint8).astype(np.int64)
    else:  # P2
        body = data[pos:].split(b"#")[0] if b"#" in data[pos:] else data[pos:]
        try:
            values = np.array([int(t) for t in body.split()], dtype=np.int64)
        except ValueError as exc:
            raise UnsupportedFormatError(f"malformed PGM raster: {exc}") from exc
        if values.size < width * height:
            raise UnsupportedFormatError("truncated PGM raster")
        values = values[: width * height]
    if (values > maxval).any():
        raise UnsupportedFormatError("PGM sample exceeds declared maxval")
    return GrayImage(values.reshape(height, width) / 255.0)


def _parse_png(data: bytes) -> GrayImage:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise UnsupportedFormatError(f"unreadable PNG: {exc}") from exc
    if img.mode != "L":
        raise UnsupportedFormatError(
            f"only 8-bit grayscale PNG supported, got mode {img.mode!r}"
        )
    return GrayImage.from_uint8(np.asarray(img, dtype=np.uint8))


def load_image_bytes(data: bytes) -> GrayImage:
    """Decode PGM (P2/P5) or 8-bit grayscale PNG from raw bytes."""
    if data.startswith(_PNG_MAGIC):
        return _parse_png(data)
    if data[:2] in (b"P2", b"P5"):
        return _parse_pgm(data)
    raise UnsupportedFormatError("unrecognized image format (want PGM P2/P5 or PNG)")


def load_image(path) -> GrayImage:
    """Load a grayscale image from disk. Color inputs are rejected."""
    data = Path(path).read_bytes()
    return load_image_bytes(data)


def image_to_png_bytes(img: GrayImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.quantized(), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def save_image(img: GrayImage, path) -> None:
    """Write as PNG (default) or binary PGM, chosen by file extension."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        header = f"P5\n{img.width} {img.height}\n255\n".encode()
        path.write_bytes(header + img.quantized().tobytes())
    else:
        path.write_bytes(image_to_png_bytes(img))


# ---------------------------------------------------------------------------
# Window statistics and histograms
# ---------------------------------------------------------------------------


def rect_pair_averages(data: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    """Average brightness of every edge-adjacent pixel pair fully inside the rect."""
    sub = data[y0 : y1 + 1, x0 : x1 + 1]
    horiz = (sub[:, :-1] + sub[:, 1:]) / 2.0
    vert = (sub[:-1, :] + sub[1:, :]) / 2.0
    return np.concatenate([horiz.ravel(), vert.ravel()])


def window_stats(img: GrayImage, w: Window) -> tuple[float, float]:
    """Mean and population std of pair-average brightness inside the clipped window."""
    x0, y0, x1, y1 = w.clipped_bounds(img.width, img.height)
    npix = (x1 - x0 + 1) * (y1 - y0 + 1)
    if npix < 2:
        raise EmptyWindowError(f"window at {w.center} clips to {npix} pixel(s)")
    pairs = rect_pair_averages(img.data, x0, y0, x1, y1)
    return float(pairs.mean()), float(pairs.std())


def window_histogram(img: GrayImage, w: Window) -> Histogram:
    """256-bin histogram of quantized intensities inside the clipped window."""
    x0, y0, x1, y1 = w.clipped_bounds(img.width, img.height)
    sub = img.quantized()[y0 : y1 + 1, x0 : x1 + 1]
    return Histogram.of_values(sub)


# ---------------------------------------------------------------------------
# Patch grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Patch:
    index: int
    x0: int
    y0: int
    width: int
    height: int
    histogram: Histogram
    center: tuple[float, float]

    @property
    def pixel_count(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class PatchGrid:
    patches: tuple[Patch, ...]
    ncols: int
    nrows: int
    image_width: int
    image_height: int

    def __len__(self):
        return len(self.patches)


def make_patch_grid(img: GrayImage, patch_px: int) -> PatchGrid:
    """Tile the image into patch_px-sized patches; edge patches are truncated."""
    if patch_px < 2:
        raise ValueError("patch_px must be >= 2")
    if patch_px > min(img.width, img.height):
        raise PatchTooLargeError(
            f"patch size {patch_px} exceeds image {img.width}x{img.height}"
        )
    ncols = -(-img.width // patch_px)
    nrows = -(-img.height // patch_px)
    quantized = img.quantized()
    patches = []
    index = 0
    for row in range(nrows):
        y0 = row * patch_px
        h = min(patch_px, img.height - y0)
        for col in range(ncols):
            x0 = col * patch_px
            w = min(patch_px, img.width - x0)
            hist = Histogram.of_values(quantized[y0 : y0 + h, x0 : x0 + w])
            center = (x0 + (w - 1) / 2.0, y0 + (h - 1) / 2.0)
            patches.append(Patch(index, x0, y0, w, h, hist, center))
            index += 1
    return PatchGrid(tuple(patches), ncols, nrows, img.width, img.height)


# ---------------------------------------------------------------------------
# Label maps and mosaics
# ---------------------------------------------------------------------------

# Distinct colors for label/connectedness rendering; index 0 stays black.
DEFAULT_PALETTE = (
    (230, 60, 50),
    (60, 120, 230),
    (60, 200, 90),
    (240, 200, 40),
    (170, 80, 220),
    (255, 140, 0),
    (0, 200, 200),
    (230, 100, 180),
    (150, 150, 60),
    (100, 100, 255),
)


class LabelMap:
    """Per-pixel object ids; 0 means unlabeled."""

    def __init__(self, labels):
        arr = np.array(labels, dtype=np.int32)
        if arr.ndim != 2:
            raise ValueError("label map must be 2D")
        if (arr < 0).any():
            raise ValueError("labels must be non-negative")
        arr.flags.writeable = False
        self._labels = arr

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def width(self) -> int:
        return self._labels.shape[1]

    @property
    def height(self) -> int:
        return self._labels.shape[0]

    def ids(self) -> list[int]:
        """Distinct nonzero labels, ascending."""
        vals = np.unique(self._labels)
        return [int(v) for v in vals if v != 0]

    def mask(self, object_id: int) -> np.ndarray:
        return self._labels == object_id

    def save(self, path) -> None:
        """Write a palette PNG whose palette indices are the object ids."""
        if int(self._labels.max(initial=0)) > 255:
            raise ValueError("cannot save label map with ids > 255 as palette PNG")
        img = Image.fromarray(self._labels.astype(np.uint8), mode="P")
        palette = [0, 0, 0]
        for color in DEFAULT_PALETTE:
            palette.extend(color)
        palette.extend([0] * (768 - len(palette)))
        img.putpalette(palette)
        img.save(path, format="PNG")

    @classmethod
    def load(cls, path) -> "LabelMap":
        img = Image.open(path)
        img.load()
        if img.mode not in ("P", "L"):
            raise UnsupportedFormatError(
                f"label map must be palette or grayscale PNG, got {img.mode!r}"
            )
        return cls(np.asarray(img, dtype=np.int32))

    def __eq__(self, other):
        return isinstance(other, LabelMap) and np.array_equal(self._labels, other._labels)


@dataclass(frozen=True)
class Placement:
    """One mosaic tile placement: paste tile at (x, y), scaled by nearest neighbor."""

    tile: int
    x: int
    y: int
    scale: float = 1.0
    label: int | None = None


def compose_mosaic(
    tiles: Sequence[GrayImage], placements: Sequence[Placement]
) -> tuple[GrayImage, LabelMap]:
    """Paste tiles onto a canvas; returns the mosaic and its ground-truth labels.

    The canvas is the bounding box of all placements. Every canvas pixel must
    be covered exactly once.
    """
    if not placements:
        raise ValueError("at least one placement required")
    extents = []
    for p in placements:
        if not 0 <= p.tile < len(tiles):
            raise ValueError(f"placement references unknown tile {p.tile}")
        if p.scale <= 0:
            raise ValueError("placement scale must be positive")
        tile = tiles[p.tile]
        w = int(round(tile.width * p.scale))
        h = int(round(tile.height * p.scale))
        extents.append((p, w, h))
    width = max(p.x + w for p, w, _ in extents)
    height = max(p.y + h for p, _, h in extents)

    canvas = np.zeros((height, width), dtype=np.float64)
    labels = np.zeros((height, width), dtype=np.int32)
    for order, (p, w, h) in enumerate(extents):
        if p.x < 0 or p.y < 0:
            raise ValueError("placements must have non-negative origin")
        tile = tiles[p.tile]
        src_x = np.minimum((np.arange(w) / p.scale).astype(np.int64), tile.width - 1)
        src_y = np.minimum((np.arange(h) / p.scale).astype(np.int64), tile.height - 1)
        block = tile.data[np.ix_(src_y, src_x)]
        region = labels[p.y : p.y + h, p.x : p.x + w]
        if (region != 0).any():
            raise LayoutOverlapError(f"placement {order} overlaps a previous tile")
        canvas[p.y : p.y + h, p.x : p.x + w] = block
        labels[p.y : p.y + h, p.x : p.x + w] = p.label if p.label is not None else order + 1
    if (labels == 0).any():
        uncovered = int((labels == 0).sum())
        raise LayoutGapError(f"{uncovered} canvas pixel(s) not covered by any tile")
    return GrayImage(canvas), LabelMap(labels)


def load_mosaic_layout(path) -> tuple[GrayImage, LabelMap]:
    """Compose a mosaic from a JSON layout: a list of {tile_path, x, y, scale}.

    Relative tile paths are resolved against the layout file's directory.
    """
    path = Path(path)
    spec = json.loads(path.read_text())
    if not isinstance(spec, list) or not spec:
        raise ValueError("layout must be a non-empty JSON list")
    tiles: list[GrayImage] = []
    tile_index: dict[str, int] = {}
    placements = []
    for entry in spec:
        tile_path = entry["tile_path"]
        resolved = Path(tile_path)
        if not resolved.is_absolute():
            resolved = path.parent / resolved
        key = str(resolved)
        if key not in tile_index:
            tile_index[key] = len(tiles)
            tiles.append(load_image(resolved))
        placements.append(
            Placement(
                tile=tile_index[key],
                x=int(entry["x"]),
                y=int(entry["y"]),
                scale=float(entry.get("scale", 1.0)),
                label=int(entry["label"]) if "label" in entry else None,
            )
        )
    return compose_mosaic(tiles, placements)
