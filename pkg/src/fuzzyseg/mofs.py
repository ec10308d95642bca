"""Multi-object fuzzy segmentation engine.

Connectedness between two spels is the strength of the strongest chain joining
them, where a chain is as strong as its weakest link. Affinities are quantized
to three decimals at evaluation time, which lets a 1001-bucket array serve as
the priority queue: extraction levels only ever move downward, so each bucket
is visited once.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BadObjectIdError,
    ConflictingSeedsError,
    EmptySeedsError,
    OutOfRangeError,
    UnsegmentedSpelError,
)
from .imagecore import GrayImage, LabelMap, Spel

QUANT_LEVELS = 1000

_MAGIC = b"FSEG"


def quantize(value: float) -> float:
    """Round a strength in [0, 1] to three decimals, half-up."""
    return quantize_level(value) / QUANT_LEVELS


def quantize_level(value: float) -> int:
    """Like quantize() but returns the integer level 0..1000."""
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise OutOfRangeError(f"strength {value!r} outside [0, 1]")
    return int(v * QUANT_LEVELS + 0.5)


def quantize_field(values: np.ndarray) -> np.ndarray:
    """Vectorized quantization of an affinity field to integer levels."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and (np.isnan(arr).any() or arr.min() < 0.0 or arr.max() > 1.0):
        raise OutOfRangeError("affinity field outside [0, 1]")
    return np.floor(arr * QUANT_LEVELS + 0.5).astype(np.int16)


_EIGHT_NEIGHBORHOOD = [(-1, -1), (0, -1), (1, -1), (-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


class SeedSpec:
    """Seed spels per object.

    ``regions`` holds the full seed sets used to initialize the engine. When
    built from clicked points, each region is the clicks dilated with their
    eight neighbors (clipped to the image); the original clicks are kept for
    window-based parameter fitting.
    """

    def __init__(
        self,
        regions: Mapping[int, Iterable[Spel]],
        clicks: Mapping[int, Sequence[Spel]] | None = None,
    ):
        if not regions:
            raise EmptySeedsError("no objects in seed specification")
        ids = sorted(regions)
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"object ids must be 1..M, got {ids}")
        self.regions: dict[int, frozenset[Spel]] = {}
        for m in ids:
            spels = frozenset(Spel(*s) for s in regions[m])
            if not spels:
                raise EmptySeedsError(f"object {m} has no seed spels")
            self.regions[m] = spels
        self.clicks: dict[int, tuple[Spel, ...]] | None = None
        if clicks is not None:
            self.clicks = {m: tuple(Spel(*s) for s in clicks[m]) for m in sorted(clicks)}

    @classmethod
    def from_clicks(
        cls, points: Mapping[int, Sequence[tuple[int, int]]], width: int, height: int
    ) -> "SeedSpec":
        """Build seed regions from clicked points dilated with their 8-neighbors."""
        regions: dict[int, set[Spel]] = {}
        clicks: dict[int, list[Spel]] = {}
        for m, pts in points.items():
            region: set[Spel] = set()
            clicked: list[Spel] = []
            for x, y in pts:
                if not (0 <= x < width and 0 <= y < height):
                    raise ValueError(f"seed ({x}, {y}) of object {m} out of bounds")
                clicked.append(Spel(x, y))
                for dx, dy in _EIGHT_NEIGHBORHOOD:
                    nx, ny = x + dx, y + dy
                    if 0 <= nx < width and 0 <= ny < height:
                        region.add(Spel(nx, ny))
            if not clicked:
                raise EmptySeedsError(f"object {m} has no seed points")
            regions[m] = region
            clicks[m] = clicked
        return cls(regions, clicks)

    @property
    def num_objects(self) -> int:
        return len(self.regions)

    def object_ids(self) -> list[int]:
        return sorted(self.regions)

    def validate(self, width: int, height: int) -> None:
        """Check bounds and that no spel seeds two different objects."""
        claimed: dict[Spel, int] = {}
        for m, region in self.regions.items():
            for s in region:
                if not (0 <= s.x < width and 0 <= s.y < height):
                    raise ValueError(f"seed {tuple(s)} of object {m} out of bounds")
                other = claimed.get(s)
                if other is not None and other != m:
                    raise ConflictingSeedsError(
                        f"spel {tuple(s)} is a seed of objects {other} and {m}"
                    )
                claimed[s] = m

    def window_centers(self, m: int) -> tuple[Spel, ...]:
        """Spels whose neighborhoods characterize object m (clicks if known)."""
        if self.clicks is not None and self.clicks.get(m):
            return self.clicks[m]
        return tuple(sorted(self.regions[m]))


class BucketQueue:
    """Array-of-FIFOs priority queue over the 1001 quantized strength levels.

    The cursor starts at the top level and only moves downward: pushes above
    the cursor are rejected, which the greedy propagation never needs. A spel
    may sit in several buckets; stale entries are skipped by the caller.
    """

    def __init__(self, levels: int = QUANT_LEVELS + 1):
        self._buckets = [deque() for _ in range(levels)]
        self._cursor = levels - 1
        self._count = 0

    @property
    def cursor(self) -> int:
        return self._cursor

    def __len__(self) -> int:
        return self._count

    def push(self, level: int, item: int) -> None:
        if level > self._cursor:
            raise ValueError(f"push at level {level} above cursor {self._cursor}")
        if level < 0:
            raise ValueError("negative level")
        self._buckets[level].append(item)
        self._count += 1

    def pop_max(self):
        """Remove and return (level, item) at the current maximum, or None."""
        while self._cursor >= 0 and not self._buckets[self._cursor]:
            self._cursor -= 1
        if self._cursor < 0:
            return None
        self._count -= 1
        return self._cursor, self._buckets[self._cursor].popleft()


class Semisegmentation:
    """Per-spel membership grades for M objects.

    Each spel carries a grade vector (sigma_0, sigma_1, ..., sigma_M) where
    sigma_m is either 0 or sigma_0 and at least one object attains sigma_0.
    Grades are stored as integer thousandths.
    """

    def __init__(self, sigma0_levels: np.ndarray, members: np.ndarray):
        sigma0 = np.asarray(sigma0_levels, dtype=np.uint16)
        memb = np.asarray(members, dtype=bool)
        if sigma0.ndim != 2 or memb.ndim != 3 or memb.shape[1:] != sigma0.shape:
            raise ValueError("inconsistent semisegmentation shapes")
        if sigma0.size and sigma0.max() > QUANT_LEVELS:
            raise ValueError("grade levels must be <= 1000")
        if ((sigma0 > 0) & ~memb.any(axis=0)).any():
            raise ValueError("positive-grade spel with no object membership")
        if ((sigma0 == 0) & memb.any(axis=0)).any():
            raise ValueError("zero-grade spel with object membership")
        sigma0.flags.writeable = False
        memb.flags.writeable = False
        self._sigma0 = sigma0
        self._members = memb

    @property
    def width(self) -> int:
        return self._sigma0.shape[1]

    @property
    def height(self) -> int:
        return self._sigma0.shape[0]

    @property
    def num_objects(self) -> int:
        return self._members.shape[0]

    @property
    def sigma0_levels(self) -> np.ndarray:
        return self._sigma0

    @property
    def members(self) -> np.ndarray:
        return self._members

    def sigma0(self) -> np.ndarray:
        return self._sigma0 / float(QUANT_LEVELS)

    def grade_levels(self, m: int) -> np.ndarray:
        self._check_object(m)
        return np.where(self._members[m - 1], self._sigma0, 0).astype(np.uint16)

    def sigma_vector(self, spel: Spel) -> tuple[float, ...]:
        s0 = int(self._sigma0[spel.y, spel.x])
        vec = [s0 / QUANT_LEVELS]
        for m in range(self.num_objects):
            vec.append(s0 / QUANT_LEVELS if self._members[m, spel.y, spel.x] else 0.0)
        return tuple(vec)

    def is_segmentation(self) -> bool:
        """True when every spel has positive connectedness."""
        return bool((self._sigma0 > 0).all())

    def owner_labels(self) -> np.ndarray:
        """Per-spel owning object id (lowest id on ties), 0 where unreached."""
        owners = np.argmax(self._members, axis=0).astype(np.int32) + 1
        owners[self._sigma0 == 0] = 0
        return owners

    def _check_object(self, m: int) -> None:
        if not 1 <= m <= self.num_objects:
            raise BadObjectIdError(f"object id {m} outside 1..{self.num_objects}")

    # serialization: header (magic, width, height, M as uint32 LE) followed by
    # row-major per-spel (M+1) grade levels as uint16 LE.

    def to_bytes(self) -> bytes:
        header = _MAGIC + struct.pack("<III", self.width, self.height, self.num_objects)
        vec = np.zeros((self.height, self.width, self.num_objects + 1), dtype="<u2")
        vec[:, :, 0] = self._sigma0
        for m in range(self.num_objects):
            vec[:, :, m + 1] = np.where(self._members[m], self._sigma0, 0)
        return header + vec.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Semisegmentation":
        if blob[:4] != _MAGIC:
            raise ValueError("not a semisegmentation blob")
        width, height, num_objects = struct.unpack("<III", blob[4:16])
        vec = np.frombuffer(blob[16:], dtype="<u2")
        vec = vec.reshape(height, width, num_objects + 1)
        sigma0 = vec[:, :, 0].astype(np.uint16)
        members = np.zeros((num_objects, height, width), dtype=bool)
        for m in range(num_objects):
            members[m] = (vec[:, :, m + 1] > 0) & (vec[:, :, m + 1] == sigma0)
        return cls(sigma0, members)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Semisegmentation":
        return cls.from_bytes(Path(path).read_bytes())

    def __eq__(self, other):
        return (
            isinstance(other, Semisegmentation)
            and np.array_equal(self._sigma0, other._sigma0)
            and np.array_equal(self._members, other._members)
        )


def _propagate(
    width: int,
    height: int,
    seed_indices: list[int],
    psi_h: np.ndarray,
    psi_v: np.ndarray,
    monitor: Callable[[int, int], None] | None = None,
) -> np.ndarray:
    """Max-min connectedness of every spel to the seed set, as integer levels.

    psi_h[y, x] is the quantized affinity of the link (x, y)-(x+1, y); psi_v of
    (x, y)-(x, y+1). Greedy descent: a spel popped at the current maximum level
    is final, so each link is relaxed at most once per improvement.
    """
    n = width * height
    values = [0] * n
    # flat python lists beat ndarray scalar indexing in this hot loop
    ph = psi_h.ravel().tolist() if psi_h.size else []
    pv = psi_v.ravel().tolist() if psi_v.size else []
    queue = BucketQueue()
    for idx in seed_indices:
        values[idx] = QUANT_LEVELS
        queue.push(QUANT_LEVELS, idx)
    wm1 = width - 1
    pop = queue.pop_max
    push = queue.push
    while True:
        entry = pop()
        if entry is None:
            break
        level, idx = entry
        if values[idx] != level or level == 0:
            continue
        if monitor is not None:
            monitor(idx, level)
        x = idx % width
        y = idx // width
        if x < wm1:
            a = ph[y * wm1 + x]
            cand = a if a < level else level
            j = idx + 1
            if cand > values[j]:
                values[j] = cand
                push(cand, j)
        if x > 0:
            a = ph[y * wm1 + x - 1]
            cand = a if a < level else level
            j = idx - 1
            if cand > values[j]:
                values[j] = cand
                push(cand, j)
        if y < height - 1:
            a = pv[idx]
            cand = a if a < level else level
            j = idx + width
            if cand > values[j]:
                values[j] = cand
                push(cand, j)
        if y > 0:
            a = pv[idx - width]
            cand = a if a < level else level
            j = idx - width
            if cand > values[j]:
                values[j] = cand
                push(cand, j)
    return np.array(values, dtype=np.int32).reshape(height, width)


def segment(
    img: GrayImage,
    seeds: SeedSpec,
    model,
    monitor: Callable[[int, int, int], None] | None = None,
) -> Semisegmentation:
    """Compute the M-semisegmentation of the image for the given seeds.

    ``model`` must provide edge_fields(m) -> (psi_h, psi_v) with quantized
    integer affinities (0..1000) for horizontal and vertical links. Each
    object's connectedness field is grown independently; a spel then belongs
    to every object whose field attains the per-spel maximum, so the output
    is independent of any tie-breaking order.

    ``monitor``, if given, is called as monitor(object_id, spel_index, level)
    each time a spel is finalized.
    """
    width, height = img.width, img.height
    seeds.validate(width, height)
    ids = seeds.object_ids()
    fields = np.zeros((len(ids), height, width), dtype=np.int32)
    for i, m in enumerate(ids):
        psi_h, psi_v = model.edge_fields(m)
        psi_h = np.asarray(psi_h)
        psi_v = np.asarray(psi_v)
        if psi_h.shape != (height, max(width - 1, 0)) or psi_v.shape != (
            max(height - 1, 0),
            width,
        ):
            raise ValueError(f"edge field shapes for object {m} do not match image")
        seed_idx = [s.y * width + s.x for s in sorted(seeds.regions[m])]
        per_object_monitor = None
        if monitor is not None:
            per_object_monitor = lambda idx, level, _m=m: monitor(_m, idx, level)
        fields[i] = _propagate(width, height, seed_idx, psi_h, psi_v, per_object_monitor)
    sigma0 = fields.max(axis=0)
    members = (fields == sigma0[None, :, :]) & (sigma0[None, :, :] > 0)
    return Semisegmentation(sigma0.astype(np.uint16), members)


def connectedness_map(seg: Semisegmentation, m: int) -> np.ndarray:
    """Membership grade of every spel to object m, in [0, 1]."""
    return seg.grade_levels(m) / float(QUANT_LEVELS)


def crisp_labels(seg: Semisegmentation, tie_rule: str = "lowest-id") -> LabelMap:
    """Collapse a full segmentation to one label per spel.

    Ties go to the lowest object id. Raises if any spel has zero
    connectedness; partial results are surfaced via owner_labels() instead.
    """
    if tie_rule != "lowest-id":
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    if not seg.is_segmentation():
        unreached = int((seg.sigma0_levels == 0).sum())
        raise UnsegmentedSpelError(f"{unreached} spel(s) have zero connectedness")
    return LabelMap(seg.owner_labels())
