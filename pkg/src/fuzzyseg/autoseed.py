"""Automatic seed selection.

Patches of the image are compared by a symmetrized histogram divergence plus
a weighted spatial term, embedded into 3D by classical multidimensional
scaling, clustered with k-means, and seeds for each class are drawn from a
unit normal around the class centroid. The whole pipeline is deterministic
given its RNG seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .affinity import AffinityModel
from .config import PipelineConfig
from .errors import (
    BadKError,
    DegenerateMatrixError,
    EmptyClassError,
    EmptyPatchError,
    SamplingExhaustedError,
)
from .imagecore import GRAY_LEVELS, GrayImage, PatchGrid, Spel, make_patch_grid
from .mofs import SeedSpec, Semisegmentation, segment

_SMOOTH_EPS = 1.0 / GRAY_LEVELS
_KMEANS_MAX_ITER = 300
_SAMPLE_ATTEMPTS = 100


def patch_distance_matrix(grid: PatchGrid, lam: float = 0.5) -> np.ndarray:
    """Pairwise patch dissimilarity: symmetrized smoothed divergence plus a
    weighted Euclidean distance between patch centers.

    Histograms are Laplace-smoothed before the divergence so sparse patches
    never hit undefined terms; centers are normalized per axis to [0, 1] so
    the spatial weight is comparable across image sizes.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    n = len(grid.patches)
    probs = np.zeros((n, GRAY_LEVELS), dtype=np.float64)
    for i, patch in enumerate(grid.patches):
        if patch.histogram.total == 0:
            raise EmptyPatchError(f"patch {i} has an empty histogram")
        probs[i] = patch.histogram.normalized()
    smoothed = (probs + _SMOOTH_EPS) / (1.0 + GRAY_LEVELS * _SMOOTH_EPS)
    logs = np.log(smoothed)
    row_entropy = np.sum(smoothed * logs, axis=1)
    cross = smoothed @ logs.T
    kl = row_entropy[:, None] - cross
    sym = (kl + kl.T) / 2.0

    centers = np.array([p.center for p in grid.patches], dtype=np.float64)
    centers[:, 0] /= max(grid.image_width - 1, 1)
    centers[:, 1] /= max(grid.image_height - 1, 1)
    spatial = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)

    dist = np.maximum(sym, 0.0) + lam * spatial
    np.fill_diagonal(dist, 0.0)
    return dist


def mds_embed(dist: np.ndarray, dim: int = 3) -> np.ndarray:
    """Classical (Torgerson) MDS embedding of a dissimilarity matrix.

    Double-centers the squared distances, takes the top eigenpairs, and scales
    eigenvectors by the square root of their (non-negative-clamped)
    eigenvalues. Axis signs follow a fixed convention: the coordinate of
    largest magnitude on each axis is made positive.
    """
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.isfinite(dist).all():
        raise DegenerateMatrixError("distance matrix has non-finite entries")
    n = dist.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points to embed")
    sq = dist**2
    row_mean = sq.mean(axis=1, keepdims=True)
    col_mean = sq.mean(axis=0, keepdims=True)
    b = -0.5 * (sq - row_mean - col_mean + sq.mean())
    eigvals, eigvecs = np.linalg.eigh(b)
    order = np.argsort(eigvals)[::-1][:dim]
    vals = np.clip(eigvals[order], 0.0, None)
    coords = np.zeros((n, dim), dtype=np.float64)
    coords[:, : len(order)] = eigvecs[:, order] * np.sqrt(vals)[None, :]
    for axis in range(coords.shape[1]):
        col = coords[:, axis]
        if col.any() and col[np.argmax(np.abs(col))] < 0:
            coords[:, axis] = -col
    return coords


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia_history: tuple[float, ...] = field(default=())


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(0, n)]
    for i in range(1, k):
        dist_sq = np.min(
            np.sum((points[:, None, :] - centers[None, :i, :]) ** 2, axis=2), axis=1
        )
        total = dist_sq.sum()
        if total <= 0:
            idx = rng.integers(0, n)
        else:
            idx = rng.choice(n, p=dist_sq / total)
        centers[i] = points[idx]
    return centers


def kmeans(points: np.ndarray, k: int, rng=0) -> KMeansResult:
    """Lloyd's algorithm from a k-means++ start with a fixed RNG.

    Empty clusters are repaired by stealing the farthest point from the
    largest cluster, so every class in the result is non-empty.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2D array")
    n = points.shape[0]
    if k < 1 or k > n:
        raise BadKError(f"k={k} outside 1..{n}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    centers = _kmeans_pp_init(points, k, rng)
    labels = None
    history: list[float] = []
    for _ in range(_KMEANS_MAX_ITER):
        dist_sq = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(dist_sq, axis=1)
        for cluster in range(k):
            if (new_labels == cluster).any():
                continue
            counts = np.bincount(new_labels, minlength=k)
            donor = int(np.argmax(counts))
            donor_points = np.flatnonzero(new_labels == donor)
            farthest = donor_points[np.argmax(dist_sq[donor_points, donor])]
            new_labels[farthest] = cluster
        for cluster in range(k):
            centers[cluster] = points[new_labels == cluster].mean(axis=0)
        history.append(float(np.sum((points - centers[new_labels]) ** 2)))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KMeansResult(labels, centers, tuple(history))


def class_centroids(grid: PatchGrid, labels: np.ndarray) -> list[tuple[float, float]]:
    """Mean patch-center coordinates per class, in image pixels."""
    labels = np.asarray(labels)
    if labels.shape[0] != len(grid.patches):
        raise ValueError("one label per patch required")
    k = int(labels.max()) + 1
    centers = np.array([p.center for p in grid.patches], dtype=np.float64)
    out = []
    for cluster in range(k):
        mask = labels == cluster
        if not mask.any():
            raise EmptyClassError(f"class {cluster} has no patches")
        mean = centers[mask].mean(axis=0)
        out.append((float(mean[0]), float(mean[1])))
    return out


def _footprint(x: int, y: int, width: int, height: int) -> frozenset[Spel]:
    spels = set()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            nx, ny = x + dx, y + dy
            if 0 <= nx < width and 0 <= ny < height:
                spels.add(Spel(nx, ny))
    return frozenset(spels)


def sample_seeds(
    centroids: list[tuple[float, float]],
    width: int,
    height: int,
    samples_per_class: int = 3,
    rng=0,
    sigma: float = 1.0,
) -> SeedSpec:
    """Draw seed points around each class centroid from a unit normal.

    Points are rounded to pixels, clamped to the image, and resampled when
    their dilated footprint would collide with another class's seeds (the
    engine rejects overlapping seed sets). sigma = 0 collapses sampling to the
    rounded centroid, which is handy in tests.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    taken: dict[int, set[Spel]] = {}
    points: dict[int, list[tuple[int, int]]] = {}
    for class_idx, (cx, cy) in enumerate(centroids):
        m = class_idx + 1
        points[m] = []
        taken[m] = set()
        for _ in range(samples_per_class):
            placed = False
            for _attempt in range(_SAMPLE_ATTEMPTS):
                if sigma == 0.0:
                    draw = np.array([cx, cy])
                else:
                    draw = rng.multivariate_normal([cx, cy], sigma * np.eye(2))
                x = int(np.clip(np.floor(draw[0] + 0.5), 0, width - 1))
                y = int(np.clip(np.floor(draw[1] + 0.5), 0, height - 1))
                fp = _footprint(x, y, width, height)
                conflict = any(
                    fp & other_set for other, other_set in taken.items() if other != m
                )
                duplicate = sigma != 0.0 and (x, y) in points[m]
                if conflict or (duplicate and sigma != 0.0):
                    if sigma == 0.0:
                        raise SamplingExhaustedError(
                            f"centroid of class {m} collides with another class"
                        )
                    continue
                points[m].append((x, y))
                taken[m].update(fp)
                placed = True
                break
            if not placed:
                raise SamplingExhaustedError(
                    f"could not place a collision-free seed for class {m}"
                )
    return SeedSpec.from_clicks(points, width, height)


@dataclass
class AutoSeedDiagnostics:
    """Intermediate artifacts of the automatic pipeline, for plots and the UI."""

    embedding: np.ndarray
    labels: np.ndarray
    centroids: list[tuple[float, float]]
    seed_points: dict[int, list[tuple[int, int]]]
    scales: dict[int, int] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "embedding": [[float(v) for v in row] for row in self.embedding],
            "labels": [int(v) for v in self.labels],
            "centroids": [[float(x), float(y)] for x, y in self.centroids],
            "seeds": {
                str(m): [[int(x), int(y)] for x, y in pts]
                for m, pts in sorted(self.seed_points.items())
            },
            "scales": {str(m): int(s) for m, s in sorted(self.scales.items())},
            "config": self.config,
        }


def propose_seeds(
    img: GrayImage, k: int, config: PipelineConfig | None = None
) -> tuple[SeedSpec, AutoSeedDiagnostics]:
    """Run the clustering stages and sample seed points; no segmentation."""
    config = config or PipelineConfig()
    grid = make_patch_grid(img, config.patch_px)
    if k < 1 or k > len(grid.patches):
        raise BadKError(f"k={k} outside 1..{len(grid.patches)}")
    rng = np.random.default_rng(config.rng_seed)
    dist = patch_distance_matrix(grid, config.lam)
    embedding = mds_embed(dist, dim=3)
    result = kmeans(embedding, k, rng)
    centroids = class_centroids(grid, result.labels)
    seeds = sample_seeds(
        centroids,
        img.width,
        img.height,
        samples_per_class=config.samples_per_class,
        rng=rng,
    )
    diagnostics = AutoSeedDiagnostics(
        embedding=embedding,
        labels=result.labels,
        centroids=centroids,
        seed_points={m: [(p.x, p.y) for p in pts] for m, pts in seeds.clicks.items()},
        config=config.to_dict(),
    )
    return seeds, diagnostics


def auto_segment(
    img: GrayImage, k: int, config: PipelineConfig | None = None
) -> tuple[Semisegmentation, AutoSeedDiagnostics]:
    """Full automatic pipeline: seed proposal, per-object fitting, segmentation."""
    config = config or PipelineConfig()
    if k < 2:
        raise BadKError("automatic segmentation needs k >= 2")
    seeds, diagnostics = propose_seeds(img, k, config)
    model = AffinityModel.build(img, seeds, config.affinity_config())
    seg = segment(img, seeds, model)
    diagnostics.scales = model.scales()
    return seg, diagnostics
