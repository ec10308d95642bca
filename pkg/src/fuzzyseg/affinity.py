"""Fuzzy spel-affinity functions.

Three per-object affinity variants are supported:

* plain Gaussian: link strength from the mean and absolute difference of the
  two endpoint brightnesses, bell-shaped around seed-pair statistics;
* adaptive Gaussian: the difference term is replaced by neighborhood-window
  pair statistics at a per-object scale;
* skew: link strength decays with the skew divergence between the object's
  pooled seed-window histogram and the endpoint window histograms.

The per-object scale (window side) is found by growing the neighborhood
around the seeds until the collected statistics stabilize.

Point evaluators mirror the definitions one link at a time; the engine uses
the vectorized field builders, which agree with the point forms up to float
summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    NoAdjacentPairsError,
    NonPositiveStdError,
    NoSeedsError,
    UndefinedDivergenceError,
)
from .imagecore import GrayImage, Histogram, Spel, Window, window_histogram, window_stats
from .mofs import SeedSpec, quantize_field

# Floors preventing degenerate bells / calibrations on constant seed regions.
EPS_STD = 1e-4
EPS_DIV = 1e-3

MAX_SCALE = 15
MEAN_THRESH = 0.06
STD_THRESH = 0.04
DIV_THRESH = 0.8
DEFAULT_ALPHA = 0.99

GAUSSIAN = "gaussian"
GAUSSIAN_ADAPTIVE = "gaussian-adaptive"
SKEW = "skew"
AFFINITY_MODES = (GAUSSIAN, GAUSSIAN_ADAPTIVE, SKEW)


def rho(x, center, spread):
    """Gaussian bell rescaled to peak value 1 at x = center.

    Accepts scalars or arrays for x.
    """
    if spread <= 0:
        raise NonPositiveStdError(f"spread must be positive, got {spread}")
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-((x - center) ** 2) / (2.0 * spread * spread))
    return float(out) if out.ndim == 0 else out


def _check_distribution(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"{name} must be a 1D probability vector")
    if (p < 0).any():
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError(f"{name} is not normalized (sum={p.sum()!r})")
    return p


def kl_divergence(q, r) -> float:
    """Information lost when r approximates q: sum of q*(log q - log r).

    Natural log; terms with q = 0 contribute nothing. Undefined where the
    reference r has zero mass but q does not.
    """
    q = _check_distribution(q, "q")
    r = _check_distribution(r, "r")
    if q.shape != r.shape:
        raise ValueError("distributions must have the same length")
    support = q > 0
    if (r[support] == 0).any():
        raise UndefinedDivergenceError("r(y) = 0 where q(y) > 0")
    qs = q[support]
    return float(np.sum(qs * (np.log(qs) - np.log(r[support]))))


def skew_divergence(q, r, alpha: float) -> float:
    """Divergence of r from the mixture alpha*q + (1-alpha)*r.

    Finite for any valid distributions when alpha < 1; alpha = 1 reduces to
    the plain divergence of r from q and may be undefined.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    q = _check_distribution(q, "q")
    r = _check_distribution(r, "r")
    return kl_divergence(r, alpha * q + (1.0 - alpha) * r)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianAffinityParams:
    """Seed-pair statistics for the plain Gaussian affinity.

    pair_mean/pair_std describe the average brightness of edge-adjacent seed
    pairs; diff_mean/diff_std the absolute brightness differences.
    """

    object_id: int
    pair_mean: float
    pair_std: float
    diff_mean: float
    diff_std: float

    def __post_init__(self):
        if self.pair_std <= 0 or self.diff_std <= 0:
            raise NonPositiveStdError("stds must be positive (floor at EPS_STD)")


@dataclass(frozen=True)
class AdaptiveGaussianParams:
    """Gaussian affinity parameters with the difference term replaced by
    window-pair statistics at the object's selected scale."""

    object_id: int
    pair_mean: float
    pair_std: float
    window_mean: float
    window_std: float

    def __post_init__(self):
        if self.pair_std <= 0 or self.window_std <= 0:
            raise NonPositiveStdError("stds must be positive (floor at EPS_STD)")


@dataclass(frozen=True)
class SkewAffinityParams:
    """Pooled seed-window histogram plus the divergence scale calibrating the
    divergence-to-affinity mapping exp(-d / divergence_scale)."""

    object_id: int
    seed_histogram: Histogram
    alpha: float
    divergence_scale: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.divergence_scale <= 0:
            raise ValueError("divergence_scale must be positive")


@dataclass(frozen=True)
class ScaleProbe:
    """One audit entry of the scale search."""

    side: int
    pair_mean: float | None = None
    pair_std: float | None = None
    divergence: float | None = None


@dataclass(frozen=True)
class ScaleSelection:
    """Chosen neighborhood scale for one object, with the search trace."""

    object_id: int
    halfwidth: int
    trace: tuple[ScaleProbe, ...] = ()

    @property
    def side(self) -> int:
        return 2 * self.halfwidth + 1


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def _region_pairs(img: GrayImage, region: Iterable[Spel]):
    """Brightness tuples of all edge-adjacent pairs within the region."""
    spels = set(Spel(*s) for s in region)
    data = img.data
    pairs = []
    for s in sorted(spels):
        for nx, ny in ((s.x + 1, s.y), (s.x, s.y + 1)):
            if Spel(nx, ny) in spels:
                pairs.append((data[s.y, s.x], data[ny, nx]))
    return pairs


def fit_gaussian_params(img: GrayImage, region: Iterable[Spel], object_id: int = 0) -> GaussianAffinityParams:
    """Estimate pair statistics over all edge-adjacent pairs inside a seed region."""
    pairs = _region_pairs(img, region)
    if not pairs:
        raise NoAdjacentPairsError("seed region induces no edge-adjacent pairs")
    a = np.array(pairs, dtype=np.float64)
    avgs = a.mean(axis=1)
    diffs = np.abs(a[:, 0] - a[:, 1])
    return GaussianAffinityParams(
        object_id=object_id,
        pair_mean=float(avgs.mean()),
        pair_std=max(float(avgs.std()), EPS_STD),
        diff_mean=float(diffs.mean()),
        diff_std=max(float(diffs.std()), EPS_STD),
    )


def fit_adaptive_gaussian_params(
    img: GrayImage,
    region: Iterable[Spel],
    centers: Sequence[Spel],
    scale: ScaleSelection,
    object_id: int = 0,
) -> AdaptiveGaussianParams:
    """Pair statistics from the seed region plus window-pair statistics
    averaged over the seed windows at the selected scale."""
    if not centers:
        raise NoSeedsError("no seed window centers")
    base = fit_gaussian_params(img, region, object_id)
    stats = [window_stats(img, Window(c, scale.halfwidth)) for c in centers]
    means = [s[0] for s in stats]
    stds = [s[1] for s in stats]
    return AdaptiveGaussianParams(
        object_id=object_id,
        pair_mean=base.pair_mean,
        pair_std=base.pair_std,
        window_mean=float(np.mean(means)),
        window_std=max(float(np.mean(stds)), EPS_STD),
    )


def fit_skew_params(
    img: GrayImage,
    centers: Sequence[Spel],
    scale: ScaleSelection,
    alpha: float = DEFAULT_ALPHA,
    object_id: int = 0,
) -> SkewAffinityParams:
    """Pool the seed-window histograms and calibrate the divergence scale.

    The scale is the mean divergence of the pooled histogram from each
    individual seed window, floored at EPS_DIV, so affinities inside the seed
    texture average around exp(-1).
    """
    if not centers:
        raise NoSeedsError("no seed window centers")
    hists = [window_histogram(img, Window(c, scale.halfwidth)) for c in centers]
    pooled = Histogram.pooled(hists)
    pooled_p = pooled.normalized()
    divs = [skew_divergence(pooled_p, h.normalized(), alpha) for h in hists]
    return SkewAffinityParams(
        object_id=object_id,
        seed_histogram=pooled,
        alpha=alpha,
        divergence_scale=max(float(np.mean(divs)), EPS_DIV),
    )


# ---------------------------------------------------------------------------
# Scale selection
# ---------------------------------------------------------------------------


def select_scale(
    img: GrayImage,
    seeds: Sequence[Spel],
    mode: str,
    mean_thresh: float = MEAN_THRESH,
    std_thresh: float = STD_THRESH,
    div_thresh: float = DIV_THRESH,
    alpha: float = DEFAULT_ALPHA,
    max_scale: int = MAX_SCALE,
    object_id: int = 0,
) -> ScaleSelection:
    """Grow the seed neighborhood until its statistics stabilize.

    Sides 3, 5, 7, ... are probed; the first side whose statistics differ from
    the previous side's by less than the thresholds is returned. In gaussian
    modes the statistics are the seed-averaged window-pair mean and std; in
    skew mode the criterion is the seed-averaged divergence between the
    histograms at consecutive sides. Falls back to max_scale when the
    statistics never settle.
    """
    if mode not in AFFINITY_MODES:
        raise ValueError(f"unknown affinity mode {mode!r}")
    if not seeds:
        raise NoSeedsError("scale selection needs at least one seed")
    if max_scale < 3 or max_scale % 2 == 0:
        raise ValueError("max_scale must be an odd side >= 3")
    seeds = [Spel(*s) for s in seeds]

    trace: list[ScaleProbe] = []
    sides = range(3, max_scale + 1, 2)
    if mode == SKEW:
        prev_hists = None
        for side in sides:
            h = (side - 1) // 2
            hists = [window_histogram(img, Window(s, h)).normalized() for s in seeds]
            if prev_hists is None:
                trace.append(ScaleProbe(side=side))
            else:
                div = float(
                    np.mean(
                        [skew_divergence(p, c, alpha) for p, c in zip(prev_hists, hists)]
                    )
                )
                trace.append(ScaleProbe(side=side, divergence=div))
                if div < div_thresh:
                    return ScaleSelection(object_id, h, tuple(trace))
            prev_hists = hists
    else:
        prev = None
        for side in sides:
            h = (side - 1) // 2
            stats = [window_stats(img, Window(s, h)) for s in seeds]
            mean = float(np.mean([s[0] for s in stats]))
            std = float(np.mean([s[1] for s in stats]))
            trace.append(ScaleProbe(side=side, pair_mean=mean, pair_std=std))
            if prev is not None:
                dm, ds = abs(mean - prev[0]), abs(std - prev[1])
                if dm < mean_thresh and ds < std_thresh:
                    return ScaleSelection(object_id, h, tuple(trace))
            prev = (mean, std)
    return ScaleSelection(object_id, (max_scale - 1) // 2, tuple(trace))


# ---------------------------------------------------------------------------
# Point affinities
# ---------------------------------------------------------------------------


def _edge_adjacent(c: Spel, d: Spel) -> bool:
    return abs(c.x - d.x) + abs(c.y - d.y) == 1


def gaussian_affinity(c: Spel, d: Spel, img: GrayImage, p: GaussianAffinityParams) -> float:
    """Plain Gaussian link strength; zero unless c and d are edge-adjacent."""
    c, d = Spel(*c), Spel(*d)
    if not _edge_adjacent(c, d):
        return 0.0
    vc = img.data[c.y, c.x]
    vd = img.data[d.y, d.x]
    g = (vc + vd) / 2.0
    a = abs(vc - vd)
    return (rho(g, p.pair_mean, p.pair_std) + rho(a, p.diff_mean, p.diff_std)) / 2.0


def _union_window_bounds(c: Spel, d: Spel, halfwidth: int, width: int, height: int):
    x0 = max(min(c.x, d.x) - halfwidth, 0)
    y0 = max(min(c.y, d.y) - halfwidth, 0)
    x1 = min(max(c.x, d.x) + halfwidth, width - 1)
    y1 = min(max(c.y, d.y) + halfwidth, height - 1)
    return x0, y0, x1, y1


def adaptive_gaussian_affinity(
    c: Spel,
    d: Spel,
    img: GrayImage,
    p: AdaptiveGaussianParams,
    scale: ScaleSelection,
) -> float:
    """Gaussian affinity whose second term compares the pair-average mean over
    the union of the two endpoint windows against the seed-window statistics."""
    c, d = Spel(*c), Spel(*d)
    if not _edge_adjacent(c, d):
        return 0.0
    vc = img.data[c.y, c.x]
    vd = img.data[d.y, d.x]
    term1 = rho((vc + vd) / 2.0, p.pair_mean, p.pair_std)
    x0, y0, x1, y1 = _union_window_bounds(c, d, scale.halfwidth, img.width, img.height)
    from .imagecore import rect_pair_averages

    pairs = rect_pair_averages(img.data, x0, y0, x1, y1)
    term2 = rho(float(pairs.mean()), p.window_mean, p.window_std)
    return (term1 + term2) / 2.0


def skew_affinity(
    c: Spel,
    d: Spel,
    img: GrayImage,
    p: SkewAffinityParams,
    scale: ScaleSelection,
) -> float:
    """Histogram-based link strength exp(-d_hat / scale) where d_hat averages
    the seed-to-window divergences at the two endpoints."""
    c, d = Spel(*c), Spel(*d)
    if not _edge_adjacent(c, d):
        return 0.0
    seed_p = p.seed_histogram.normalized()
    hc = window_histogram(img, Window(c, scale.halfwidth)).normalized()
    hd = window_histogram(img, Window(d, scale.halfwidth)).normalized()
    d_hat = (skew_divergence(seed_p, hc, p.alpha) + skew_divergence(seed_p, hd, p.alpha)) / 2.0
    return math.exp(-d_hat / p.divergence_scale)


# ---------------------------------------------------------------------------
# Vectorized edge fields
# ---------------------------------------------------------------------------


def _pair_average_maps(data: np.ndarray):
    horiz = (data[:, :-1] + data[:, 1:]) / 2.0
    vert = (data[:-1, :] + data[1:, :]) / 2.0
    return horiz, vert


def _sat(arr: np.ndarray) -> np.ndarray:
    """Summed-area table with a zero top/left border."""
    h, w = arr.shape
    out = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(arr, axis=0), axis=1, out=out[1:, 1:])
    return out


def _rect_sums(sat: np.ndarray, x0, y0, x1_excl, y1_excl):
    """Vectorized rectangle sums over [x0, x1_excl) x [y0, y1_excl)."""
    return sat[y1_excl, x1_excl] - sat[y0, x1_excl] - sat[y1_excl, x0] + sat[y0, x0]


def _gaussian_fields(img: GrayImage, p: GaussianAffinityParams):
    horiz, vert = _pair_average_maps(img.data)
    dh = np.abs(img.data[:, :-1] - img.data[:, 1:])
    dv = np.abs(img.data[:-1, :] - img.data[1:, :])
    psi_h = (rho(horiz, p.pair_mean, p.pair_std) + rho(dh, p.diff_mean, p.diff_std)) / 2.0
    psi_v = (rho(vert, p.pair_mean, p.pair_std) + rho(dv, p.diff_mean, p.diff_std)) / 2.0
    return psi_h, psi_v


def _union_pair_mean_field(img: GrayImage, halfwidth: int, horizontal: bool) -> np.ndarray:
    """Mean pair-average brightness over the union window of every link."""
    data = img.data
    height, width = data.shape
    ph, pv = _pair_average_maps(data)
    sat_h = _sat(ph)
    sat_v = _sat(pv)

    if horizontal:
        ex, ey = np.meshgrid(np.arange(width - 1), np.arange(height))
        x_lo, x_hi = ex, ex + 1
        y_lo, y_hi = ey, ey
    else:
        ex, ey = np.meshgrid(np.arange(width), np.arange(height - 1))
        x_lo, x_hi = ex, ex
        y_lo, y_hi = ey, ey + 1
    x0 = np.maximum(x_lo - halfwidth, 0)
    y0 = np.maximum(y_lo - halfwidth, 0)
    x1 = np.minimum(x_hi + halfwidth, width - 1)
    y1 = np.minimum(y_hi + halfwidth, height - 1)

    # pairs fully inside the rect: horizontal ones span x in [x0, x1-1]
    sum_h = _rect_sums(sat_h, x0, y0, x1, y1 + 1)
    cnt_h = (x1 - x0) * (y1 - y0 + 1)
    sum_v = _rect_sums(sat_v, x0, y0, x1 + 1, y1)
    cnt_v = (y1 - y0) * (x1 - x0 + 1)
    return (sum_h + sum_v) / (cnt_h + cnt_v)


def _adaptive_gaussian_fields(img: GrayImage, p: AdaptiveGaussianParams, scale: ScaleSelection):
    horiz, vert = _pair_average_maps(img.data)
    t1_h = rho(horiz, p.pair_mean, p.pair_std)
    t1_v = rho(vert, p.pair_mean, p.pair_std)
    mean_h = _union_pair_mean_field(img, scale.halfwidth, horizontal=True)
    mean_v = _union_pair_mean_field(img, scale.halfwidth, horizontal=False)
    t2_h = rho(mean_h, p.window_mean, p.window_std)
    t2_v = rho(mean_v, p.window_mean, p.window_std)
    return (t1_h + t2_h) / 2.0, (t1_v + t2_v) / 2.0


def window_divergence_map(
    img: GrayImage, seed_histogram: Histogram, alpha: float, halfwidth: int
) -> np.ndarray:
    """Skew divergence of the pooled seed histogram from every spel's clipped
    window histogram, for the whole image at once.

    Accumulates per gray level: bins absent from a window contribute nothing,
    so only levels present in the image are visited.
    """
    q = seed_histogram.normalized()
    quantized = img.quantized()
    height, width = quantized.shape
    xs = np.arange(width)
    ys = np.arange(height)
    wx = np.minimum(xs + halfwidth, width - 1) - np.maximum(xs - halfwidth, 0) + 1
    wy = np.minimum(ys + halfwidth, height - 1) - np.maximum(ys - halfwidth, 0) + 1
    totals = (wy[:, None] * wx[None, :]).astype(np.float64)

    x0 = np.maximum(xs - halfwidth, 0)
    x1 = np.minimum(xs + halfwidth, width - 1) + 1
    y0 = np.maximum(ys - halfwidth, 0)
    y1 = np.minimum(ys + halfwidth, height - 1) + 1

    div = np.zeros((height, width), dtype=np.float64)
    for level in np.unique(quantized):
        ind = (quantized == level).astype(np.int64)
        sat = np.zeros((height + 1, width + 1), dtype=np.int64)
        np.cumsum(np.cumsum(ind, axis=0), axis=1, out=sat[1:, 1:])
        counts = sat[np.ix_(y1, x1)] - sat[np.ix_(y0, x1)] - sat[np.ix_(y1, x0)] + sat[np.ix_(y0, x0)]
        present = counts > 0
        if not present.any():
            continue
        r = counts[present] / totals[present]
        mix = alpha * q[int(level)] + (1.0 - alpha) * r
        contrib = np.zeros((height, width), dtype=np.float64)
        contrib[present] = r * (np.log(r) - np.log(mix))
        div += contrib
    return div


def _skew_fields(img: GrayImage, p: SkewAffinityParams, scale: ScaleSelection):
    div = window_divergence_map(img, p.seed_histogram, p.alpha, scale.halfwidth)
    d_h = (div[:, :-1] + div[:, 1:]) / 2.0
    d_v = (div[:-1, :] + div[1:, :]) / 2.0
    return np.exp(-d_h / p.divergence_scale), np.exp(-d_v / p.divergence_scale)


# ---------------------------------------------------------------------------
# Per-object model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffinityConfig:
    """Tunable knobs for affinity construction, mirrored by CLI flags."""

    mode: str = SKEW
    alpha: float = DEFAULT_ALPHA
    mean_thresh: float = MEAN_THRESH
    std_thresh: float = STD_THRESH
    div_thresh: float = DIV_THRESH
    max_scale: int = MAX_SCALE

    def __post_init__(self):
        if self.mode not in AFFINITY_MODES:
            raise ValueError(f"unknown affinity mode {self.mode!r}")


@dataclass(frozen=True)
class ObjectAffinity:
    """Fitted affinity of one object: parameters plus the chosen scale."""

    object_id: int
    mode: str
    params: GaussianAffinityParams | AdaptiveGaussianParams | SkewAffinityParams
    scale: ScaleSelection | None


class AffinityModel:
    """Per-object affinity functions bound to one image.

    Provides the point evaluator psi(m, c, d) and the quantized edge fields
    the engine consumes. Field construction is a pure memo per object.
    """

    def __init__(self, img: GrayImage, objects: dict[int, ObjectAffinity]):
        self.img = img
        self.objects = dict(objects)
        self._field_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @classmethod
    def build(cls, img: GrayImage, seeds: SeedSpec, config: AffinityConfig) -> "AffinityModel":
        """Select a scale and fit affinity parameters for every object."""
        objects = {}
        for m in seeds.object_ids():
            centers = seeds.window_centers(m)
            region = seeds.regions[m]
            if config.mode == GAUSSIAN:
                params = fit_gaussian_params(img, region, m)
                scale = None
            elif config.mode == GAUSSIAN_ADAPTIVE:
                scale = select_scale(
                    img,
                    centers,
                    GAUSSIAN_ADAPTIVE,
                    mean_thresh=config.mean_thresh,
                    std_thresh=config.std_thresh,
                    max_scale=config.max_scale,
                    object_id=m,
                )
                params = fit_adaptive_gaussian_params(img, region, centers, scale, m)
            else:
                scale = select_scale(
                    img,
                    centers,
                    SKEW,
                    div_thresh=config.div_thresh,
                    alpha=config.alpha,
                    max_scale=config.max_scale,
                    object_id=m,
                )
                params = fit_skew_params(img, centers, scale, config.alpha, m)
            objects[m] = ObjectAffinity(m, config.mode, params, scale)
        return cls(img, objects)

    def psi(self, m: int, c: Spel, d: Spel) -> float:
        obj = self.objects[m]
        if obj.mode == GAUSSIAN:
            return gaussian_affinity(c, d, self.img, obj.params)
        if obj.mode == GAUSSIAN_ADAPTIVE:
            return adaptive_gaussian_affinity(c, d, self.img, obj.params, obj.scale)
        return skew_affinity(c, d, self.img, obj.params, obj.scale)

    def edge_fields(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Quantized affinities of all horizontal and vertical links for object m."""
        cached = self._field_cache.get(m)
        if cached is not None:
            return cached
        obj = self.objects[m]
        if obj.mode == GAUSSIAN:
            psi_h, psi_v = _gaussian_fields(self.img, obj.params)
        elif obj.mode == GAUSSIAN_ADAPTIVE:
            psi_h, psi_v = _adaptive_gaussian_fields(self.img, obj.params, obj.scale)
        else:
            psi_h, psi_v = _skew_fields(self.img, obj.params, obj.scale)
        fields = (quantize_field(psi_h), quantize_field(psi_v))
        self._field_cache[m] = fields
        return fields

    def scales(self) -> dict[int, int]:
        """Chosen window side per object (plain gaussian reports side 3)."""
        out = {}
        for m, obj in self.objects.items():
            out[m] = obj.scale.side if obj.scale is not None else 3
        return out
