"""Evaluation: Dice scores, label matching, rendering, and the benchmark runner."""

from __future__ import annotations

import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.optimize import linear_sum_assignment

from .affinity import AffinityModel
from .autoseed import auto_segment
from .config import PipelineConfig
from .errors import DimensionMismatchError, PaletteTooSmallError
from .imagecore import (
    DEFAULT_PALETTE,
    GrayImage,
    LabelMap,
    load_image,
    load_mosaic_layout,
)
from .mofs import SeedSpec, Semisegmentation, segment


def dice(pred_mask: np.ndarray, gt_mask: np.ndarray) -> float:
    """Dice overlap of two pixel sets; 1.0 when both are empty."""
    pred_mask = np.asarray(pred_mask, dtype=bool)
    gt_mask = np.asarray(gt_mask, dtype=bool)
    if pred_mask.shape != gt_mask.shape:
        raise DimensionMismatchError(
            f"mask shapes differ: {pred_mask.shape} vs {gt_mask.shape}"
        )
    denom = int(pred_mask.sum()) + int(gt_mask.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((pred_mask & gt_mask).sum()) / denom


def per_object_dice(pred: LabelMap, gt: LabelMap) -> dict[int, float]:
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise DimensionMismatchError("prediction and ground truth sizes differ")
    return {m: dice(pred.mask(m), gt.mask(m)) for m in gt.ids()}


def weighted_dice(pred: LabelMap, gt: LabelMap) -> float:
    """Per-object Dice scores averaged with ground-truth size weights."""
    scores = per_object_dice(pred, gt)
    sizes = {m: int(gt.mask(m).sum()) for m in scores}
    total = sum(sizes.values())
    if total == 0:
        return 1.0
    return sum(sizes[m] * scores[m] for m in scores) / total


def match_labels(pred: LabelMap, gt: LabelMap) -> dict[int, int]:
    """Overlap-maximizing assignment of predicted labels to ground-truth labels.

    Solved exactly as a linear assignment problem. Predicted labels without a
    ground-truth partner keep themselves.
    """
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise DimensionMismatchError("prediction and ground truth sizes differ")
    pred_ids = pred.ids()
    gt_ids = gt.ids()
    if not pred_ids or not gt_ids:
        return {m: m for m in pred_ids}
    overlap = np.zeros((len(pred_ids), len(gt_ids)), dtype=np.int64)
    for i, p in enumerate(pred_ids):
        pm = pred.mask(p)
        for j, g in enumerate(gt_ids):
            overlap[i, j] = int((pm & gt.mask(g)).sum())
    rows, cols = linear_sum_assignment(-overlap)
    mapping = {pred_ids[i]: gt_ids[j] for i, j in zip(rows, cols)}
    for p in pred_ids:
        mapping.setdefault(p, p)
    return mapping


def relabel(pred: LabelMap, mapping: dict[int, int]) -> LabelMap:
    out = np.zeros_like(pred.labels)
    for src, dst in mapping.items():
        out[pred.labels == src] = dst
    return LabelMap(out)


def render_connectedness(seg: Semisegmentation, palette=None) -> np.ndarray:
    """RGB rendering: each spel takes its owning object's color scaled by its
    connectedness grade; ties show the lowest-id object's hue, unreached
    spels stay black."""
    palette = DEFAULT_PALETTE if palette is None else palette
    if seg.num_objects > len(palette):
        raise PaletteTooSmallError(
            f"{seg.num_objects} objects but only {len(palette)} palette colors"
        )
    owners = seg.owner_labels()
    grade = seg.sigma0()
    out = np.zeros((seg.height, seg.width, 3), dtype=np.uint8)
    for m in range(1, seg.num_objects + 1):
        mask = owners == m
        if not mask.any():
            continue
        color = np.array(palette[m - 1], dtype=np.float64)
        out[mask] = np.floor(grade[mask][:, None] * color[None, :] + 0.5).astype(np.uint8)
    return out


def save_rgb_png(pixels: np.ndarray, path) -> None:
    Image.fromarray(pixels, mode="RGB").save(path, format="PNG")


def grade_png_bytes(seg: Semisegmentation, m: int) -> bytes:
    """Grayscale PNG of one object's connectedness map (grade * 255)."""
    import io

    grades = seg.grade_levels(m) / 1000.0
    img = np.floor(grades * 255.0 + 0.5).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(img, mode="L").save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------


@dataclass
class ScoreReport:
    name: str
    object_dice: dict[int, float]
    weighted: float
    seconds: float
    config: dict
    label_mapping: dict[int, int] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "object_dice": {str(m): v for m, v in sorted(self.object_dice.items())},
            "weighted_dice": self.weighted,
            "seconds": self.seconds,
            "config": self.config,
            "label_mapping": {str(a): b for a, b in sorted(self.label_mapping.items())},
        }


def _write_json_atomic(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_experiment_inputs(exp: dict, base: Path) -> tuple[GrayImage, LabelMap]:
    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    if "mosaic_layout" in exp:
        return load_mosaic_layout(resolve(exp["mosaic_layout"]))
    if "image" in exp and "ground_truth" in exp:
        return load_image(resolve(exp["image"])), LabelMap.load(resolve(exp["ground_truth"]))
    raise ValueError("experiment needs 'mosaic_layout' or 'image'+'ground_truth'")


def run_experiment(exp: dict, base: Path) -> ScoreReport:
    """Run one benchmark experiment and write its report and rendered maps."""
    name = exp.get("name", "experiment")
    img, gt = _load_experiment_inputs(exp, base)
    pipeline = exp.get("pipeline", {})
    config = PipelineConfig.from_dict(
        {k: v for k, v in pipeline.items() if k not in ("k", "seeds")}
    )
    if "rng_seed" in exp:
        config = config.with_overrides({"rng_seed": exp["rng_seed"]})

    automatic = "k" in pipeline
    start = time.perf_counter()
    if automatic:
        seg, _diag = auto_segment(img, int(pipeline["k"]), config)
    else:
        seeds_raw = pipeline.get("seeds")
        if not seeds_raw:
            raise ValueError(f"experiment {name!r} has neither 'k' nor 'seeds'")
        points = {int(o["id"]): [tuple(p) for p in o["points"]] for o in seeds_raw["objects"]}
        seeds = SeedSpec.from_clicks(points, img.width, img.height)
        model = AffinityModel.build(img, seeds, config.affinity_config())
        seg = segment(img, seeds, model)
    seconds = time.perf_counter() - start

    pred = LabelMap(seg.owner_labels())
    mapping = match_labels(pred, gt) if automatic else {m: m for m in pred.ids()}
    pred = relabel(pred, mapping)
    report = ScoreReport(
        name=name,
        object_dice=per_object_dice(pred, gt),
        weighted=weighted_dice(pred, gt),
        seconds=seconds,
        config={**config.to_dict(), "automatic": automatic},
        label_mapping=mapping,
    )

    out_dir = Path(exp.get("output_dir", name))
    if not out_dir.is_absolute():
        out_dir = base / out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json_atomic(report.to_json_dict(), out_dir / "report.json")
    save_rgb_png(render_connectedness(seg), out_dir / "connectedness.png")
    pred.save(out_dir / "labels.png")
    return report


def run_benchmark(spec_path, jobs: int = 1) -> list[ScoreReport]:
    """Run every experiment in a benchmark spec file.

    The spec is JSON: {"experiments": [...]}. Relative paths inside are
    resolved against the spec file's directory. Experiments are independent
    and may run in parallel worker processes.
    """
    spec_path = Path(spec_path)
    spec = json.loads(spec_path.read_text())
    experiments = spec.get("experiments", [])
    if not experiments:
        raise ValueError("benchmark spec lists no experiments")
    base = spec_path.parent
    if jobs <= 1 or len(experiments) == 1:
        return [run_experiment(exp, base) for exp in experiments]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_experiment, exp, base) for exp in experiments]
        return [f.result() for f in futures]
