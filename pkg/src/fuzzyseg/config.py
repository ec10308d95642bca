"""Resolved pipeline configuration shared by the CLI, benchmark, and service."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from .affinity import (
    AFFINITY_MODES,
    AffinityConfig,
    DEFAULT_ALPHA,
    DIV_THRESH,
    MAX_SCALE,
    MEAN_THRESH,
    SKEW,
    STD_THRESH,
)

DEFAULT_PATCH_PX = 20
DEFAULT_LAMBDA = 0.5
DEFAULT_SAMPLES_PER_CLASS = 3


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the segmentation pipeline, with paper-backed defaults."""

    affinity: str = SKEW
    alpha: float = DEFAULT_ALPHA
    mean_thresh: float = MEAN_THRESH
    std_thresh: float = STD_THRESH
    div_thresh: float = DIV_THRESH
    max_scale: int = MAX_SCALE
    patch_px: int = DEFAULT_PATCH_PX
    lam: float = DEFAULT_LAMBDA
    samples_per_class: int = DEFAULT_SAMPLES_PER_CLASS
    rng_seed: int = 0

    def __post_init__(self):
        if self.affinity not in AFFINITY_MODES:
            raise ValueError(f"unknown affinity mode {self.affinity!r}")

    def affinity_config(self) -> AffinityConfig:
        return AffinityConfig(
            mode=self.affinity,
            alpha=self.alpha,
            mean_thresh=self.mean_thresh,
            std_thresh=self.std_thresh,
            div_thresh=self.div_thresh,
            max_scale=self.max_scale,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        return replace(self, **_normalize_keys(overrides))

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        return cls(**_normalize_keys(raw))


_KEY_ALIASES = {"lambda": "lam"}


def _normalize_keys(raw: dict) -> dict:
    """Accept dashed (CLI/JSON) and snake_case spellings of config keys."""
    out = {}
    valid = set(PipelineConfig.__dataclass_fields__)
    for key, value in raw.items():
        norm = key.replace("-", "_")
        norm = _KEY_ALIASES.get(norm, norm)
        if norm not in valid:
            raise ValueError(f"unknown config key {key!r}")
        out[norm] = value
    return out
