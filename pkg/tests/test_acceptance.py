"""Acceptance suite: one test per criterion, each printing a pass line.

Run `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
"""

import math
import time

import numpy as np
import pytest

from fuzzyseg.affinity import (
    AffinityConfig,
    AffinityModel,
    kl_divergence,
    select_scale,
    skew_divergence,
)
from fuzzyseg.autoseed import auto_segment, kmeans, mds_embed
from fuzzyseg.cli import main
from fuzzyseg.config import PipelineConfig
from fuzzyseg.evalbench import match_labels, relabel, weighted_dice
from fuzzyseg.imagecore import GrayImage, LabelMap, Spel, save_image
from fuzzyseg.mofs import SeedSpec, segment

from oracles import adjusted_rand_index, maxmin_closure
from synth import add_noise, checker, five_texture_mosaic, two_scale_mosaic


class StubModel:
    def __init__(self, fields):
        self.fields = fields

    def edge_fields(self, m):
        return self.fields[m]


def test_a1_engine_matches_exhaustive_oracle():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for _ in range(200):
        width = int(rng.integers(2, 6))
        height = int(rng.integers(1, 6))
        psi_h = rng.integers(0, 1001, (height, width - 1)).astype(np.int16)
        psi_v = rng.integers(0, 1001, (height - 1, width)).astype(np.int16)
        num_objects = int(rng.integers(1, 3))
        spels = [(x, y) for y in range(height) for x in range(width)]
        picks = rng.choice(len(spels), size=num_objects, replace=False)
        seeds = {m + 1: [Spel(*spels[i])] for m, i in enumerate(picks)}
        model = StubModel({m: (psi_h, psi_v) for m in seeds})
        seg = segment(GrayImage(np.zeros((height, width))), SeedSpec(seeds), model)
        fields = np.stack(
            [
                maxmin_closure(psi_h, psi_v, [s[0].y * width + s[0].x for s in [seeds[m]]], width, height)
                for m in sorted(seeds)
            ]
        )
        sigma0 = fields.max(axis=0)
        members = (fields == sigma0[None]) & (sigma0[None] > 0)
        assert np.array_equal(seg.sigma0_levels, sigma0)
        assert np.array_equal(seg.members, members)
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    print(f"\nA1 PASS: 200/200 random instances match the max-min chain oracle exactly ({elapsed:.1f}s)")


def test_a2_divergence_suite():
    rng = np.random.default_rng(77)
    for _ in range(1000):
        counts_q = rng.multinomial(int(rng.integers(50, 400)), np.full(256, 1 / 256))
        counts_r = rng.multinomial(int(rng.integers(50, 400)), np.full(256, 1 / 256))
        q = counts_q / counts_q.sum()
        r = counts_r / counts_r.sum()
        assert abs(kl_divergence(q, q)) <= 1e-12
        assert abs(skew_divergence(q, r, 0.0)) <= 1e-12
        for alpha in (0.5, 0.9, 0.99):
            d = skew_divergence(q, r, alpha)
            assert d >= 0.0 and math.isfinite(d)
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-9)
    assert skew_divergence([1.0, 0.0], [0.0, 1.0], 0.99) == pytest.approx(
        math.log(100), abs=1e-9
    )
    print("A2 PASS: 1000 random histogram pairs satisfy the divergence contracts")


def test_a3_two_scale_same_texture():
    img, gt = two_scale_mosaic(256)
    seeds = SeedSpec.from_clicks(
        {1: [(64, 64), (64, 192)], 2: [(192, 64), (192, 192)]}, 256, 256
    )
    start = time.perf_counter()
    skew_model = AffinityModel.build(img, seeds, AffinityConfig(mode="skew"))
    skew_seg = segment(img, seeds, skew_model)
    skew_score = weighted_dice(LabelMap(skew_seg.owner_labels()), gt)
    gauss_model = AffinityModel.build(img, seeds, AffinityConfig(mode="gaussian"))
    gauss_seg = segment(img, seeds, gauss_model)
    gauss_score = weighted_dice(LabelMap(gauss_seg.owner_labels()), gt)
    elapsed = time.perf_counter() - start
    assert skew_score >= 0.95
    assert gauss_score < skew_score
    assert elapsed < 30.0
    print(
        f"A3 PASS: adaptive skew dice {skew_score:.3f} >= 0.95; "
        f"plain 3x3 gaussian {gauss_score:.3f} strictly lower ({elapsed:.1f}s)"
    )


def test_a4_automatic_pipeline_desk_scale():
    img, gt = five_texture_mosaic(320)
    start = time.perf_counter()
    seg, diag = auto_segment(img, 5, PipelineConfig(patch_px=20, rng_seed=0))
    elapsed = time.perf_counter() - start
    pred = LabelMap(seg.owner_labels())
    pred = relabel(pred, match_labels(pred, gt))
    score = weighted_dice(pred, gt)
    clusters = len(np.unique(diag.labels))
    seed_count = sum(len(v) for v in diag.seed_points.values())
    assert score >= 0.90
    assert clusters == 5
    assert seed_count == 15
    assert elapsed < 60.0
    print(
        f"A4 PASS: auto pipeline dice {score:.3f} >= 0.90, "
        f"{clusters} clusters, {seed_count} seeds ({elapsed:.1f}s)"
    )


def test_a5_mds_and_kmeans_fidelity():
    rng = np.random.default_rng(5)
    points = rng.normal(size=(50, 3))
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    coords = mds_embed(dist, dim=3)
    got = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    mask = dist > 0
    rel_err = np.max(np.abs(got[mask] - dist[mask]) / dist[mask])
    assert rel_err < 1e-6

    centers = np.array(
        [[0, 0, 0], [10, 0, 0], [0, 10, 0], [0, 0, 10], [10, 10, 10]], dtype=float
    )
    truth = np.repeat(np.arange(5), 30)
    blobs = centers[truth] + rng.normal(scale=1.0, size=(150, 3))
    result = kmeans(blobs, 5, rng=3)
    ari = adjusted_rand_index(result.labels, truth)
    assert ari == 1.0
    print(f"A5 PASS: MDS max relative error {rel_err:.2e} < 1e-6; blob ARI {ari:.1f}")


def test_a6_scale_selection_contract():
    constant = GrayImage(np.full((32, 32), 0.5))
    sel = select_scale(constant, [Spel(16, 16)], "gaussian-adaptive")
    assert sel.side == 5

    violations = 0
    for trial in range(20):
        rng = np.random.default_rng(100 + trial)
        sides = {}
        for period in (2, 8):
            pattern = add_noise(checker(64, 64, period, lo=0.2, hi=0.8), 0.02, rng)
            img = GrayImage(pattern)
            seeds = [
                Spel(int(rng.integers(8, 56)), int(rng.integers(8, 56))) for _ in range(3)
            ]
            result = select_scale(img, seeds, "gaussian-adaptive")
            assert result.side % 2 == 1
            assert result.side <= 15
            sides[period] = result.side
        if sides[8] < sides[2]:
            violations += 1
    assert violations == 0
    print("A6 PASS: sides odd and <= 15; constant image -> 5; 20/20 monotone trials")


def test_a7_autoseg_determinism(tmp_path):
    img, _ = five_texture_mosaic(320)
    image_path = tmp_path / "mosaic.png"
    save_image(img, image_path)
    outputs = []
    for name in ("run_a", "run_b"):
        out = tmp_path / name
        code = main(
            [
                "autoseg",
                str(image_path),
                "--k",
                "5",
                "--out",
                str(out),
                "--rng-seed",
                "99",
            ]
        )
        assert code == 0
        outputs.append(out)
    seg_a = (outputs[0] / "semiseg.bin").read_bytes()
    seg_b = (outputs[1] / "semiseg.bin").read_bytes()
    diag_a = (outputs[0] / "diagnostics.json").read_bytes()
    diag_b = (outputs[1] / "diagnostics.json").read_bytes()
    assert seg_a == seg_b
    assert diag_a == diag_b
    print("A7 PASS: repeated autoseg runs are byte-identical (semiseg + diagnostics)")
