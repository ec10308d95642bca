import json

import numpy as np
import pytest

from fuzzyseg.cli import main
from fuzzyseg.imagecore import GrayImage, save_image

from synth import five_texture_mosaic, two_scale_mosaic


@pytest.fixture
def workspace(tmp_path, rng):
    """A small two-texture image plus a valid seeds file."""
    left = np.full((24, 12), 0.2) + rng.uniform(0, 0.05, (24, 12))
    right = np.full((24, 12), 0.8) - rng.uniform(0, 0.05, (24, 12))
    img = GrayImage(np.hstack([left, right]))
    image_path = tmp_path / "img.png"
    save_image(img, image_path)
    seeds_path = tmp_path / "seeds.json"
    seeds_path.write_text(
        json.dumps(
            {
                "objects": [
                    {"id": 1, "points": [[6, 12]]},
                    {"id": 2, "points": [[18, 12]]},
                ]
            }
        )
    )
    return tmp_path, image_path, seeds_path


class TestSegmentCommand:
    def test_valid_run_writes_outputs(self, workspace, capsys):
        tmp_path, image_path, seeds_path = workspace
        out = tmp_path / "out"
        code = main(
            ["segment", str(image_path), "--seeds", str(seeds_path), "--out", str(out),
             "--affinity", "gaussian"]
        )
        assert code == 0
        for name in (
            "semiseg.bin",
            "connectedness_obj1.png",
            "connectedness_obj2.png",
            "connectedness.png",
            "labels.png",
            "config.json",
        ):
            assert (out / name).exists(), name
        printed = capsys.readouterr().out
        assert "object 1" in printed and "object 2" in printed

    def test_out_of_bounds_seed_is_config_error(self, workspace, capsys):
        tmp_path, image_path, _ = workspace
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"objects": [{"id": 1, "points": [[999, 0]]}]}))
        code = main(["segment", str(image_path), "--seeds", str(bad), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "(999, 0)" in capsys.readouterr().err

    def test_conflicting_seeds_is_config_error(self, workspace, capsys):
        tmp_path, image_path, _ = workspace
        bad = tmp_path / "bad.json"
        bad.write_text(
            json.dumps(
                {
                    "objects": [
                        {"id": 1, "points": [[5, 5]]},
                        {"id": 2, "points": [[5, 5]]},
                    ]
                }
            )
        )
        code = main(["segment", str(image_path), "--seeds", str(bad), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_missing_image(self, workspace):
        tmp_path, _, seeds_path = workspace
        code = main(["segment", str(tmp_path / "nope.png"), "--seeds", str(seeds_path)])
        assert code == 2

    def test_config_file_overrides(self, workspace):
        tmp_path, image_path, seeds_path = workspace
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"affinity": "gaussian", "max-scale": 7}))
        out = tmp_path / "out_cfg"
        code = main(
            ["segment", str(image_path), "--seeds", str(seeds_path), "--out", str(out),
             "--config", str(cfg)]
        )
        assert code == 0
        logged = json.loads((out / "config.json").read_text())
        assert logged["config"]["affinity"] == "gaussian"
        assert logged["config"]["max_scale"] == 7

    def test_unknown_config_key(self, workspace):
        tmp_path, image_path, seeds_path = workspace
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"no-such-key": 1}))
        code = main(
            ["segment", str(image_path), "--seeds", str(seeds_path), "--config", str(cfg)]
        )
        assert code == 2


class TestAutosegCommand:
    def test_k_zero_rejected(self, workspace):
        _, image_path, _ = workspace
        assert main(["autoseg", str(image_path), "--k", "0"]) == 2

    def test_autoseg_writes_diagnostics(self, tmp_path):
        img, _ = five_texture_mosaic(160)
        image_path = tmp_path / "mosaic.png"
        save_image(img, image_path)
        out = tmp_path / "auto"
        code = main(
            ["autoseg", str(image_path), "--k", "5", "--out", str(out), "--rng-seed", "5"]
        )
        assert code == 0
        diag = json.loads((out / "diagnostics.json").read_text())
        assert len(diag["seeds"]) == 5
        assert sum(len(v) for v in diag["seeds"].values()) == 15
        assert len(diag["scales"]) == 5


class TestScaleCommand:
    def test_prints_trace(self, workspace, capsys):
        _, image_path, seeds_path = workspace
        code = main(["scale", str(image_path), "--seeds", str(seeds_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "selected window" in out
        assert "side 3" in out


class TestBenchCommand:
    def test_empty_spec_exit_2(self, tmp_path):
        spec = tmp_path / "bench.json"
        spec.write_text('{"experiments": []}')
        assert main(["bench", str(spec)]) == 2

    def test_prints_table(self, tmp_path, rng, capsys):
        a = GrayImage(np.full((16, 8), 0.1) + rng.uniform(0, 0.05, (16, 8)))
        b = GrayImage(np.full((16, 8), 0.9) - rng.uniform(0, 0.05, (16, 8)))
        save_image(a, tmp_path / "a.png")
        save_image(b, tmp_path / "b.png")
        (tmp_path / "layout.json").write_text(
            json.dumps(
                [
                    {"tile_path": "a.png", "x": 0, "y": 0},
                    {"tile_path": "b.png", "x": 8, "y": 0},
                ]
            )
        )
        spec = {
            "experiments": [
                {
                    "name": "tiny",
                    "mosaic_layout": "layout.json",
                    "pipeline": {
                        "affinity": "gaussian",
                        "seeds": {
                            "objects": [
                                {"id": 1, "points": [[4, 8]]},
                                {"id": 2, "points": [[12, 8]]},
                            ]
                        },
                    },
                    "output_dir": "out",
                }
            ]
        }
        (tmp_path / "bench.json").write_text(json.dumps(spec))
        assert main(["bench", str(tmp_path / "bench.json")]) == 0
        out = capsys.readouterr().out
        assert "tiny" in out and "dice" in out


class TestDeterminism:
    def test_autoseg_identical_bytes(self, tmp_path):
        img, _ = two_scale_mosaic(64, seed=3)
        image_path = tmp_path / "img.png"
        save_image(img, image_path)
        outs = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            code = main(
                [
                    "autoseg",
                    str(image_path),
                    "--k",
                    "2",
                    "--out",
                    str(out),
                    "--rng-seed",
                    "17",
                    "--patch-px",
                    "8",
                ]
            )
            assert code == 0
            outs.append(out)
        for name in ("semiseg.bin", "diagnostics.json", "labels.png", "config.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name

    def test_rerun_from_logged_config(self, tmp_path):
        img, _ = two_scale_mosaic(64, seed=3)
        image_path = tmp_path / "img.png"
        save_image(img, image_path)
        first = tmp_path / "first"
        code = main(
            ["autoseg", str(image_path), "--k", "2", "--out", str(first),
             "--rng-seed", "8", "--patch-px", "8"]
        )
        assert code == 0
        replay = tmp_path / "replay"
        code = main(
            ["autoseg", str(image_path), "--k", "2", "--out", str(replay),
             "--config", str(first / "config.json")]
        )
        assert code == 0
        assert (first / "semiseg.bin").read_bytes() == (replay / "semiseg.bin").read_bytes()
        assert (first / "diagnostics.json").read_bytes() == (
            replay / "diagnostics.json"
        ).read_bytes()
