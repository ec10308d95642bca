"""Command-line entry points: segment, autoseg, scale, bench, serve.

Exit codes: 0 success, 2 configuration/input error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .affinity import AFFINITY_MODES, AffinityModel, select_scale
from .autoseed import auto_segment
from .config import PipelineConfig
from .errors import FuzzySegError, UnsegmentedSpelError, UnsupportedFormatError
from .evalbench import grade_png_bytes, render_connectedness, run_benchmark, save_rgb_png
from .imagecore import LabelMap, load_image
from .mofs import SeedSpec, crisp_labels, segment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(Exception):
    """Input or configuration problem; maps to exit code 2."""


def _load_seeds_file(path, width: int, height: int) -> SeedSpec:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"seeds file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"seeds file is not valid JSON: {exc}") from exc
    try:
        objects = raw["objects"]
        points = {int(o["id"]): [tuple(map(int, p)) for p in o["points"]] for o in objects}
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"seeds file malformed: {exc}") from exc
    try:
        return SeedSpec.from_clicks(points, width, height)
    except (ValueError, FuzzySegError) as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_config(args) -> PipelineConfig:
    config = PipelineConfig()
    if getattr(args, "config", None):
        try:
            overrides = json.loads(Path(args.config).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if isinstance(overrides, dict) and isinstance(overrides.get("config"), dict):
            overrides = overrides["config"]  # accept a previous run log as-is
        try:
            config = config.with_overrides(overrides)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    flag_map = {
        "affinity": "affinity",
        "alpha": "alpha",
        "mean_thresh": "mean_thresh",
        "std_thresh": "std_thresh",
        "div_thresh": "div_thresh",
        "max_scale": "max_scale",
        "patch_px": "patch_px",
        "lam": "lam",
        "samples_per_class": "samples_per_class",
        "rng_seed": "rng_seed",
    }
    overrides = {}
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    try:
        return config.with_overrides(overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _write_run_log(out_dir: Path, config: PipelineConfig, extra: dict) -> None:
    # nested under "config" so the log itself is a valid --config file
    payload = {"config": config.to_dict(), **extra}
    (out_dir / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def _write_outputs(out_dir: Path, seg, scales: dict[int, int]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    seg.save(out_dir / "semiseg.bin")
    for m in range(1, seg.num_objects + 1):
        (out_dir / f"connectedness_obj{m}.png").write_bytes(grade_png_bytes(seg, m))
    save_rgb_png(render_connectedness(seg), out_dir / "connectedness.png")
    try:
        labels = crisp_labels(seg)
    except UnsegmentedSpelError:
        labels = LabelMap(seg.owner_labels())
        print("warning: some spels have zero connectedness; labeled 0", file=sys.stderr)
    labels.save(out_dir / "labels.png")
    for m, side in sorted(scales.items()):
        print(f"object {m}: window {side}x{side}")


def cmd_segment(args) -> int:
    img = load_image(args.image)
    config = _resolve_config(args)
    seeds = _load_seeds_file(args.seeds, img.width, img.height)
    try:
        seeds.validate(img.width, img.height)
    except (ValueError, FuzzySegError) as exc:
        raise ConfigError(str(exc)) from exc
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = AffinityModel.build(img, seeds, config.affinity_config())
    seg = segment(img, seeds, model)
    _write_outputs(out_dir, seg, model.scales())
    _write_run_log(
        out_dir,
        config,
        {"command": "segment", "image": str(args.image), "seeds_file": str(args.seeds)},
    )
    return EXIT_OK


def cmd_autoseg(args) -> int:
    img = load_image(args.image)
    config = _resolve_config(args)
    if args.k is None or args.k < 2:
        raise ConfigError(f"--k must be >= 2, got {args.k}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        seg, diagnostics = auto_segment(img, args.k, config)
    except FuzzySegError as exc:
        raise ConfigError(str(exc)) from exc
    elapsed = time.perf_counter() - start
    _write_outputs(out_dir, seg, diagnostics.scales)
    # diagnostics stay timing-free so identical seeds give identical bytes
    (out_dir / "diagnostics.json").write_text(
        json.dumps(diagnostics.to_json_dict(), indent=2, sort_keys=True)
    )
    _write_run_log(
        out_dir, config, {"command": "autoseg", "image": str(args.image), "k": args.k}
    )
    print(f"segmented in {elapsed:.2f}s")
    return EXIT_OK


def cmd_scale(args) -> int:
    img = load_image(args.image)
    config = _resolve_config(args)
    seeds = _load_seeds_file(args.seeds, img.width, img.height)
    mode = config.affinity
    for m in seeds.object_ids():
        sel = select_scale(
            img,
            seeds.window_centers(m),
            mode,
            mean_thresh=config.mean_thresh,
            std_thresh=config.std_thresh,
            div_thresh=config.div_thresh,
            alpha=config.alpha,
            max_scale=config.max_scale,
            object_id=m,
        )
        print(f"object {m}: selected window {sel.side}x{sel.side}")
        for probe in sel.trace:
            if probe.divergence is not None:
                print(f"  side {probe.side}: divergence {probe.divergence:.6f}")
            elif probe.pair_mean is not None:
                print(
                    f"  side {probe.side}: pair mean {probe.pair_mean:.6f}"
                    f" std {probe.pair_std:.6f}"
                )
            else:
                print(f"  side {probe.side}: (baseline)")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        reports = run_benchmark(args.spec, jobs=args.jobs)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"{'experiment':<24}{'dice':>8}{'time (s)':>10}")
    for report in reports:
        print(f"{report.name:<24}{report.weighted:>8.3f}{report.seconds:>10.2f}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(max_pixels=args.max_pixels, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def _add_config_flags(parser) -> None:
    parser.add_argument("--config", help="JSON file with config overrides")
    parser.add_argument("--affinity", choices=AFFINITY_MODES)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--mean-thresh", type=float, dest="mean_thresh")
    parser.add_argument("--std-thresh", type=float, dest="std_thresh")
    parser.add_argument("--div-thresh", type=float, dest="div_thresh")
    parser.add_argument("--max-scale", type=int, dest="max_scale")
    parser.add_argument("--patch-px", type=int, dest="patch_px")
    parser.add_argument("--lambda", type=float, dest="lam")
    parser.add_argument("--samples-per-class", type=int, dest="samples_per_class")
    parser.add_argument("--rng-seed", type=int, dest="rng_seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuzzyseg")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment with manually placed seeds")
    p.add_argument("image")
    p.add_argument("--seeds", required=True, help="JSON seeds file")
    p.add_argument("--out", default="out", help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("autoseg", help="fully automatic segmentation")
    p.add_argument("image")
    p.add_argument("--k", type=int, required=True, help="number of classes")
    p.add_argument("--out", default="out", help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_autoseg)

    p = sub.add_parser("scale", help="print the scale-selection trace for seeds")
    p.add_argument("image")
    p.add_argument("--seeds", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("bench", help="run a benchmark spec")
    p.add_argument("spec")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="start the HTTP segmentation service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8760)
    p.add_argument("--max-pixels", type=int, dest="max_pixels", default=None)
    p.add_argument("--ui-dir", dest="ui_dir", default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, UnsupportedFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FuzzySegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
