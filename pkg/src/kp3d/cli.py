"""Command-line entry point.

Subcommands:
    simulate     generate synthetic labeled sequences
    targets      render target-map tensor files for a sequence
    track        run the stereo or mono pipeline over tensor files
    eval         compare a results stream against sequence labels
    bench        time the per-frame pipeline stages
    label-serve  start the labeling HTTP service

Every subcommand accepts --config FILE (YAML with Config keys) and
repeatable --set key=value overrides; unknown keys are rejected. The only
environment variable honored is KP3D_LOG_LEVEL.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from kp3d.config import Config
from kp3d.errors import ConfigError, Kp3dError

logger = logging.getLogger(__name__)


def _parse_set_values(pairs: list[str]) -> dict:
    """Parse --set key=value overrides using the Config field types."""
    types = {f.name: f.type for f in dataclasses.fields(Config)}
    out: dict = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        if key not in types:
            raise ConfigError(f"unknown config key '{key}'")
        ftype = types[key]
        if ftype == "int":
            out[key] = int(raw)
        elif ftype == "float":
            out[key] = float(raw)
        else:
            out[key] = raw
    return out


def _load_config(args) -> Config:
    overrides = _parse_set_values(args.set or [])
    for name in ("seed", "mode"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return Config.load(getattr(args, "config", None), overrides)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="override the config seed")


def cmd_simulate(args) -> int:
    from kp3d.dataset import save_sequence
    from kp3d.simulate import make_cup_scene, make_valve_scene, simulate_sequence

    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    total = args.train + args.test
    for i in range(total):
        seed = config.seed + i
        if args.scene == "valve":
            scene = make_valve_scene(seed, fps=config.fps, duration=config.duration)
        else:
            scene = make_cup_scene(
                seed, n_cups=args.cups, fps=config.fps, duration=config.duration
            )
        split = "train" if i < args.train else "test"
        sequence_id = f"{args.scene}_{i:03d}"
        seq = simulate_sequence(scene, seed, sequence_id=sequence_id, split=split)
        seq_dir = out / sequence_id
        save_sequence(seq, seq_dir)
        stamp = config.stamp()
        with open(seq_dir / "poses.txt", "a") as f:
            f.write(f"# config_hash {stamp['config_hash']}\n# seed {seed}\n")
        print(f"{sequence_id} split={split} frames={len(seq.frames)}")
    return 0


def _category_for(seq, config: Config):
    from kp3d.targets import load_category

    if config.category_file:
        return load_category(config.category_file)
    if seq.labels:
        return seq.labels[0].category
    raise ConfigError(
        "sequence has no labels; provide a category file via --set category_file=..."
    )


def cmd_targets(args) -> int:
    from kp3d.dataset import generate_dataset, load_sequence

    config = _load_config(args)
    seq = load_sequence(args.sequence)
    spec = _category_for(seq, config)
    manifest = generate_dataset(seq, args.out or args.sequence, spec, config)
    print(manifest)
    return 0


def cmd_track(args) -> int:
    from kp3d.results import write_results
    from kp3d.track import track_sequence_files

    config = _load_config(args)
    manifest = Path(args.manifest or Path(args.sequence) / "manifest.json")
    results = track_sequence_files(args.sequence, manifest, config)
    write_results(args.out, results, stamp=config.stamp())
    n_objects = sum(len(v) for v in results.values())
    print(f"{args.out} frames={len(results)} objects={n_objects} mode={config.mode}")
    return 0


def cmd_eval(args) -> int:
    from kp3d.dataset import load_sequence
    from kp3d.evaluate import evaluate
    from kp3d.results import read_results

    config = _load_config(args)
    seq = load_sequence(args.sequence)
    predictions = read_results(args.results)
    report = evaluate(predictions, seq, config)
    doc = {"stamp": config.stamp(), "metrics": report.to_dict()}
    if args.out:
        with open(args.out, "w") as f:
            json.dump(doc, f, sort_keys=True, indent=1)
            f.write("\n")
    sys.stdout.write(report.to_text())
    return 0


def cmd_bench(args) -> int:
    from kp3d.dataset import load_sequence
    from kp3d.evaluate import bench_stages

    config = _load_config(args)
    seq = load_sequence(args.sequence)
    spec = _category_for(seq, config)
    timings = bench_stages(seq, spec, config, n_frames=args.frames)
    total = sum(timings.values())
    for stage, ms in sorted(timings.items()):
        print(f"{stage} {ms:.3f} ms")
    print(f"total {total:.3f} ms")
    if args.out:
        doc = {"stamp": config.stamp(), "stage_ms": timings, "total_ms": total}
        with open(args.out, "w") as f:
            json.dump(doc, f, sort_keys=True, indent=1)
            f.write("\n")
    return 0


def cmd_label_serve(args) -> int:
    import uvicorn

    from kp3d.service import create_app

    config = _load_config(args)
    app = create_app(Path(args.data), config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kp3d",
        description="3D keypoint labeling, dataset generation and tracking toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic labeled sequences")
    p.add_argument("--scene", choices=("valve", "cups"), default="valve")
    p.add_argument("--out", required=True, help="output directory for sequences")
    p.add_argument("--train", type=int, default=45, help="number of training sequences")
    p.add_argument("--test", type=int, default=5, help="number of test sequences")
    p.add_argument("--cups", type=int, default=None, help="cup count (default: random 1-4)")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("targets", help="render target maps for a sequence")
    p.add_argument("--sequence", required=True, help="sequence directory")
    p.add_argument("--out", help="output directory (default: the sequence directory)")
    _add_common(p)
    p.set_defaults(func=cmd_targets)

    p = sub.add_parser("track", help="track objects from tensor files")
    p.add_argument("--sequence", required=True)
    p.add_argument("--manifest", help="manifest path (default: <sequence>/manifest.json)")
    p.add_argument("--out", required=True, help="results stream path")
    p.add_argument("--mode", choices=("stereo", "mono"))
    _add_common(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="evaluate a results stream against labels")
    p.add_argument("--sequence", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--mode", choices=("stereo", "mono"))
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time the pipeline stages")
    p.add_argument("--sequence", required=True)
    p.add_argument("--frames", type=int, default=500)
    p.add_argument("--out", help="JSON timing report path")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("label-serve", help="start the labeling HTTP service")
    p.add_argument("--data", required=True, help="directory containing sequence directories")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8723)
    _add_common(p)
    p.set_defaults(func=cmd_label_serve)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("KP3D_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (Kp3dError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
