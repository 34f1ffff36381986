"""Command-line entry point: ``reconstruct``, ``synth`` and ``eval``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io as hio
from .config import PipelineConfig
from .depthmap import evaluate
from .errors import HoverDepthError
from .pipeline import DatasetManifest, load_dataset, reconstruct, write_outputs


def _cmd_reconstruct(args) -> int:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.workers is not None:
        config.workers = args.workers
    manifest = DatasetManifest.load(args.manifest)
    views, cloud, rgb = load_dataset(manifest, config.min_images)
    result = reconstruct(views, cloud, rgb, config)
    write_outputs(result, args.out, rgb=rgb, debug=args.debug)
    print(json.dumps({"coverage": result.depth.coverage, "segments": len(result.segments),
                      "timings": result.timings}, indent=2))
    return 0


def _cmd_synth(args) -> int:
    from .synthetic import SceneSpec, generate_synthetic

    spec = SceneSpec.from_dict(json.loads(Path(args.scene).read_text()))
    scene = generate_synthetic(spec)
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    names = []
    for i, rgb in enumerate(scene.rgb_views):
        name = f"images/view_{i:03d}.png"
        hio.write_image(out / name, rgb)
        names.append(name)
    hio.write_cloud(out / "cloud.txt", scene.cloud)
    hio.write_pfm(out / "truth.pfm", scene.truth)
    poses = [(v.rotation, v.translation) for v in scene.views]
    DatasetManifest(names, poses, spec.intrinsics, "cloud.txt").save(out / "manifest.json")
    print(f"wrote {len(names)} views and {len(scene.cloud)} seeds to {out}")
    return 0


def _cmd_eval(args) -> int:
    metrics = evaluate(hio.read_pfm(args.pred), hio.read_pfm(args.truth))
    print(json.dumps(metrics, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoverdepth", description="Dense depth from small-motion image sets.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="depth map of the reference image of a dataset")
    p.add_argument("--manifest", required=True, help="dataset manifest (JSON)")
    p.add_argument("--config", help="pipeline configuration (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, help="segment-level threads")
    p.add_argument("--debug", action="store_true", help="also write segment, init-source and patch overlays")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("synth", help="render a synthetic dataset with ground truth")
    p.add_argument("--scene", required=True, help="scene description (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="compare a depth map against ground truth")
    p.add_argument("--pred", required=True, help="predicted depth (PFM)")
    p.add_argument("--truth", required=True, help="ground-truth depth (PFM)")
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (HoverDepthError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
