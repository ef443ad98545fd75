"""Command line for the export adapter."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backends import ModelUnavailableError, get_geo_backend, get_matcher
from .export import DEFAULT_MAX_LIFT_DIST, DEFAULT_SAFEGUARD, export_geo_features, export_image_features


def _sorted_files(directory, suffixes) -> list:
    paths = [p for p in sorted(Path(directory).iterdir()) if p.suffix in suffixes]
    if not paths:
        raise ValueError(f"no files with suffix {suffixes} in {directory}")
    return paths


def cmd_export_img(args) -> int:
    frames = _sorted_files(args.frames_dir, {".png", ".jpg"})
    depths = _sorted_files(args.depths_dir, {".png", ".f32", ".raw"})
    backend = get_matcher(args.model, dim=args.dim)
    manifest = export_image_features(
        frames,
        depths,
        args.camera,
        args.src_cloud,
        args.tgt_cloud,
        args.k,
        args.out_prefix,
        backend=backend,
        split_index=args.split_index,
        safeguard=args.safeguard,
        max_lift_dist=args.max_lift_dist,
    )
    print(f"exported V={manifest.k ** 2} stacks: {', '.join(manifest.outputs)}")
    return 0


def cmd_export_geo(args) -> int:
    backend = get_geo_backend(args.model, dim=args.dim)
    manifest = export_geo_features(args.cloud, args.out, backend=backend)
    print(f"exported {manifest.outputs[0]} (d={manifest.d})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genreg-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-img", help="image-branch feature stacks from generated frames")
    p.add_argument("frames_dir", help="directory of generated RGB frames (temporal order)")
    p.add_argument("depths_dir", help="directory of aligned depth frames")
    p.add_argument("camera", help="camera sidecar JSON")
    p.add_argument("src_cloud")
    p.add_argument("tgt_cloud")
    p.add_argument("out_prefix")
    p.add_argument("--k", type=int, default=4, help="views per domain (V = K^2)")
    p.add_argument("--model", default="patch-grid")
    p.add_argument("--dim", type=int, default=24)
    p.add_argument("--split-index", type=int, default=None,
                   help="first frame of the target segment (default: midpoint)")
    p.add_argument("--safeguard", type=int, default=DEFAULT_SAFEGUARD,
                   help="frames dropped on each side of the segment transition")
    p.add_argument("--max-lift-dist", type=float, default=DEFAULT_MAX_LIFT_DIST)
    p.set_defaults(handler=cmd_export_img)

    p = sub.add_parser("export-geo", help="geometric feature field from a point cloud")
    p.add_argument("cloud")
    p.add_argument("out")
    p.add_argument("--model", default="local-stats")
    p.add_argument("--dim", type=int, default=256)
    p.set_defaults(handler=cmd_export_geo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv if argv is not None else sys.argv[1:])
    try:
        return args.handler(args)
    except ModelUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
