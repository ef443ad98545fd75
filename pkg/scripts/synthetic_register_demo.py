#!/usr/bin/env python3
"""End-to-end file-based registration demo.

Builds a synthetic scene with simulated branch features, writes every
artifact to disk (clouds, feature files, ground truth), then runs the
``register`` subcommand on those files and prints the resulting errors.
"""

import argparse
import sys
import tempfile
from pathlib import Path

import numpy as np

from genreg import io as gio
from genreg.bench import BenchConfig, BranchSimSpec, SceneSpec, gen_scene, simulate_branches
from genreg.cli import main as cli_main
from genreg.features import write_features


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fusion", default="and", choices=["and", "or", "concat", "img-only", "geo-only"])
    ap.add_argument("--work-dir", default=None, help="where to place files (default: temp dir)")
    args = ap.parse_args()

    work = Path(args.work_dir) if args.work_dir else Path(tempfile.mkdtemp(prefix="genreg_demo_"))
    work.mkdir(parents=True, exist_ok=True)

    config = BenchConfig()
    scene = gen_scene(
        SceneSpec(
            n_points=config.n_points,
            extent_m=config.extent_m,
            overlap=config.overlap,
            rotation_deg=config.rotation_deg,
            translation_m=config.translation_m,
            point_noise_m=config.point_noise_m,
            seed=args.seed,
        )
    )
    feats = simulate_branches(
        scene,
        BranchSimSpec(
            dim=config.img_dim,
            noise_sigma=config.img_noise,
            outlier_fraction=config.img_outlier_fraction,
            common_mode=config.img_common_mode,
            views_k=config.img_views_k,
            seed=args.seed,
        ),
        BranchSimSpec(
            dim=config.geo_dim,
            noise_sigma=config.geo_noise,
            outlier_fraction=config.geo_outlier_fraction,
            common_mode=config.geo_common_mode,
            seed=args.seed,
        ),
    )

    gio.write_cloud(work / "src.xyz", scene.src)
    gio.write_cloud(work / "tgt.xyz", scene.tgt)
    write_features(work / "src_geo.fif", feats.geo_src, branch="geo", source_model="bench-sim")
    write_features(work / "tgt_geo.fif", feats.geo_tgt, branch="geo", source_model="bench-sim")
    write_features(work / "src_img.fif", feats.img_src, branch="img", source_model="bench-sim")
    write_features(work / "tgt_img.fif", feats.img_tgt, branch="img", source_model="bench-sim")
    gio.write_json(
        work / "gt.json",
        {
            "rotation": [float(v) for v in scene.t_gt.rotation.reshape(-1)],
            "translation": [float(v) for v in scene.t_gt.translation],
        },
    )

    code = cli_main(
        [
            "register",
            str(work / "src.xyz"),
            str(work / "tgt.xyz"),
            "--src-geo", str(work / "src_geo.fif"),
            "--tgt-geo", str(work / "tgt_geo.fif"),
            "--src-img", str(work / "src_img.fif"),
            "--tgt-img", str(work / "tgt_img.fif"),
            "--fusion", args.fusion,
            "--gt", str(work / "gt.json"),
            "--out", str(work / "result.json"),
        ]
    )
    if code == 0:
        print((work / "result.json").read_text())
        print(f"artifacts in {work}")
    return code


if __name__ == "__main__":
    sys.exit(main())
