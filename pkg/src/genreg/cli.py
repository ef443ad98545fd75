"""Command-line interface.

Subcommands: ``lift`` (depth file to point cloud), ``project`` (cloud to
depth file), ``register`` (full correspondence + pose pipeline over
cloud and feature files), ``bench`` (synthetic benchmark reports), and
``pr-curve`` (one method's precision-recall sweep as CSV).

Exit codes: 0 success, 1 registration failure, 2 usage or format error.
The environment variable GENREG_THREADS caps internal parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import io as gio
from .bench import BenchConfig, method_posterior, pr_curve, run_benchmark, write_report
from .correspondence import posterior_softmax, similarity_geo, similarity_img_maxpool
from .features import (
    FeatureField,
    ViewFeatureStack,
    l2_normalize_rows,
    l2_normalize_views,
    read_features,
)
from .fusion import fuse_concat_baseline, fuse_noisy_and, fuse_noisy_or, uniform_prior
from .geometry import (
    FThetaCamera,
    PinholeCamera,
    RigidTransform,
    lift_depth,
    lift_ftheta,
    project_ftheta,
    project_pinhole,
)
from .pose import RobustConfig, mutual_nn_match, robust_register, rre_degrees, rte_meters

FUSION_MODES = ("and", "or", "concat", "img-only", "geo-only")


@dataclass
class PipelineConfig:
    """Registration pipeline settings; serialized as flat JSON."""

    tau_img: float = 0.1
    tau_geo: float = 0.1
    prior_mode: str = "uniform"
    prior_value: float | None = None
    fusion: str = "and"
    voxel_m: float = 0.025
    d_comp_m: float = 0.05
    d_inlier_m: float = 0.05
    hypotheses: int = 1000
    min_inliers: int = 5
    top_seeds: int = 100
    seed: int = 0
    max_lift_dist_m: float = 0.05

    def __post_init__(self) -> None:
        if self.tau_img <= 0 or self.tau_geo <= 0:
            raise ValueError("temperatures must be positive")
        if self.prior_mode not in ("uniform", "scalar"):
            raise ValueError(f"prior_mode must be 'uniform' or 'scalar', got {self.prior_mode!r}")
        if self.prior_mode == "scalar" and (
            self.prior_value is None or not (0 < self.prior_value < 1)
        ):
            raise ValueError("scalar prior_mode requires prior_value in (0, 1)")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")
        if self.voxel_m <= 0 or self.max_lift_dist_m <= 0:
            raise ValueError("voxel_m and max_lift_dist_m must be positive")
        if self.d_comp_m <= 0 or self.d_inlier_m <= 0:
            raise ValueError("robust distances must be positive")
        if self.hypotheses < 1 or self.min_inliers < 3 or self.top_seeds < 1:
            raise ValueError("hypotheses >= 1, min_inliers >= 3, top_seeds >= 1 required")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        unknown = [k for k in data if k not in cls.__dataclass_fields__]
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


class UsageError(ValueError):
    pass


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")


def _load_pipeline_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_dict(_load_json(path))


def _read_gt(path) -> RigidTransform:
    data = _load_json(path)
    try:
        rotation = np.asarray(data["rotation"], dtype=np.float64).reshape(3, 3)
        translation = np.asarray(data["translation"], dtype=np.float64).reshape(3)
    except KeyError as exc:
        raise UsageError(f"{path}: ground-truth transform missing field {exc.args[0]!r}")
    return RigidTransform(rotation, translation)


def cmd_lift(args) -> int:
    cam = gio.read_camera_sidecar(args.camera)
    depth = gio.read_depth(args.depth, cam)
    if isinstance(cam, PinholeCamera):
        cloud, _ = lift_depth(depth, cam)
    else:
        cloud, _ = lift_ftheta(depth, cam)
    if args.voxel is not None:
        from .geometry import voxel_downsample

        cloud = voxel_downsample(cloud, args.voxel)
    gio.write_cloud(args.out, cloud)
    print(f"lifted {len(cloud)} points -> {args.out}")
    return 0


def cmd_project(args) -> int:
    cam = gio.read_camera_sidecar(args.camera)
    cloud = gio.read_cloud(args.cloud)
    if isinstance(cam, FThetaCamera):
        depth, _ = project_ftheta(cloud, cam)
    else:
        depth, _ = project_pinhole(cloud, cam)
    gio.write_depth(args.out, depth)
    print(f"rendered {int(depth.valid_mask.sum())} pixels -> {args.out}")
    return 0


def _register_posterior(cfg: PipelineConfig, geo_pair, img_pair) -> np.ndarray:
    if cfg.fusion == "geo-only":
        return posterior_softmax(similarity_geo(*geo_pair), cfg.tau_geo).values
    if cfg.fusion == "img-only":
        return posterior_softmax(similarity_img_maxpool(*img_pair), cfg.tau_img).values
    if cfg.fusion == "concat":
        from .bench import best_view_fields

        img_src, img_tgt = best_view_fields(*img_pair)
        return fuse_concat_baseline(img_src, img_tgt, geo_pair[0], geo_pair[1], cfg.tau_img)
    p_img = posterior_softmax(similarity_img_maxpool(*img_pair), cfg.tau_img)
    p_geo = posterior_softmax(similarity_geo(*geo_pair), cfg.tau_geo)
    if cfg.fusion == "or":
        return fuse_noisy_or(p_img, p_geo)
    prior = (
        cfg.prior_value
        if cfg.prior_mode == "scalar"
        else uniform_prior(geo_pair[0].n, geo_pair[1].n)
    )
    return fuse_noisy_and(p_img, p_geo, prior)


def register_pipeline(
    cfg: PipelineConfig,
    src_cloud,
    tgt_cloud,
    src_geo: FeatureField | None,
    tgt_geo: FeatureField | None,
    src_img: ViewFeatureStack | None,
    tgt_img: ViewFeatureStack | None,
    gt: RigidTransform | None = None,
):
    """Library-level equivalent of the register subcommand."""
    needs_geo = cfg.fusion in ("geo-only", "and", "or", "concat")
    needs_img = cfg.fusion in ("img-only", "and", "or", "concat")
    if needs_geo and (src_geo is None or tgt_geo is None):
        raise UsageError(f"fusion mode {cfg.fusion!r} requires geometric features for both clouds")
    if needs_img and (src_img is None or tgt_img is None):
        raise UsageError(f"fusion mode {cfg.fusion!r} requires image features for both clouds")

    geo_pair = img_pair = None
    if needs_geo:
        if src_geo.n != len(src_cloud) or tgt_geo.n != len(tgt_cloud):
            raise UsageError(
                f"geometric feature counts ({src_geo.n}, {tgt_geo.n}) do not match "
                f"cloud sizes ({len(src_cloud)}, {len(tgt_cloud)})"
            )
        geo_pair = (l2_normalize_rows(src_geo), l2_normalize_rows(tgt_geo))
    if needs_img:
        if src_img.n != len(src_cloud) or tgt_img.n != len(tgt_cloud):
            raise UsageError(
                f"image feature counts ({src_img.n}, {tgt_img.n}) do not match "
                f"cloud sizes ({len(src_cloud)}, {len(tgt_cloud)})"
            )
        if src_img.n_views != tgt_img.n_views:
            raise UsageError(
                f"image view counts differ: {src_img.n_views} vs {tgt_img.n_views}"
            )
        img_pair = (l2_normalize_views(src_img), l2_normalize_views(tgt_img))

    posterior = _register_posterior(cfg, geo_pair, img_pair)
    matches = mutual_nn_match(posterior)
    if len(matches) < 3:
        return matches, None
    robust_cfg = RobustConfig(
        d_comp=cfg.d_comp_m,
        d_inlier=cfg.d_inlier_m,
        hypotheses=cfg.hypotheses,
        min_inliers=cfg.min_inliers,
        top_seeds=cfg.top_seeds,
        seed=cfg.seed,
    )
    result = robust_register(matches, src_cloud, tgt_cloud, robust_cfg, gt=gt)
    return matches, result


def cmd_register(args) -> int:
    cfg = _load_pipeline_config(args.config)
    if args.fusion is not None:
        cfg = PipelineConfig.from_dict({**cfg.to_dict(), "fusion": args.fusion})

    src_cloud = gio.read_cloud(args.src_cloud)
    tgt_cloud = gio.read_cloud(args.tgt_cloud)

    def load_field(path, kind):
        if path is None:
            return None
        feats = read_features(path)
        if kind == "geo" and not isinstance(feats, FeatureField):
            raise UsageError(f"{path}: expected geometric features (branch 'geo')")
        if kind == "img" and not isinstance(feats, ViewFeatureStack):
            raise UsageError(f"{path}: expected image features (branch 'img')")
        return feats

    gt = _read_gt(args.gt) if args.gt else None
    matches, result = register_pipeline(
        cfg,
        src_cloud,
        tgt_cloud,
        load_field(args.src_geo, "geo"),
        load_field(args.tgt_geo, "geo"),
        load_field(args.src_img, "img"),
        load_field(args.tgt_img, "img"),
        gt=gt,
    )

    if result is None or not result.success:
        message = result.message if result is not None else "fewer than 3 mutual-NN matches"
        print(f"registration failed: {message}", file=sys.stderr)
        return 1

    out = {
        "rotation": [float(v) for v in result.transform.rotation.reshape(-1)],
        "translation": [float(v) for v in result.transform.translation],
        "n_matches": len(matches),
        "n_inliers": int(len(result.inlier_indices)),
        "fusion_mode": cfg.fusion,
    }
    if gt is not None:
        out["rre_deg"] = rre_degrees(result.transform.rotation, gt.rotation)
        out["rte_m"] = rte_meters(result.transform.translation, gt.translation)
    gio.write_json(args.out, out)
    print(f"registered with {out['n_inliers']} inliers -> {args.out}")
    return 0


def cmd_bench(args) -> int:
    config = BenchConfig() if args.config is None else BenchConfig.from_dict(_load_json(args.config))
    if args.seeds is not None:
        config = BenchConfig.from_dict({**config.to_dict(), "seeds": list(range(args.seeds))})
    report = run_benchmark(config)
    write_report(report, args.out_dir)
    print(f"benchmark report written to {args.out_dir}")
    return 0


def cmd_pr_curve(args) -> int:
    config = BenchConfig() if args.config is None else BenchConfig.from_dict(_load_json(args.config))
    from .bench import BranchSimSpec, SceneSpec, gen_scene, simulate_branches

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
            signal=config.img_signal,
            noise_sigma=config.img_noise,
            outlier_fraction=config.img_outlier_fraction,
            confusion_fraction=config.img_confusion_fraction,
            common_mode=config.img_common_mode,
            views_k=config.img_views_k,
            seed=args.seed,
        ),
        BranchSimSpec(
            dim=config.geo_dim,
            signal=config.geo_signal,
            noise_sigma=config.geo_noise,
            outlier_fraction=config.geo_outlier_fraction,
            confusion_fraction=config.geo_confusion_fraction,
            common_mode=config.geo_common_mode,
            views_k=1,
            seed=args.seed,
        ),
    )
    prior = config.prior_value if config.prior_mode == "scalar" else None
    posterior = method_posterior(args.method, feats, config.tau_img, config.tau_geo, prior)
    curve = pr_curve(posterior, scene.gt_pairs, scene, config.match_radius_m)
    gio.write_csv(
        args.out,
        ["threshold", "precision", "recall"],
        [list(t) for t in zip(curve.thresholds, curve.precisions, curve.recalls)],
    )
    print(f"pr curve ({len(curve.thresholds)} thresholds) -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="genreg",
        description="Training-free point cloud registration via probabilistic fusion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lift", help="back-project a depth file to a point cloud")
    p.add_argument("depth", help="depth file (.png 16-bit mm, or raw float32 m)")
    p.add_argument("camera", help="camera sidecar JSON")
    p.add_argument("out", help="output cloud (.xyz ascii, otherwise binary)")
    p.add_argument("--voxel", type=float, default=None,
                   help="voxel size in meters; downsample the lifted cloud")
    p.set_defaults(handler=cmd_lift)

    p = sub.add_parser("project", help="render a point cloud to a depth file")
    p.add_argument("cloud", help="input cloud file")
    p.add_argument("camera", help="camera sidecar JSON")
    p.add_argument("out", help="output depth file (.png or raw float32)")
    p.set_defaults(handler=cmd_project)

    p = sub.add_parser("register", help="estimate the rigid transform between two clouds")
    p.add_argument("src_cloud")
    p.add_argument("tgt_cloud")
    p.add_argument("--src-geo", help="source geometric feature file")
    p.add_argument("--tgt-geo", help="target geometric feature file")
    p.add_argument("--src-img", help="source image feature stack file")
    p.add_argument("--tgt-img", help="target image feature stack file")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--fusion", choices=FUSION_MODES, help="override the config fusion mode")
    p.add_argument("--gt", help="ground-truth transform JSON; adds rre_deg/rte_m to the output")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(handler=cmd_register)

    p = sub.add_parser("bench", help="run the synthetic benchmark suite")
    p.add_argument("--config", help="benchmark config JSON (defaults used when omitted)")
    p.add_argument("--seeds", type=int, help="override: run seeds 0..N-1")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("pr-curve", help="precision-recall curve for one method and seed")
    p.add_argument("--config", help="benchmark config JSON")
    p.add_argument("--method", required=True, help="one of the benchmark methods")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(handler=cmd_pr_curve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    if argv and argv[0] in ("register", "bench") and "--print-config" in argv[1:]:
        cfg = PipelineConfig() if argv[0] == "register" else BenchConfig()
        print(gio.dump_json(cfg.to_dict()))
        return 0
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
