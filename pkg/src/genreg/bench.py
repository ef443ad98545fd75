"""Synthetic benchmark harness: scene generation, branch-feature
simulation, precision-recall evaluation, and report emission.

The simulator stands in for the external feature extractors: points
that truly correspond share a latent unit descriptor per branch,
observed through independent per-branch (and per-view) perturbations,
while a configurable fraction of points gets unrelated random
descriptors per branch. Branches draw from independent counter-based
RNG streams, so their failure modes are independent by construction.

The distributional knobs (noise scales, outlier fractions) are
synthetic choices of this harness and are echoed into every report
header together with the generator name and seeds.
"""

from __future__ import annotations

import copy
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import io as gio
from .correspondence import PosteriorMatrix, posterior_softmax, similarity_geo, similarity_img_maxpool
from .features import FeatureField, ViewFeatureStack
from .fusion import fuse_concat_baseline, fuse_noisy_and, fuse_noisy_or, uniform_prior
from .geometry import PointCloud, RigidTransform, apply_transform, rotation_about_axis
from .pose import RobustConfig, mutual_nn_match, robust_register
from .rng import GENERATOR_NAME, STREAM_GEO_BRANCH, STREAM_IMG_BRANCH, STREAM_SCENE, make_stream

__all__ = [
    "SceneSpec",
    "BranchSimSpec",
    "Scene",
    "BranchFeatures",
    "PRCurve",
    "BenchConfig",
    "BenchReport",
    "METHODS",
    "gen_scene",
    "simulate_branches",
    "best_view_fields",
    "method_posterior",
    "pr_curve",
    "precision_at_recall",
    "run_benchmark",
    "write_report",
]

METHODS = ("img-only", "geo-only", "concat", "noisy-or", "noisy-and")


@dataclass(frozen=True)
class SceneSpec:
    """Synthetic registration problem parameters."""

    n_points: int = 400
    extent_m: float = 3.0
    overlap: float = 0.7
    rotation_deg: float = 40.0
    translation_m: float = 1.0
    point_noise_m: float = 0.005
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_points < 1 or self.extent_m <= 0:
            raise ValueError("n_points and extent_m must be positive")
        if not (0 < self.overlap <= 1):
            raise ValueError("overlap must lie in (0, 1]")
        if self.point_noise_m < 0:
            raise ValueError("point noise must be >= 0")


@dataclass(frozen=True)
class BranchSimSpec:
    """Descriptor simulator parameters for one branch.

    ``confusion_fraction`` models repetitive structure: that fraction of
    true pairs draws its latent from a shared pool (groups of two), so
    the branch scores the group's other member as highly as the true
    match. Groupings are drawn per branch, so the two branches are
    confused about different pairs.

    ``common_mode`` adds a fixed shared component to every descriptor of
    the branch (the hubness typical of learned embeddings). It offsets
    and compresses the branch's raw similarities without changing their
    ranking; a per-branch softmax absorbs it, whereas raw-similarity
    averaging across branches does not.
    """

    dim: int = 24
    signal: float = 1.0
    noise_sigma: float = 0.5
    outlier_fraction: float = 0.0
    confusion_fraction: float = 0.0
    common_mode: float = 0.0
    views_k: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1 or self.views_k < 1:
            raise ValueError("dim and views_k must be >= 1")
        if not (0 <= self.signal <= 1):
            raise ValueError("signal must lie in [0, 1]")
        if self.noise_sigma < 0 or not (0 <= self.outlier_fraction <= 1):
            raise ValueError("noise_sigma >= 0 and outlier_fraction in [0, 1] required")
        if not (0 <= self.confusion_fraction <= 1):
            raise ValueError("confusion_fraction must lie in [0, 1]")
        if self.common_mode < 0:
            raise ValueError("common_mode must be >= 0")


@dataclass(frozen=True, eq=False)
class Scene:
    src: PointCloud
    tgt: PointCloud
    t_gt: RigidTransform
    gt_pairs: np.ndarray  # (G, 2) int: (src index, tgt index)


@dataclass(frozen=True, eq=False)
class BranchFeatures:
    img_src: ViewFeatureStack
    img_tgt: ViewFeatureStack
    geo_src: FeatureField
    geo_tgt: FeatureField


@dataclass(frozen=True, eq=False)
class PRCurve:
    """Precision-recall sweep over match-confidence thresholds.

    Precision values are the standard interpolated form (running
    maximum toward lower thresholds), which makes precision
    nonincreasing and recall nondecreasing as the threshold drops.
    The raw prefix precision is not monotone in general.
    """

    thresholds: np.ndarray
    precisions: np.ndarray
    recalls: np.ndarray
    radius_m: float

    @property
    def max_recall(self) -> float:
        return float(self.recalls[-1]) if len(self.recalls) else 0.0


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.maximum(norms, np.finfo(np.float64).tiny)


def gen_scene(spec: SceneSpec) -> Scene:
    """Build a source/target pair with known transform and true pairs.

    The first round(overlap * n) source points reappear in the target,
    transformed and perturbed with isotropic Gaussian noise; the rest of
    each cloud is filled with distractor points so both sides keep
    n_points points. Fully determined by the seed.
    """
    rng = make_stream(spec.seed, STREAM_SCENE)
    half = spec.extent_m / 2.0
    n = spec.n_points
    src = rng.uniform(-half, half, (n, 3))

    axis = _unit_rows(rng, 1, 3)[0]
    rotation = rotation_about_axis(axis, np.radians(spec.rotation_deg))
    translation = _unit_rows(rng, 1, 3)[0] * spec.translation_m
    t_gt = RigidTransform(rotation, translation)

    n_overlap = int(round(spec.overlap * n))
    noise = rng.standard_normal((n_overlap, 3)) * spec.point_noise_m
    tgt_shared = src[:n_overlap] @ rotation.T + translation + noise
    distract = rng.uniform(-half, half, (n - n_overlap, 3)) @ rotation.T + translation
    tgt = np.vstack([tgt_shared, distract])

    pairs = np.arange(n_overlap, dtype=np.int64)
    return Scene(
        src=PointCloud(src),
        tgt=PointCloud(tgt),
        t_gt=t_gt,
        gt_pairs=np.column_stack([pairs, pairs]),
    )


def _renormalize(raw: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    return raw / np.maximum(norms, np.finfo(np.float64).tiny)


def _branch_field(
    rng: np.random.Generator,
    spec: BranchSimSpec,
    n_src: int,
    n_tgt: int,
    gt_pairs: np.ndarray,
    latents: np.ndarray,
    mode: np.ndarray,
    outlier_src: tuple[np.ndarray, np.ndarray],
    outlier_tgt: tuple[np.ndarray, np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    # noise_sigma is the expected perturbation norm relative to the unit
    # latent, so the per-coordinate Gaussian scale is sigma / sqrt(d).
    coord_sigma = spec.noise_sigma / np.sqrt(spec.dim)

    def side(n: int, pair_idx: np.ndarray, outliers: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        desc = _unit_rows(rng, n, spec.dim) + mode
        noisy = spec.signal * latents + coord_sigma * rng.standard_normal(latents.shape)
        desc[pair_idx] = noisy + mode
        out_idx, out_desc = outliers
        if len(out_idx):
            # Outlier descriptors are drawn once per branch and reused for
            # every view slice: a point the branch fails on is bad in all
            # conditioned views, whereas the true signal re-perturbs per
            # view and therefore benefits from cross-view pooling.
            desc[out_idx] = out_desc + mode
        return _renormalize(desc)

    src = side(n_src, gt_pairs[:, 0], outlier_src)
    tgt = side(n_tgt, gt_pairs[:, 1], outlier_tgt)
    return src, tgt


def simulate_branches(
    scene: Scene, img_spec: BranchSimSpec, geo_spec: BranchSimSpec
) -> BranchFeatures:
    """Draw per-branch descriptors for a scene.

    True correspondents share a latent unit descriptor per branch,
    perturbed independently per branch and, for the image branch, per
    view slice. Outlier points receive unrelated random descriptors;
    the outlier subsets are drawn per branch and per side, so a point
    can fail in one branch while the other still carries its signal.
    """
    n_src, n_tgt = len(scene.src), len(scene.tgt)
    pairs = scene.gt_pairs

    geo_rng = make_stream(geo_spec.seed, STREAM_GEO_BRANCH)
    geo_mode = geo_spec.common_mode * _unit_rows(geo_rng, 1, geo_spec.dim)[0]
    geo_latents = _confuse_latents(geo_rng, _unit_rows(geo_rng, len(pairs), geo_spec.dim), geo_spec)
    geo_out_src = _draw_outliers(geo_rng, n_src, geo_spec)
    geo_out_tgt = _draw_outliers(geo_rng, n_tgt, geo_spec)
    geo_src, geo_tgt = _branch_field(
        geo_rng, geo_spec, n_src, n_tgt, pairs, geo_latents, geo_mode, geo_out_src, geo_out_tgt
    )

    img_rng = make_stream(img_spec.seed, STREAM_IMG_BRANCH)
    img_mode = img_spec.common_mode * _unit_rows(img_rng, 1, img_spec.dim)[0]
    img_latents = _confuse_latents(img_rng, _unit_rows(img_rng, len(pairs), img_spec.dim), img_spec)
    img_out_src = _draw_outliers(img_rng, n_src, img_spec)
    img_out_tgt = _draw_outliers(img_rng, n_tgt, img_spec)
    n_views = img_spec.views_k**2
    src_stack = np.empty((n_views, n_src, img_spec.dim))
    tgt_stack = np.empty((n_views, n_tgt, img_spec.dim))
    for v in range(n_views):
        src_stack[v], tgt_stack[v] = _branch_field(
            img_rng, img_spec, n_src, n_tgt, pairs, img_latents, img_mode, img_out_src, img_out_tgt
        )

    return BranchFeatures(
        img_src=ViewFeatureStack(src_stack, k=img_spec.views_k),
        img_tgt=ViewFeatureStack(tgt_stack, k=img_spec.views_k),
        geo_src=FeatureField(geo_src),
        geo_tgt=FeatureField(geo_tgt),
    )


def _draw_outliers(
    rng: np.random.Generator, n: int, spec: BranchSimSpec
) -> tuple[np.ndarray, np.ndarray]:
    count = int(np.floor(spec.outlier_fraction * n))
    if count == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, spec.dim))
    idx = np.sort(rng.choice(n, size=count, replace=False)).astype(np.int64)
    return idx, _unit_rows(rng, count, spec.dim)


def _confuse_latents(
    rng: np.random.Generator, latents: np.ndarray, spec: BranchSimSpec
) -> np.ndarray:
    count = int(np.floor(spec.confusion_fraction * len(latents)))
    if count < 2:
        return latents
    chosen = rng.choice(len(latents), size=count, replace=False)
    # Pair up the chosen slots; each pair shares one latent, so the branch
    # cannot tell the two matches apart.
    out = latents.copy()
    for a, b in zip(chosen[0::2], chosen[1::2]):
        out[b] = out[a]
    return out


def best_view_fields(
    src: ViewFeatureStack, tgt: ViewFeatureStack
) -> tuple[FeatureField, FeatureField]:
    """Reduce view stacks to one descriptor per point for the concat
    baseline: each point keeps the view slice in which it scores its
    highest cross-cloud similarity.
    """
    if src.n_views != tgt.n_views:
        raise ValueError(f"view counts differ: {src.n_views} vs {tgt.n_views}")
    a = np.asarray(src.descriptors, dtype=np.float64)
    b = np.asarray(tgt.descriptors, dtype=np.float64)
    best_src = np.full(src.n, -np.inf)
    best_tgt = np.full(tgt.n, -np.inf)
    view_src = np.zeros(src.n, dtype=np.int64)
    view_tgt = np.zeros(tgt.n, dtype=np.int64)
    for k in range(src.n_views):
        sim = a[k] @ b[k].T
        row_max = sim.max(axis=1) if tgt.n else np.full(src.n, -np.inf)
        col_max = sim.max(axis=0) if src.n else np.full(tgt.n, -np.inf)
        upd = row_max > best_src
        view_src[upd] = k
        best_src[upd] = row_max[upd]
        upd = col_max > best_tgt
        view_tgt[upd] = k
        best_tgt[upd] = col_max[upd]
    src_field = FeatureField(a[view_src, np.arange(src.n)])
    tgt_field = FeatureField(b[view_tgt, np.arange(tgt.n)])
    return src_field, tgt_field


def method_posterior(
    method: str,
    feats: BranchFeatures,
    tau_img: float,
    tau_geo: float,
    prior: float | None = None,
) -> np.ndarray:
    """Correspondence matrix for one method name.

    ``prior`` only matters for noisy-and; None selects the uniform
    1 / (N_src * N_tgt).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "concat":
        img_src, img_tgt = best_view_fields(feats.img_src, feats.img_tgt)
        return fuse_concat_baseline(img_src, img_tgt, feats.geo_src, feats.geo_tgt, tau_img)

    p_img: PosteriorMatrix | None = None
    p_geo: PosteriorMatrix | None = None
    if method in ("img-only", "noisy-or", "noisy-and"):
        p_img = posterior_softmax(similarity_img_maxpool(feats.img_src, feats.img_tgt), tau_img)
    if method in ("geo-only", "noisy-or", "noisy-and"):
        p_geo = posterior_softmax(similarity_geo(feats.geo_src, feats.geo_tgt), tau_geo)

    if method == "img-only":
        return p_img.values
    if method == "geo-only":
        return p_geo.values
    if method == "noisy-or":
        return fuse_noisy_or(p_img, p_geo)
    if prior is None:
        prior = uniform_prior(feats.geo_src.n, feats.geo_tgt.n)
    return fuse_noisy_and(p_img, p_geo, prior)


def pr_curve(posterior, gt_pairs: np.ndarray, scene: Scene, radius: float) -> PRCurve:
    """Precision-recall over mutual-NN matches of a correspondence matrix.

    A match (i, j) counts as correct when || T_gt(src_i) - tgt_j || is
    within ``radius``. The curve holds one row per distinct confidence
    value; an empty match set yields the conventional single row
    (threshold 1, precision 1, recall 0).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    matches = mutual_nn_match(posterior)
    n_gt = len(gt_pairs)
    if len(matches) == 0 or n_gt == 0:
        return PRCurve(np.array([1.0]), np.array([1.0]), np.array([0.0]), radius)

    mapped = apply_transform(scene.t_gt, scene.src).points[matches.src_indices]
    correct = np.linalg.norm(mapped - scene.tgt.points[matches.tgt_indices], axis=1) <= radius

    order = np.lexsort((matches.src_indices, -matches.confidences))
    conf = matches.confidences[order]
    hits = np.cumsum(correct[order])
    emitted = np.arange(1, len(conf) + 1)
    # Collapse runs of equal confidence: counts at a threshold include
    # every match with confidence >= that threshold.
    last_of_run = np.nonzero(np.append(conf[1:] != conf[:-1], True))[0]
    thresholds = conf[last_of_run]
    precision_raw = hits[last_of_run] / emitted[last_of_run]
    recalls = hits[last_of_run] / n_gt
    precisions = np.maximum.accumulate(precision_raw[::-1])[::-1]
    return PRCurve(thresholds, precisions, recalls, radius)


def precision_at_recall(curve: PRCurve, recall: float) -> float:
    """Interpolated precision at the first threshold reaching ``recall``;
    0 when the curve never reaches it."""
    reached = np.nonzero(curve.recalls >= recall)[0]
    if len(reached) == 0:
        return 0.0
    return float(curve.precisions[reached[0]])


# ---------------------------------------------------------------------------
# benchmark configuration and runner
# ---------------------------------------------------------------------------

@dataclass
class BenchConfig:
    """Flat benchmark configuration; serialized as flat JSON.

    The default mixed-noise regime models two complementary branches:
    the image branch is weak per view (heavy view-conditioned noise; the
    K^2 max-pool recovers most of the signal) with a small catastrophic
    outlier fraction, and the geometric branch is strong but carries a
    large common-mode descriptor component, compressing its raw
    similarity spread. Per-branch softmax posteriors absorb that
    compression, while raw-similarity concatenation lets the noisy image
    similarities dominate, which is what separates the fusion operators
    from the concat baseline here.
    """

    n_points: int = 400
    extent_m: float = 3.0
    overlap: float = 0.7
    rotation_deg: float = 40.0
    translation_m: float = 1.0
    point_noise_m: float = 0.012
    img_dim: int = 32
    img_views_k: int = 4
    img_signal: float = 1.0
    img_noise: float = 1.8
    img_outlier_fraction: float = 0.05
    img_confusion_fraction: float = 0.0
    img_common_mode: float = 0.0
    geo_dim: int = 256
    geo_signal: float = 1.0
    geo_noise: float = 0.4
    geo_outlier_fraction: float = 0.05
    geo_confusion_fraction: float = 0.0
    geo_common_mode: float = 1.5
    tau_img: float = 0.1
    tau_geo: float = 0.1
    prior_mode: str = "uniform"
    prior_value: float | None = None
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    seeds: list[int] = field(default_factory=lambda: list(range(20)))
    match_radius_m: float = 0.05
    rot_thresholds_deg: list[float] = field(default_factory=lambda: [5.0, 10.0, 45.0])
    trans_thresholds_m: list[float] = field(default_factory=lambda: [0.05, 0.10, 0.25])
    d_comp_m: float = 0.05
    d_inlier_m: float = 0.05
    hypotheses: int = 600
    min_inliers: int = 5
    top_seeds: int = 100
    recall_grid_points: int = 8

    def __post_init__(self) -> None:
        if self.prior_mode not in ("uniform", "scalar"):
            raise ValueError(f"prior_mode must be 'uniform' or 'scalar', got {self.prior_mode!r}")
        if self.prior_mode == "scalar":
            if self.prior_value is None or not (0 < self.prior_value < 1):
                raise ValueError("scalar prior_mode requires prior_value in (0, 1)")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; expected subset of {METHODS}")
        if len(self.seeds) == 0:
            raise ValueError("at least one seed required")
        if self.match_radius_m <= 0:
            raise ValueError("match_radius_m must be positive")
        if self.recall_grid_points < 2:
            raise ValueError("recall_grid_points must be >= 2")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        known = {f: None for f in cls.__dataclass_fields__}
        unknown = [k for k in data if k not in known]
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {name: copy.copy(getattr(self, name)) for name in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class BenchReport:
    config: BenchConfig
    trial_rows: list[dict]
    aggregate: dict
    pr_curves: dict


def _worker_count() -> int:
    raw = os.environ.get("GENREG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _run_trial(config: BenchConfig, seed: int) -> dict:
    scene = gen_scene(
        SceneSpec(
            n_points=config.n_points,
            extent_m=config.extent_m,
            overlap=config.overlap,
            rotation_deg=config.rotation_deg,
            translation_m=config.translation_m,
            point_noise_m=config.point_noise_m,
            seed=seed,
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
            seed=seed,
        ),
        BranchSimSpec(
            dim=config.geo_dim,
            signal=config.geo_signal,
            noise_sigma=config.geo_noise,
            outlier_fraction=config.geo_outlier_fraction,
            confusion_fraction=config.geo_confusion_fraction,
            common_mode=config.geo_common_mode,
            views_k=1,
            seed=seed,
        ),
    )
    prior = config.prior_value if config.prior_mode == "scalar" else None
    robust_cfg = RobustConfig(
        d_comp=config.d_comp_m,
        d_inlier=config.d_inlier_m,
        hypotheses=config.hypotheses,
        min_inliers=config.min_inliers,
        top_seeds=config.top_seeds,
        seed=seed,
    )

    mapped = apply_transform(scene.t_gt, scene.src).points
    out: dict = {}
    for method in config.methods:
        posterior = method_posterior(method, feats, config.tau_img, config.tau_geo, prior)
        matches = mutual_nn_match(posterior)
        if len(matches):
            dist = np.linalg.norm(
                mapped[matches.src_indices] - scene.tgt.points[matches.tgt_indices], axis=1
            )
            precision = float((dist <= config.match_radius_m).mean())
        else:
            precision = 1.0
        if len(matches) >= 3:
            result = robust_register(matches, scene.src, scene.tgt, robust_cfg, gt=scene.t_gt)
        else:
            result = None
        row = {
            "method": method,
            "seed": seed,
            "n_matches": len(matches),
            "rre_deg": result.rre_deg if result is not None and result.success else float("nan"),
            "rte_m": result.rte_m if result is not None and result.success else float("nan"),
            "success": int(result is not None and result.success),
            "precision": precision,
        }
        curve = None
        if method in ("noisy-and", "noisy-or"):
            curve = pr_curve(posterior, scene.gt_pairs, scene, config.match_radius_m)
        out[method] = (row, curve)
    return out


def run_benchmark(config: BenchConfig) -> BenchReport:
    """Evaluate every configured method on every scene seed.

    Trials are independent; ``GENREG_THREADS`` caps the worker pool.
    The report is a pure function of (config, seeds): rows are ordered
    by (method order in the config, ascending seed) regardless of the
    execution schedule.
    """
    seeds = list(config.seeds)
    workers = min(_worker_count(), len(seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_seed = dict(zip(seeds, pool.map(lambda s: _run_trial(config, s), seeds)))
    else:
        per_seed = {s: _run_trial(config, s) for s in seeds}

    rows: list[dict] = []
    curves: dict = {}
    for method in config.methods:
        for seed in seeds:
            row, curve = per_seed[seed][method]
            rows.append(row)
            if curve is not None:
                curves[(method, seed)] = curve

    aggregate = _aggregate(config, rows, curves)
    return BenchReport(config=config, trial_rows=rows, aggregate=aggregate, pr_curves=curves)


def _fmt_cm(meters: float) -> str:
    return f"{meters * 100:g}cm"


def _aggregate(config: BenchConfig, rows: list[dict], curves: dict) -> dict:
    methods_block = {}
    for method in config.methods:
        mrows = [r for r in rows if r["method"] == method]
        ok = [r for r in mrows if r["success"]]
        rre = np.array([r["rre_deg"] for r in ok])
        rte = np.array([r["rte_m"] for r in ok])
        block = {
            "n_trials": len(mrows),
            "n_failed": len(mrows) - len(ok),
            "mean_rre_deg": float(rre.mean()) if len(rre) else None,
            "median_rre_deg": float(np.median(rre)) if len(rre) else None,
            "mean_rte_m": float(rte.mean()) if len(rte) else None,
            "median_rte_m": float(np.median(rte)) if len(rte) else None,
            "mean_n_matches": float(np.mean([r["n_matches"] for r in mrows])),
            "mean_precision": float(np.mean([r["precision"] for r in mrows])),
        }
        rot_acc = {}
        for thr in config.rot_thresholds_deg:
            hits = [1 for r in ok if r["rre_deg"] <= thr]
            rot_acc[f"{thr:g}deg"] = len(hits) / len(mrows)
        trans_acc = {}
        for thr in config.trans_thresholds_m:
            hits = [1 for r in ok if r["rte_m"] <= thr]
            trans_acc[_fmt_cm(thr)] = len(hits) / len(mrows)
        block["rotation_accuracy"] = rot_acc
        block["translation_accuracy"] = trans_acc
        methods_block[method] = block

    report = {
        "rng": {"generator": GENERATOR_NAME, "seeds": list(config.seeds)},
        "config": config.to_dict(),
        "methods": methods_block,
    }

    if "noisy-and" in config.methods and "noisy-or" in config.methods:
        report["fusion_comparison"] = _fusion_comparison(config, methods_block, curves)
    return report


def _fusion_comparison(config: BenchConfig, methods_block: dict, curves: dict) -> dict:
    seeds = list(config.seeds)
    and_curves = [curves[("noisy-and", s)] for s in seeds]
    or_curves = [curves[("noisy-or", s)] for s in seeds]
    reach = min(c.max_recall for c in and_curves + or_curves)
    if reach < 0.05:
        return {"note": "curves reach recall below 0.05; comparison grid not defined"}
    grid = np.linspace(0.05, reach, config.recall_grid_points)

    and_prec = np.array([[precision_at_recall(c, r) for r in grid] for c in and_curves])
    or_prec = np.array([[precision_at_recall(c, r) for r in grid] for c in or_curves])
    and_mean = and_prec.mean(axis=0)
    or_mean = or_prec.mean(axis=0)
    violating = [
        int(s) for i, s in enumerate(seeds) if (and_prec[i] < or_prec[i]).any()
    ]

    comparison = {
        "recall_grid": [float(r) for r in grid],
        "noisy_and_mean_precision": [float(v) for v in and_mean],
        "noisy_or_mean_precision": [float(v) for v in or_mean],
        "and_precision_ge_or_at_all_grid_points": bool((and_mean >= or_mean).all()),
        "seeds_with_pointwise_violation": violating,
    }

    if "concat" in config.methods:
        concat_rre = methods_block["concat"]["mean_rre_deg"]
        for name in ("noisy-and", "noisy-or"):
            fused_rre = methods_block[name]["mean_rre_deg"]
            key = name.replace("-", "_") + "_rre_improvement_over_concat"
            if concat_rre is None or fused_rre is None or concat_rre <= 0:
                comparison[key] = None
            else:
                comparison[key] = float((concat_rre - fused_rre) / concat_rre)
    return comparison


def write_report(report: BenchReport, out_dir) -> None:
    """Emit trials.csv, aggregate.json, and per-seed PR curve CSVs.

    Reruns with an identical config produce byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    precision_col = f"precision@{_fmt_cm(report.config.match_radius_m)}"
    header = ["method", "seed", "n_matches", "rre_deg", "rte_m", "success", precision_col]
    rows = [
        [r["method"], r["seed"], r["n_matches"], r["rre_deg"], r["rte_m"], r["success"], r["precision"]]
        for r in report.trial_rows
    ]
    gio.write_csv(os.path.join(out_dir, "trials.csv"), header, rows)
    gio.write_json(os.path.join(out_dir, "aggregate.json"), report.aggregate)

    if report.pr_curves:
        pr_dir = os.path.join(out_dir, "pr")
        os.makedirs(pr_dir, exist_ok=True)
        for (method, seed), curve in sorted(report.pr_curves.items()):
            path = os.path.join(pr_dir, f"pr_{method}_s{seed}.csv")
            gio.write_csv(
                path,
                ["threshold", "precision", "recall"],
                [list(t) for t in zip(curve.thresholds, curve.precisions, curve.recalls)],
            )
