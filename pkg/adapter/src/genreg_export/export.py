"""Export pipelines: generated frames and raw clouds in, FIF1 files out.

Image exports consume one temporally concatenated frame sequence (source
segment followed by target segment, as produced by depth-conditioned
video generation), drop configurable safeguard frames around the
segment transition, select K uniformly spaced frames per segment
(endpoints included), run the matcher on all K^2 cross pairs, and bind
the resulting dense pixel descriptors to the observed cloud points by
nearest neighbor in 3D. Depth frames are assumed to share the provided
camera and to be expressed in the cloud's coordinate frame (the
single-virtual-camera setting); multi-pose sequences are out of scope.
"""

from __future__ import annotations

import datetime as _dt
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import formats
from .backends import LocalStatsDescriptor, PatchGridMatcher

__all__ = ["ExportManifest", "export_image_features", "export_geo_features", "select_frames"]

DEFAULT_SAFEGUARD = 4
DEFAULT_MAX_LIFT_DIST = 0.1


@dataclass
class ExportManifest:
    source_model: str
    checkpoint_hash: str
    branch: str
    k: int | None
    frame_indices: dict | None
    image_resolution: list | None
    d: int
    outputs: list
    created: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    def to_dict(self) -> dict:
        return {
            "source_model": self.source_model,
            "checkpoint_hash": self.checkpoint_hash,
            "branch": self.branch,
            "K": self.k,
            "frame_indices": self.frame_indices,
            "image_resolution": self.image_resolution,
            "d": self.d,
            "outputs": self.outputs,
            "created": self.created,
        }

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def select_frames(n_frames: int, k: int) -> np.ndarray:
    """K uniformly spaced frame indices including both endpoints."""
    if k < 1:
        raise ValueError("K must be >= 1")
    if n_frames < k:
        raise ValueError(f"frame-count shortfall: need at least {k} frames, have {n_frames}")
    idx = np.unique(np.round(np.linspace(0, n_frames - 1, k)).astype(int))
    if len(idx) != k:
        raise ValueError(f"frame selection collapsed to {len(idx)} indices for K={k}")
    return idx


def _split_sequence(n_total: int, split_index: int | None, safeguard: int, k: int):
    split = n_total // 2 if split_index is None else split_index
    if not (0 < split < n_total):
        raise ValueError(f"split index {split} outside the sequence of {n_total} frames")
    src_ids = np.arange(0, split - safeguard)
    tgt_ids = np.arange(split + safeguard, n_total)
    if len(src_ids) < k or len(tgt_ids) < k:
        raise ValueError(
            f"frame-count shortfall after dropping {safeguard} safeguard frames per side: "
            f"{len(src_ids)} source / {len(tgt_ids)} target frames left, need {k}"
        )
    return src_ids[select_frames(len(src_ids), k)], tgt_ids[select_frames(len(tgt_ids), k)]


def _bind_to_cloud(
    pixel_points: np.ndarray, pixel_desc: np.ndarray, cloud: np.ndarray, max_dist: float
) -> np.ndarray:
    """Nearest-pixel descriptor per cloud point; zero rows when uncovered."""
    out = np.zeros((len(cloud), pixel_desc.shape[1]), dtype=np.float64)
    if len(pixel_points) == 0 or len(cloud) == 0:
        return out
    tree = cKDTree(pixel_points)
    dist, idx = tree.query(cloud, k=1)
    covered = dist <= max_dist
    out[covered] = pixel_desc[idx[covered]]
    return out


def export_image_features(
    frame_paths: list,
    depth_paths: list,
    camera_path,
    src_cloud_path,
    tgt_cloud_path,
    k: int,
    out_prefix,
    *,
    backend=None,
    split_index: int | None = None,
    safeguard: int = DEFAULT_SAFEGUARD,
    max_lift_dist: float = DEFAULT_MAX_LIFT_DIST,
) -> ExportManifest:
    """Run the matcher over all K^2 cross pairs and write both stacks.

    ``frame_paths``/``depth_paths`` list the concatenated sequence in
    temporal order (source segment then target segment). Writes
    ``<prefix>_src.fif`` and ``<prefix>_tgt.fif`` (plus sidecars) and a
    ``<prefix>_manifest.json``; returns the manifest.
    """
    if len(frame_paths) != len(depth_paths):
        raise ValueError(
            f"{len(frame_paths)} frames but {len(depth_paths)} depth maps; they must align"
        )
    backend = backend or PatchGridMatcher()
    camera = formats.read_camera(camera_path)
    src_cloud = formats.read_cloud(src_cloud_path)
    tgt_cloud = formats.read_cloud(tgt_cloud_path)

    src_ids, tgt_ids = _split_sequence(len(frame_paths), split_index, safeguard, k)

    def load(ids):
        frames = [formats.read_image(frame_paths[i]) for i in ids]
        lifted = []
        for i in ids:
            depth = formats.read_depth(depth_paths[i], camera)
            pts, pix = formats.lift_pixels(depth, camera)
            lifted.append((pts, pix))
        return frames, lifted

    src_frames, src_lifted = load(src_ids)
    tgt_frames, tgt_lifted = load(tgt_ids)
    height, width = src_frames[0].shape[:2]
    for frame in src_frames + tgt_frames:
        if frame.shape[:2] != (height, width):
            raise ValueError("frames in a sequence must share one resolution")

    n_views = k * k
    src_stack = np.zeros((n_views, len(src_cloud), backend.dim), dtype=np.float64)
    tgt_stack = np.zeros((n_views, len(tgt_cloud), backend.dim), dtype=np.float64)
    # View slice v = i * K + j holds the pair (source frame i, target frame j).
    for i in range(k):
        for j in range(k):
            desc_a, desc_b = backend.match(src_frames[i], tgt_frames[j])
            v = i * k + j
            pts_a, pix_a = src_lifted[i]
            src_stack[v] = _bind_to_cloud(
                pts_a, desc_a[pix_a[:, 0], pix_a[:, 1]], src_cloud, max_lift_dist
            )
            pts_b, pix_b = tgt_lifted[j]
            tgt_stack[v] = _bind_to_cloud(
                pts_b, desc_b[pix_b[:, 0], pix_b[:, 1]], tgt_cloud, max_lift_dist
            )

    out_src = f"{out_prefix}_src.fif"
    out_tgt = f"{out_prefix}_tgt.fif"
    formats.write_fif(out_src, src_stack, branch="img", source_model=backend.name, k=k)
    formats.write_fif(out_tgt, tgt_stack, branch="img", source_model=backend.name, k=k)

    manifest = ExportManifest(
        source_model=backend.name,
        checkpoint_hash=backend.checkpoint_hash,
        branch="img",
        k=k,
        frame_indices={"src": [int(i) for i in src_ids], "tgt": [int(i) for i in tgt_ids]},
        image_resolution=[int(width), int(height)],
        d=backend.dim,
        outputs=[os.path.basename(out_src), os.path.basename(out_tgt)],
    )
    manifest.write(f"{out_prefix}_manifest.json")
    return manifest


def export_geo_features(cloud_path, out_path, *, backend=None) -> ExportManifest:
    """Describe a cloud with the geometric backend and write a V=1 field."""
    backend = backend or LocalStatsDescriptor()
    cloud = formats.read_cloud(cloud_path)
    desc = backend.describe(cloud)
    formats.write_fif(out_path, desc[None, :, :], branch="geo", source_model=backend.name)
    manifest = ExportManifest(
        source_model=backend.name,
        checkpoint_hash=backend.checkpoint_hash,
        branch="geo",
        k=None,
        frame_indices=None,
        image_resolution=None,
        d=backend.dim,
        outputs=[os.path.basename(str(out_path))],
    )
    manifest.write(f"{out_path}.manifest.json")
    return manifest
