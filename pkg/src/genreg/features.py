"""Per-point descriptors, 2D-to-3D feature transfer, and the feature
interchange file format.

Interchange format ("FIF"): the binary layout is

    magic ``FIF1`` | uint32 version | uint32 V | uint32 N | uint32 d

followed by V*N*d little-endian float32 values in row-major order,
plus a JSON sidecar ``{branch: "img"|"geo", K?, d, source_model}`` at
``<path>.json``. Geometric fields use V = 1; image stacks carry V = K^2
view-conditioned descriptor sets.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud

__all__ = [
    "FeatureField",
    "ViewFeatureStack",
    "LiftedPixelFeatures",
    "FeatureFileError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedPayloadError",
    "DimensionError",
    "l2_normalize_rows",
    "l2_normalize_views",
    "lift_image_features",
    "write_features",
    "read_features",
    "sidecar_path",
]

FIF_MAGIC = b"FIF1"
FIF_VERSION = 1
# Refuse to allocate absurd payloads declared by a corrupt header.
MAX_ELEMENTS = 1 << 31


class FeatureFileError(ValueError):
    """Base class for feature interchange format violations."""


class BadMagicError(FeatureFileError):
    pass


class VersionMismatchError(FeatureFileError):
    pass


class TruncatedPayloadError(FeatureFileError):
    pass


class DimensionError(FeatureFileError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureField:
    """N x d descriptor matrix for one point cloud."""

    descriptors: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.descriptors)
        if d.ndim != 2:
            raise ValueError(f"descriptors must be 2D, got shape {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("descriptor entries must be finite")
        object.__setattr__(self, "descriptors", d)

    @property
    def n(self) -> int:
        return self.descriptors.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]


@dataclass(frozen=True, eq=False)
class ViewFeatureStack:
    """V x N x d descriptor tensor; V = K^2 view-conditioned slices."""

    descriptors: np.ndarray
    k: int | None = None

    def __post_init__(self) -> None:
        d = np.asarray(self.descriptors)
        if d.ndim != 3:
            raise ValueError(f"stack must be 3D (V, N, d), got shape {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("descriptor entries must be finite")
        if self.k is not None and d.shape[0] != self.k * self.k:
            raise ValueError(f"stack has {d.shape[0]} views but K={self.k} implies {self.k ** 2}")
        object.__setattr__(self, "descriptors", d)

    @property
    def n_views(self) -> int:
        return self.descriptors.shape[0]

    @property
    def n(self) -> int:
        return self.descriptors.shape[1]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[2]


@dataclass(frozen=True, eq=False)
class LiftedPixelFeatures:
    """Pixel descriptors lifted to 3D: P x 3 positions plus P x d features."""

    pixel_points: np.ndarray
    pixel_descriptors: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.pixel_points, dtype=np.float64)
        desc = np.asarray(self.pixel_descriptors)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if desc.size == 0:
            desc = desc.reshape(0, desc.shape[-1] if desc.ndim == 2 else 0)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"pixel_points must have shape (P, 3), got {pts.shape}")
        if desc.ndim != 2 or desc.shape[0] != pts.shape[0]:
            raise ValueError("pixel_descriptors must align with pixel_points")
        object.__setattr__(self, "pixel_points", pts)
        object.__setattr__(self, "pixel_descriptors", desc)

    def __len__(self) -> int:
        return self.pixel_points.shape[0]


def l2_normalize_rows(f: FeatureField) -> FeatureField:
    """Scale each nonzero row to unit norm; zero rows are left untouched."""
    d = np.asarray(f.descriptors, dtype=np.float64)
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    return FeatureField(np.where(norms > 0, d / np.where(norms > 0, norms, 1.0), 0.0))


def l2_normalize_views(s: ViewFeatureStack) -> ViewFeatureStack:
    """Row-normalize each view slice independently."""
    d = np.asarray(s.descriptors, dtype=np.float64)
    norms = np.linalg.norm(d, axis=2, keepdims=True)
    return ViewFeatureStack(np.where(norms > 0, d / np.where(norms > 0, norms, 1.0), 0.0), k=s.k)


def _resolve_tie(tree: cKDTree, pixel_points: np.ndarray, query: np.ndarray, kd_dist: float) -> int:
    # Exact-tie rule: among pixel points at the minimal distance, the
    # lowest index wins. Distances are recomputed directly so the choice
    # does not depend on kd-tree internals.
    candidates = sorted(tree.query_ball_point(query, r=kd_dist * (1 + 1e-9) + 1e-300))
    diffs = pixel_points[candidates] - query
    d2 = np.einsum("ij,ij->i", diffs, diffs)
    best = d2.min()
    for cand, dist2 in zip(candidates, d2):
        if dist2 == best:
            return int(cand)
    raise AssertionError("unreachable")


def lift_image_features(
    lp: LiftedPixelFeatures, c: PointCloud, max_dist: float
) -> tuple[FeatureField, np.ndarray]:
    """Assign each cloud point the descriptor of its nearest pixel point.

    Exact nearest neighbor; an exact distance tie is broken by the lowest
    pixel index. Points farther than ``max_dist`` from every pixel point
    get a zero descriptor and a False coverage flag. An empty lifted set
    yields an all-uncovered result.
    """
    if max_dist <= 0:
        raise ValueError("max_dist must be positive")
    n = len(c)
    dim = lp.pixel_descriptors.shape[1]
    out = np.zeros((n, dim))
    covered = np.zeros(n, dtype=bool)
    if len(lp) == 0 or n == 0:
        return FeatureField(out), covered

    tree = cKDTree(lp.pixel_points)
    if len(lp) == 1:
        dist = np.linalg.norm(c.points - lp.pixel_points[0], axis=1)
        idx = np.zeros(n, dtype=np.int64)
    else:
        dists2, idx2 = tree.query(c.points, k=2)
        dist, idx = dists2[:, 0], idx2[:, 0].astype(np.int64)
        near_tie = (dists2[:, 1] - dists2[:, 0]) <= 1e-12 * np.maximum(dists2[:, 0], 1e-30)
        for i in np.nonzero(near_tie)[0]:
            idx[i] = _resolve_tie(tree, lp.pixel_points, c.points[i], float(dist[i]))

    covered = dist <= max_dist
    out[covered] = lp.pixel_descriptors[idx[covered]]
    return FeatureField(out), covered


def sidecar_path(path) -> str:
    return str(path) + ".json"


def write_features(
    path,
    features: FeatureField | ViewFeatureStack,
    *,
    branch: str,
    source_model: str,
    k: int | None = None,
) -> None:
    """Write a feature file plus its JSON sidecar.

    Values are stored as little-endian float32; pass float32 data for a
    bit-exact write/read round trip.
    """
    if branch not in ("img", "geo"):
        raise ValueError(f"branch must be 'img' or 'geo', got {branch!r}")
    if isinstance(features, FeatureField):
        data = features.descriptors[None, :, :]
    elif isinstance(features, ViewFeatureStack):
        data = features.descriptors
        if k is None:
            k = features.k
    else:
        raise TypeError(f"cannot write {type(features).__name__}")
    if branch == "geo" and data.shape[0] != 1:
        raise DimensionError("geometric features must have V=1")
    if k is not None and data.shape[0] != k * k:
        raise DimensionError(f"V={data.shape[0]} inconsistent with K={k}")

    v, n, d = data.shape
    sidecar = {"branch": branch, "d": d, "source_model": source_model}
    if k is not None:
        sidecar["K"] = int(k)
    with open(path, "wb") as fh:
        fh.write(FIF_MAGIC)
        fh.write(struct.pack("<IIII", FIF_VERSION, v, n, d))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh)
        fh.write("\n")


def read_features(path) -> FeatureField | ViewFeatureStack:
    """Read a feature file; the sidecar branch tag selects the return type.

    Raises a distinct error per failure mode: BadMagicError,
    VersionMismatchError, TruncatedPayloadError, DimensionError.
    """
    side = sidecar_path(path)
    if not os.path.exists(side):
        raise FeatureFileError(f"feature sidecar not found: {side}")
    with open(side, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    branch = meta.get("branch")
    if branch not in ("img", "geo"):
        raise FeatureFileError(f"{side}: branch must be 'img' or 'geo', got {branch!r}")

    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise TruncatedPayloadError(f"{path}: file shorter than magic")
    if blob[:4] != FIF_MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 20:
        raise TruncatedPayloadError(f"{path}: truncated header")
    version, v, n, d = struct.unpack("<IIII", blob[4:20])
    if version != FIF_VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {FIF_VERSION}")
    if v * n * d > MAX_ELEMENTS:
        raise DimensionError(f"{path}: header declares {v}x{n}x{d} values; too large")
    expected = 20 + 4 * v * n * d
    if len(blob) < expected:
        raise TruncatedPayloadError(f"{path}: payload holds {len(blob) - 20} bytes, "
                                    f"header implies {expected - 20}")
    if len(blob) > expected:
        raise DimensionError(f"{path}: {len(blob) - expected} trailing bytes beyond "
                             "the declared dimensions")
    if "d" in meta and int(meta["d"]) != d:
        raise DimensionError(f"{path}: sidecar d={meta['d']} but header d={d}")

    k = meta.get("K")
    if k is not None:
        k = int(k)
        if k * k != v:
            raise DimensionError(f"{path}: sidecar K={k} implies {k * k} views, header has {v}")

    data = np.frombuffer(blob, dtype="<f4", offset=20).reshape(v, n, d)
    if branch == "geo":
        if v != 1:
            raise DimensionError(f"{path}: geometric field must have V=1, header has V={v}")
        return FeatureField(np.array(data[0]))
    return ViewFeatureStack(np.array(data), k=k)
