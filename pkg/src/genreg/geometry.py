"""Rigid-body primitives, camera models, and point cloud utilities.

Conventions used throughout the package: points are float64 arrays of
shape (N, 3) in meters; depth values are meters with 0 marking an
invalid pixel; rotations act on column vectors, so a transform maps
``p`` to ``R @ p + t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RigidTransform",
    "PointCloud",
    "DepthMap",
    "PinholeCamera",
    "FThetaCamera",
    "DegenerateConfigurationError",
    "rotation_about_axis",
    "apply_transform",
    "compose",
    "invert",
    "lift_depth",
    "project_pinhole",
    "project_ftheta",
    "lift_ftheta",
    "voxel_downsample",
]

ORTHONORMALITY_TOL = 1e-9


class DegenerateConfigurationError(ValueError):
    """Raised when a point configuration cannot constrain a rotation."""


def _frozen_f64(a, shape=None) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    if shape is not None and out.shape != shape:
        raise ValueError(f"expected array of shape {shape}, got {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE(3) element: proper rotation (3x3) plus translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = _frozen_f64(self.rotation, (3, 3))
        t = _frozen_f64(self.translation, (3,))
        if not (np.isfinite(r).all() and np.isfinite(t).all()):
            raise ValueError("transform entries must be finite")
        defect = np.linalg.norm(r.T @ r - np.eye(3))
        if defect > ORTHONORMALITY_TOL:
            raise ValueError(f"rotation is not orthonormal (defect {defect:.3e})")
        det = float(np.linalg.det(r))
        if abs(det - 1.0) > ORTHONORMALITY_TOL:
            raise ValueError(f"rotation must have determinant +1 (got {det})")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered set of 3D points in meters, shape (N, 3), N >= 0."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Depth image in meters; a value of exactly 0 marks an invalid pixel."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"depth values must be 2D, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("depth values must be finite")
        if (v < 0).any():
            raise ValueError("depth values must be >= 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.values > 0


@dataclass(frozen=True)
class PinholeCamera:
    """Perspective intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class FThetaCamera:
    """Equidistant wide-angle intrinsics: image radius r = f * theta.

    ``f`` is pixels per radian of ray angle; ``theta_max`` bounds the
    field of view (up to pi). Stored depth is Euclidean range, unlike
    the pinhole convention of storing the z coordinate.
    """

    f: float
    cx: float
    cy: float
    theta_max: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.f <= 0:
            raise ValueError("radial scale f must be positive")
        if not (0 < self.theta_max <= np.pi):
            raise ValueError("theta_max must lie in (0, pi]")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")


def rotation_about_axis(axis, angle_rad: float) -> np.ndarray:
    """Proper rotation by ``angle_rad`` about ``axis`` (Rodrigues formula)."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(a)
    if norm == 0:
        raise ValueError("rotation axis must be nonzero")
    x, y, z = a / norm
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle_rad) * k + (1.0 - np.cos(angle_rad)) * (k @ k)


def apply_transform(t: RigidTransform, c: PointCloud) -> PointCloud:
    """Map every point p to R @ p + t."""
    return PointCloud(c.points @ t.rotation.T + t.translation)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform equal to applying ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    return RigidTransform(t.rotation.T, -(t.rotation.T @ t.translation))


def _check_dims(d: DepthMap, cam) -> None:
    if d.width != cam.width or d.height != cam.height:
        raise ValueError(
            f"depth map is {d.width}x{d.height} but camera expects {cam.width}x{cam.height}"
        )


def lift_depth(d: DepthMap, cam: PinholeCamera) -> tuple[PointCloud, np.ndarray]:
    """Back-project valid pixels of a pinhole depth map to 3D.

    Returns the cloud plus a (P, 2) array of (row, col) pixel indices,
    one per output point, in row-major pixel scan order.
    """
    _check_dims(d, cam)
    vs, us = np.nonzero(d.values > 0)
    z = d.values[vs, us]
    x = z * (us - cam.cx) / cam.fx
    y = z * (vs - cam.cy) / cam.fy
    points = np.column_stack([x, y, z]) if len(z) else np.zeros((0, 3))
    return PointCloud(points), np.column_stack([vs, us]).astype(np.int64)


def _render(height: int, width: int, u, v, depth, point_index) -> tuple[DepthMap, np.ndarray]:
    # Z-buffer: per pixel keep the smallest depth; on an exact depth tie
    # the lowest input point index wins.
    values = np.zeros((height, width))
    winner = np.full((height, width), -1, dtype=np.int64)
    if len(u):
        flat = v * width + u
        order = np.lexsort((point_index, depth, flat))
        first = np.unique(flat[order], return_index=True)[1]
        win = order[first]
        values.reshape(-1)[flat[win]] = depth[win]
        winner.reshape(-1)[flat[win]] = point_index[win]
    return DepthMap(values), winner


def project_pinhole(c: PointCloud, cam: PinholeCamera) -> tuple[DepthMap, np.ndarray]:
    """Render a cloud to a pinhole depth map (stored value: z coordinate).

    Points with z <= 0 or falling outside the image are omitted. Also
    returns the (H, W) index map of the winning point per pixel (-1 where
    the pixel is empty).
    """
    pts = c.points
    keep = pts[:, 2] > 0
    idx = np.nonzero(keep)[0]
    x, y, z = pts[idx, 0], pts[idx, 1], pts[idx, 2]
    u = np.rint(cam.fx * x / z + cam.cx).astype(np.int64)
    v = np.rint(cam.fy * y / z + cam.cy).astype(np.int64)
    inb = (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return _render(cam.height, cam.width, u[inb], v[inb], z[inb], idx[inb])


def project_ftheta(c: PointCloud, cam: FThetaCamera) -> tuple[DepthMap, np.ndarray]:
    """Render a cloud to an equidistant depth map (stored value: range).

    A point at ray angle theta from the optical axis (0, 0, 1) lands at
    image radius f * theta along its azimuth from (cx, cy). Points with
    theta > theta_max, at zero range, or outside the image are omitted.
    Also returns the winning point index map as in ``project_pinhole``.
    """
    pts = c.points
    rho = np.linalg.norm(pts, axis=1)
    idx = np.nonzero(rho > 0)[0]
    rho = rho[idx]
    theta = np.arccos(np.clip(pts[idx, 2] / rho, -1.0, 1.0))
    keep = theta <= cam.theta_max
    idx, rho, theta = idx[keep], rho[keep], theta[keep]
    r = cam.f * theta
    planar = np.hypot(pts[idx, 0], pts[idx, 1])
    # Azimuth for a point on the optical axis is arbitrary; r is 0 there
    # (or f*pi at the backward pole), so fix it to (1, 0) for determinism.
    safe = np.maximum(planar, np.finfo(np.float64).tiny)
    cos_az = np.where(planar > 0, pts[idx, 0] / safe, 1.0)
    sin_az = np.where(planar > 0, pts[idx, 1] / safe, 0.0)
    u = np.rint(cam.cx + r * cos_az).astype(np.int64)
    v = np.rint(cam.cy + r * sin_az).astype(np.int64)
    inb = (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return _render(cam.height, cam.width, u[inb], v[inb], rho[inb], idx[inb])


def lift_ftheta(d: DepthMap, cam: FThetaCamera) -> tuple[PointCloud, np.ndarray]:
    """Back-project valid pixels of an equidistant depth map to 3D.

    Inverse of ``project_ftheta`` up to pixel quantization: theta = r / f,
    direction recovered from the pixel azimuth, point = range * direction.
    Valid pixels whose radius implies theta > theta_max are ignored.
    Returns the cloud plus (row, col) pixel indices per point.
    """
    _check_dims(d, cam)
    vs, us = np.nonzero(d.values > 0)
    du = us - cam.cx
    dv = vs - cam.cy
    r = np.hypot(du, dv)
    theta = r / cam.f
    keep = theta <= cam.theta_max
    vs, us, du, dv, r, theta = vs[keep], us[keep], du[keep], dv[keep], r[keep], theta[keep]
    rho = d.values[vs, us]
    scale = np.where(r > 0, np.sin(theta) / np.maximum(r, np.finfo(np.float64).tiny), 0.0)
    x = rho * scale * du
    y = rho * scale * dv
    z = rho * np.cos(theta)
    points = np.column_stack([x, y, z]) if len(rho) else np.zeros((0, 3))
    return PointCloud(points), np.column_stack([vs, us]).astype(np.int64)


def voxel_downsample(c: PointCloud, voxel: float) -> PointCloud:
    """Replace the points of each occupied voxel by their centroid.

    Voxel index of a point is floor(p / voxel) per axis; output points are
    ordered by ascending lexicographic voxel index, which makes the result
    independent of input point order.
    """
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    if len(c) == 0:
        return PointCloud(np.zeros((0, 3)))
    cells = np.floor(c.points / voxel).astype(np.int64)
    uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    acc = np.zeros((uniq.shape[0], 3))
    np.add.at(acc, inverse, c.points)
    counts = np.bincount(inverse, minlength=uniq.shape[0])
    return PointCloud(acc / counts[:, None])
