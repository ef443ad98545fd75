"""File formats: point clouds, depth maps, camera sidecars, reports.

Cloud formats:
  * ASCII ``.xyz``: one ``x y z`` line per point, meters.
  * Binary: 8-byte header (magic ``PCB1`` + little-endian uint32 count)
    followed by count little-endian float32 (x, y, z) triplets.

Depth formats (paired with a JSON camera sidecar):
  * 16-bit grayscale PNG holding millimeters (0 = invalid).
  * Raw little-endian float32 holding meters, row-major, dimensions
    taken from the sidecar.

Camera sidecar schema (flat JSON):
  ``{width, height, model: "pinhole"|"ftheta", fx|f, fy, cx, cy, theta_max?}``

All floating point output is serialized with 17 significant digits so
that files round-trip exactly and reruns are byte-identical.
"""

from __future__ import annotations

import json
import math
import os
import struct

import numpy as np
from PIL import Image

from .geometry import DepthMap, FThetaCamera, PinholeCamera, PointCloud

CLOUD_MAGIC = b"PCB1"


# ---------------------------------------------------------------------------
# float formatting / deterministic JSON and CSV
# ---------------------------------------------------------------------------

def format_float(x: float) -> str:
    """17-significant-digit decimal form; round-trips float64 exactly."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def dump_json(obj) -> str:
    """Deterministic JSON with 17-significant-digit floats.

    NaN/inf floats become null (JSON has no representation for them).
    Dict key order is preserved as given.
    """
    parts: list[str] = []
    _dump_json(obj, parts)
    return "".join(parts)


def _dump_json(obj, parts: list[str]) -> None:
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        parts.append("null" if (math.isnan(x) or math.isinf(x)) else format_float(x))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                parts.append(", ")
            parts.append(json.dumps(str(k)))
            parts.append(": ")
            _dump_json(v, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        parts.append("[")
        for i, v in enumerate(obj):
            if i:
                parts.append(", ")
            _dump_json(v, parts)
        parts.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_json(obj))
        fh.write("\n")


def write_csv(path, header: list[str], rows: list[list]) -> None:
    """Plain CSV with floats in 17-significant-digit form."""
    def cell(v) -> str:
        if isinstance(v, (float, np.floating)):
            return format_float(float(v))
        return str(v)

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# point cloud files
# ---------------------------------------------------------------------------

def write_cloud_xyz(path, cloud: PointCloud) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in cloud.points:
            fh.write(f"{format_float(x)} {format_float(y)} {format_float(z)}\n")


def read_cloud_xyz(path) -> PointCloud:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            fields = stripped.split()
            if len(fields) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
            rows.append([float(v) for v in fields])
    return PointCloud(np.asarray(rows) if rows else np.zeros((0, 3)))


def write_cloud_binary(path, cloud: PointCloud) -> None:
    data = np.ascontiguousarray(cloud.points, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(CLOUD_MAGIC)
        fh.write(struct.pack("<I", len(cloud)))
        fh.write(data.tobytes())


def read_cloud_binary(path) -> PointCloud:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise ValueError(f"{path}: truncated cloud header")
    if blob[:4] != CLOUD_MAGIC:
        raise ValueError(f"{path}: bad cloud magic {blob[:4]!r}")
    (count,) = struct.unpack("<I", blob[4:8])
    expected = 8 + 12 * count
    if len(blob) < expected:
        raise ValueError(f"{path}: truncated cloud payload ({len(blob)} < {expected} bytes)")
    if len(blob) > expected:
        raise ValueError(f"{path}: trailing bytes after cloud payload")
    pts = np.frombuffer(blob, dtype="<f4", offset=8).reshape(count, 3)
    return PointCloud(pts.astype(np.float64))


def read_cloud(path) -> PointCloud:
    """Read either cloud format, sniffing the binary magic."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == CLOUD_MAGIC:
        return read_cloud_binary(path)
    return read_cloud_xyz(path)


def write_cloud(path, cloud: PointCloud) -> None:
    """Write ASCII for ``.xyz`` paths, binary otherwise."""
    if str(path).endswith(".xyz"):
        write_cloud_xyz(path, cloud)
    else:
        write_cloud_binary(path, cloud)


# ---------------------------------------------------------------------------
# camera sidecars
# ---------------------------------------------------------------------------

def camera_to_dict(cam) -> dict:
    if isinstance(cam, PinholeCamera):
        return {
            "width": cam.width,
            "height": cam.height,
            "model": "pinhole",
            "fx": cam.fx,
            "fy": cam.fy,
            "cx": cam.cx,
            "cy": cam.cy,
        }
    if isinstance(cam, FThetaCamera):
        return {
            "width": cam.width,
            "height": cam.height,
            "model": "ftheta",
            "f": cam.f,
            "cx": cam.cx,
            "cy": cam.cy,
            "theta_max": cam.theta_max,
        }
    raise TypeError(f"not a camera: {type(cam).__name__}")


def camera_from_dict(spec: dict):
    try:
        model = spec["model"]
        width = int(spec["width"])
        height = int(spec["height"])
        if model == "pinhole":
            return PinholeCamera(
                fx=float(spec["fx"]),
                fy=float(spec["fy"]),
                cx=float(spec["cx"]),
                cy=float(spec["cy"]),
                width=width,
                height=height,
            )
        if model == "ftheta":
            return FThetaCamera(
                f=float(spec["f"]),
                cx=float(spec["cx"]),
                cy=float(spec["cy"]),
                theta_max=float(spec["theta_max"]),
                width=width,
                height=height,
            )
    except KeyError as exc:
        raise ValueError(f"camera sidecar missing field {exc.args[0]!r}") from exc
    raise ValueError(f"unknown camera model {spec.get('model')!r}")


def read_camera_sidecar(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"camera sidecar not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return camera_from_dict(json.load(fh))


def write_camera_sidecar(path, cam) -> None:
    write_json(path, camera_to_dict(cam))


# ---------------------------------------------------------------------------
# depth files
# ---------------------------------------------------------------------------

def write_depth_png(path, depth: DepthMap) -> None:
    """16-bit PNG in millimeters. Depths above 65.535 m do not fit."""
    mm = np.rint(depth.values * 1000.0)
    if (mm > np.iinfo(np.uint16).max).any():
        raise ValueError("depth exceeds 65.535 m; use the raw float32 format instead")
    Image.fromarray(mm.astype(np.uint16)).save(path)


def read_depth_png(path) -> DepthMap:
    arr = np.asarray(Image.open(path))
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected single-channel depth PNG, got shape {arr.shape}")
    return DepthMap(arr.astype(np.float64) / 1000.0)


def write_depth_raw(path, depth: DepthMap) -> None:
    np.ascontiguousarray(depth.values, dtype="<f4").tofile(path)


def read_depth_raw(path, width: int, height: int) -> DepthMap:
    data = np.fromfile(path, dtype="<f4")
    if data.size != width * height:
        raise ValueError(
            f"{path}: raw depth holds {data.size} values, sidecar implies {width * height}"
        )
    return DepthMap(data.astype(np.float64).reshape(height, width))


def read_depth(path, cam) -> DepthMap:
    """Read PNG (by extension) or raw depth, validating camera dimensions."""
    if str(path).endswith(".png"):
        depth = read_depth_png(path)
        if depth.width != cam.width or depth.height != cam.height:
            raise ValueError(
                f"{path}: depth is {depth.width}x{depth.height}, "
                f"sidecar says {cam.width}x{cam.height}"
            )
        return depth
    return read_depth_raw(path, cam.width, cam.height)


def write_depth(path, depth: DepthMap) -> None:
    if str(path).endswith(".png"):
        write_depth_png(path, depth)
    else:
        write_depth_raw(path, depth)
