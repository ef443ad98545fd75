"""Wire formats shared with the registration toolkit.

The adapter deliberately has no code dependency on the toolkit; it
implements the documented formats itself. See the toolkit README for the
format definitions (FIF1 feature interchange, PCB1/xyz clouds, depth
files with JSON camera sidecars).
"""

from __future__ import annotations

import json
import struct

import numpy as np
from PIL import Image

FIF_MAGIC = b"FIF1"
FIF_VERSION = 1
CLOUD_MAGIC = b"PCB1"


def write_fif(path, data: np.ndarray, *, branch: str, source_model: str, k: int | None = None) -> None:
    """Write a V x N x d float32 tensor plus its JSON sidecar."""
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 3:
        raise ValueError(f"expected (V, N, d) tensor, got shape {data.shape}")
    if branch == "geo" and data.shape[0] != 1:
        raise ValueError("geometric features must have V=1")
    if k is not None and data.shape[0] != k * k:
        raise ValueError(f"V={data.shape[0]} inconsistent with K={k}")
    v, n, d = data.shape
    with open(path, "wb") as fh:
        fh.write(FIF_MAGIC)
        fh.write(struct.pack("<IIII", FIF_VERSION, v, n, d))
        fh.write(data.tobytes())
    sidecar = {"branch": branch, "d": int(d), "source_model": source_model}
    if k is not None:
        sidecar["K"] = int(k)
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh)
        fh.write("\n")


def read_cloud(path) -> np.ndarray:
    """Read either cloud format into an (N, 3) float64 array."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == CLOUD_MAGIC:
        with open(path, "rb") as fh:
            blob = fh.read()
        (count,) = struct.unpack("<I", blob[4:8])
        if len(blob) != 8 + 12 * count:
            raise ValueError(f"{path}: cloud payload size mismatch")
        return np.frombuffer(blob, dtype="<f4", offset=8).reshape(count, 3).astype(np.float64)
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                rows.append([float(v) for v in parts])
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def read_camera(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        cam = json.load(fh)
    if cam.get("model") not in ("pinhole", "ftheta"):
        raise ValueError(f"{path}: unknown camera model {cam.get('model')!r}")
    return cam


def read_depth(path, cam: dict) -> np.ndarray:
    """Depth in meters; PNG holds millimeters, raw files hold float32."""
    if str(path).endswith(".png"):
        arr = np.asarray(Image.open(path))
        return arr.astype(np.float64) / 1000.0
    data = np.fromfile(path, dtype="<f4")
    return data.astype(np.float64).reshape(int(cam["height"]), int(cam["width"]))


def read_image(path) -> np.ndarray:
    """RGB frame as (H, W, 3) uint8."""
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.uint8)


def lift_pixels(depth: np.ndarray, cam: dict) -> tuple[np.ndarray, np.ndarray]:
    """Back-project valid pixels to 3D; returns points and (row, col) ids."""
    vs, us = np.nonzero(depth > 0)
    if cam["model"] == "pinhole":
        z = depth[vs, us]
        x = z * (us - cam["cx"]) / cam["fx"]
        y = z * (vs - cam["cy"]) / cam["fy"]
        pts = np.column_stack([x, y, z])
    else:
        du = us - cam["cx"]
        dv = vs - cam["cy"]
        r = np.hypot(du, dv)
        theta = r / cam["f"]
        keep = theta <= cam["theta_max"]
        vs, us, du, dv, r, theta = vs[keep], us[keep], du[keep], dv[keep], r[keep], theta[keep]
        rho = depth[vs, us]
        scale = np.where(r > 0, np.sin(theta) / np.maximum(r, 1e-300), 0.0)
        pts = np.column_stack([rho * scale * du, rho * scale * dv, rho * np.cos(theta)])
    return pts, np.column_stack([vs, us]).astype(np.int64)
