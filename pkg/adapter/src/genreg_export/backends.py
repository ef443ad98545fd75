"""Feature extraction backends.

Two built-in deterministic backends exist so exports can run without any
pretrained checkpoint: ``patch-grid`` (dense pair-conditioned image
descriptors from local intensity statistics) and ``local-stats``
(per-point descriptors from neighborhood geometry). Names of external
pretrained models resolve only when the corresponding packages and
weights are installed; otherwise ``ModelUnavailableError`` explains what
is missing.
"""

from __future__ import annotations

import hashlib
import importlib.util

import numpy as np
from scipy.ndimage import sobel, uniform_filter
from scipy.spatial import cKDTree


class ModelUnavailableError(RuntimeError):
    pass


def _projection(seed_label: str, n_in: int, n_out: int) -> np.ndarray:
    # Fixed random projection; the label pins the stream so identical
    # backends produce identical descriptors everywhere.
    digest = hashlib.sha256(seed_label.encode()).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    w = rng.standard_normal((n_in, n_out))
    return w / np.linalg.norm(w, axis=0, keepdims=True)


class PatchGridMatcher:
    """Deterministic stand-in for a pair-conditioned dense image matcher.

    Per-pixel features are local intensity statistics at several scales
    plus normalized coordinates; conditioning on the partner image enters
    through its global intensity moments, so the same frame yields a
    different map for each pairing, mirroring cross-attention decoders.
    """

    name = "patch-grid"

    def __init__(self, dim: int = 24):
        self.dim = dim
        self._w = _projection(f"patch-grid:{dim}", 10, dim)

    @property
    def checkpoint_hash(self) -> str:
        return hashlib.sha256(f"builtin:{self.name}:{self.dim}".encode()).hexdigest()

    def _features(self, image: np.ndarray, partner: np.ndarray) -> np.ndarray:
        gray = image.astype(np.float64).mean(axis=2) / 255.0
        h, w = gray.shape
        partner_gray = partner.astype(np.float64).mean(axis=2) / 255.0
        p_mean = float(partner_gray.mean())
        p_std = float(partner_gray.std())
        uu, vv = np.meshgrid(np.linspace(0, 1, w), np.linspace(0, 1, h))
        feats = np.stack(
            [
                gray,
                uniform_filter(gray, 3),
                uniform_filter(gray, 9),
                sobel(gray, axis=0) / 8.0,
                sobel(gray, axis=1) / 8.0,
                uu,
                vv,
                np.full_like(gray, p_mean),
                np.full_like(gray, p_std),
                gray * p_mean,
            ],
            axis=-1,
        )
        desc = feats.reshape(-1, 10) @ self._w
        norms = np.linalg.norm(desc, axis=1, keepdims=True)
        desc = desc / np.maximum(norms, 1e-30)
        return desc.reshape(h, w, self.dim)

    def match(self, img_a: np.ndarray, img_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Dense descriptor maps for both images of a conditioned pair."""
        return self._features(img_a, img_b), self._features(img_b, img_a)


class LocalStatsDescriptor:
    """Deterministic stand-in for a geometric descriptor network."""

    name = "local-stats"

    def __init__(self, dim: int = 256, neighbors: int = 8):
        self.dim = dim
        self.neighbors = neighbors
        self._w = _projection(f"local-stats:{dim}", 10, dim)

    @property
    def checkpoint_hash(self) -> str:
        return hashlib.sha256(f"builtin:{self.name}:{self.dim}".encode()).hexdigest()

    def describe(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = len(points)
        if n == 0:
            return np.zeros((0, self.dim))
        k = min(self.neighbors + 1, n)
        tree = cKDTree(points)
        _, idx = tree.query(points, k=k)
        idx = np.atleast_2d(idx)
        local = points[idx]  # (n, k, 3)
        mean = local.mean(axis=1)
        centered = local - mean[:, None, :]
        cov = np.einsum("nki,nkj->nij", centered, centered) / max(k - 1, 1)
        feats = np.concatenate(
            [
                mean - points,  # offset to neighborhood centroid
                cov[:, [0, 0, 0, 1, 1, 2], [0, 1, 2, 1, 2, 2]],
                np.linalg.norm(mean - points, axis=1, keepdims=True),
            ],
            axis=1,
        )
        scale = np.abs(feats).max(initial=1e-12)
        desc = (feats / scale) @ self._w
        norms = np.linalg.norm(desc, axis=1, keepdims=True)
        return desc / np.maximum(norms, 1e-30)


_EXTERNAL_MATCHERS = {
    "mast3r": "mast3r",
    "roma": "romatch",
}
_EXTERNAL_GEO = {
    "geotransformer": "geotransformer",
    "fcgf": "fcgf",
}


def _require_package(model: str, package: str) -> None:
    if importlib.util.find_spec(package) is None:
        raise ModelUnavailableError(
            f"model {model!r} needs the {package!r} package and its pretrained "
            "weights, which are not installed; use the built-in backend or "
            "install the model"
        )


def get_matcher(name: str, dim: int = 24):
    if name == "patch-grid":
        return PatchGridMatcher(dim=dim)
    if name in _EXTERNAL_MATCHERS:
        _require_package(name, _EXTERNAL_MATCHERS[name])
        raise ModelUnavailableError(f"loader for {name!r} checkpoints is not bundled")
    raise ValueError(f"unknown matcher {name!r}")


def get_geo_backend(name: str, dim: int = 256):
    if name == "local-stats":
        return LocalStatsDescriptor(dim=dim)
    if name in _EXTERNAL_GEO:
        _require_package(name, _EXTERNAL_GEO[name])
        raise ModelUnavailableError(f"loader for {name!r} checkpoints is not bundled")
    raise ValueError(f"unknown geometric backend {name!r}")
