"""Similarity matrices and temperature-softmax correspondence posteriors.

The geometric branch scores candidate pairs with plain descriptor dot
products. The image branch holds V = K^2 view-conditioned descriptor
sets per cloud and keeps, for every pair (i, j), the maximal similarity
across the view dimension. Either similarity matrix converts into a
row-stochastic posterior through a row-wise softmax at temperature tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureField, ViewFeatureStack

__all__ = [
    "SimilarityMatrix",
    "PosteriorMatrix",
    "similarity_geo",
    "similarity_img_maxpool",
    "posterior_softmax",
]


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """N_src x N_tgt cosine similarities for one branch."""

    values: np.ndarray
    branch: str

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"similarity values must be 2D, got shape {v.shape}")
        if self.branch not in ("img", "geo"):
            raise ValueError(f"branch must be 'img' or 'geo', got {self.branch!r}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class PosteriorMatrix:
    """Row-stochastic correspondence probabilities with their temperature."""

    values: np.ndarray
    tau: float

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"posterior values must be 2D, got shape {v.shape}")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if v.shape[1] > 0:
            if (v < -1e-9).any() or (v > 1 + 1e-9).any():
                raise ValueError("posterior entries must lie in [0, 1]")
            sums = v.sum(axis=1)
            if np.abs(sums - 1.0).max(initial=0.0) > 1e-6:
                raise ValueError("posterior rows must sum to 1 within 1e-6")
        object.__setattr__(self, "values", v)


def similarity_geo(src: FeatureField, tgt: FeatureField) -> SimilarityMatrix:
    """Dot-product similarities between pre-normalized descriptor rows."""
    if src.dim != tgt.dim:
        raise ValueError(f"descriptor dimensions differ: {src.dim} vs {tgt.dim}")
    values = np.asarray(src.descriptors, dtype=np.float64) @ np.asarray(
        tgt.descriptors, dtype=np.float64
    ).T
    return SimilarityMatrix(values, branch="geo")


def similarity_img_maxpool(src: ViewFeatureStack, tgt: ViewFeatureStack) -> SimilarityMatrix:
    """Per-pair maximum of dot-product similarities over the view dimension."""
    if src.n_views != tgt.n_views:
        raise ValueError(f"view counts differ: {src.n_views} vs {tgt.n_views}")
    if src.dim != tgt.dim:
        raise ValueError(f"descriptor dimensions differ: {src.dim} vs {tgt.dim}")
    a = np.asarray(src.descriptors, dtype=np.float64)
    b = np.asarray(tgt.descriptors, dtype=np.float64)
    values = a[0] @ b[0].T
    for k in range(1, src.n_views):
        np.maximum(values, a[k] @ b[k].T, out=values)
    return SimilarityMatrix(values, branch="img")


def posterior_softmax(s: SimilarityMatrix, tau: float) -> PosteriorMatrix:
    """Row-wise softmax of values / tau, stabilized by row-max subtraction."""
    if tau <= 0:
        raise ValueError("temperature must be positive")
    v = s.values / tau
    if v.shape[1] == 0:
        return PosteriorMatrix(np.zeros_like(v), tau)
    v = v - v.max(axis=1, keepdims=True)
    e = np.exp(v)
    return PosteriorMatrix(e / e.sum(axis=1, keepdims=True), tau)
