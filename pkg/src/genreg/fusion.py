"""Match-then-fuse operators for combining branch posteriors.

Two probabilistic fusions of per-branch correspondence posteriors are
provided, plus the fuse-then-match concatenation baseline:

  * ``fuse_noisy_and``: Bayes fusion of the two posteriors under
    conditional independence of the branch evidence given the match
    event. In odds form, o(fused) = o(p_img) * o(p_geo) / o(prior);
    agreement of both branches is required for high confidence.
  * ``fuse_noisy_or``: union-style fusion, 1 - (1-p_img)(1-p_geo);
    support from either branch alone raises confidence.
  * ``fuse_concat_baseline``: per-branch normalization, per-point
    descriptor concatenation, renormalization, then dot-product matching
    and a softmax posterior, all in one step.

Fused matrices are per-pair probabilities, not row distributions, so
they are returned as plain arrays and never renormalized; downstream
mutual-nearest-neighbor matching is invariant to row scaling anyway.
"""

from __future__ import annotations

import numpy as np

from .correspondence import PosteriorMatrix, SimilarityMatrix, posterior_softmax
from .features import FeatureField, l2_normalize_rows

__all__ = [
    "MatchPrior",
    "CLAMP_EPS",
    "uniform_prior",
    "fuse_noisy_and",
    "fuse_noisy_or",
    "fuse_concat_baseline",
]

# Probabilities are clamped into [CLAMP_EPS, 1 - CLAMP_EPS] before odds
# are formed; softmax underflow can otherwise emit exact zeros.
CLAMP_EPS = 1e-12

# Prior match probability: a scalar or an elementwise matrix, in (0, 1).
MatchPrior = float | np.ndarray


def _values(p) -> np.ndarray:
    if isinstance(p, PosteriorMatrix):
        return p.values
    return np.asarray(p, dtype=np.float64)


def uniform_prior(n_src: int, n_tgt: int) -> float:
    """Uniform prior over all source-target pairings, 1 / (N_src * N_tgt)."""
    if n_src <= 0 or n_tgt <= 0:
        raise ValueError("point counts must be positive")
    return 1.0 / (n_src * n_tgt)


def _check_prior(prior: MatchPrior, shape) -> np.ndarray | float:
    if np.isscalar(prior):
        p = float(prior)
        if not (0.0 < p < 1.0):
            raise ValueError(f"prior must lie strictly inside (0, 1), got {p}")
        return p
    arr = np.asarray(prior, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"prior shape {arr.shape} does not match posteriors {shape}")
    if (arr <= 0.0).any() or (arr >= 1.0).any():
        raise ValueError("prior entries must lie strictly inside (0, 1)")
    return arr


def fuse_noisy_and(p_img, p_geo, prior: MatchPrior) -> np.ndarray:
    """Joint posterior of a match given both branch posteriors.

    fused = p_i * p_g * (1 - pi) / (p_i * p_g * (1 - pi) + (1-p_i)(1-p_g) * pi)

    which is the probability-form of the odds product
    o(fused) = o(p_i) * o(p_g) / o(pi). A branch sitting exactly at the
    prior contributes no evidence and leaves the other branch unchanged.
    """
    a = _values(p_img)
    b = _values(p_geo)
    if a.shape != b.shape:
        raise ValueError(f"posterior shapes differ: {a.shape} vs {b.shape}")
    pi = _check_prior(prior, a.shape)
    a = np.clip(a, CLAMP_EPS, 1.0 - CLAMP_EPS)
    b = np.clip(b, CLAMP_EPS, 1.0 - CLAMP_EPS)
    agree = a * b * (1.0 - pi)
    disagree = (1.0 - a) * (1.0 - b) * pi
    return agree / (agree + disagree)


def fuse_noisy_or(p_img, p_geo) -> np.ndarray:
    """Probability that at least one branch supports the match.

    fused = 1 - (1 - p_img) * (1 - p_geo), elementwise, treating each
    branch as an independent Bernoulli activation at its posterior.
    """
    a = _values(p_img)
    b = _values(p_geo)
    if a.shape != b.shape:
        raise ValueError(f"posterior shapes differ: {a.shape} vs {b.shape}")
    if (a < -1e-9).any() or (a > 1 + 1e-9).any() or (b < -1e-9).any() or (b > 1 + 1e-9).any():
        raise ValueError("posterior entries must lie in [0, 1]")
    a = np.clip(a, 0.0, 1.0)
    b = np.clip(b, 0.0, 1.0)
    return 1.0 - (1.0 - a) * (1.0 - b)


def fuse_concat_baseline(
    f_img_src: FeatureField,
    f_img_tgt: FeatureField,
    f_geo_src: FeatureField,
    f_geo_tgt: FeatureField,
    tau: float,
) -> np.ndarray:
    """Fuse-then-match baseline: concatenate descriptors, then match.

    Each branch field is row-normalized, the per-point descriptors are
    concatenated, renormalized, and scored by dot products; the softmax
    posterior values at temperature ``tau`` are returned.
    """
    if f_img_src.n != f_geo_src.n:
        raise ValueError(f"source point counts differ: {f_img_src.n} vs {f_geo_src.n}")
    if f_img_tgt.n != f_geo_tgt.n:
        raise ValueError(f"target point counts differ: {f_img_tgt.n} vs {f_geo_tgt.n}")

    def concat(img: FeatureField, geo: FeatureField) -> np.ndarray:
        joined = np.concatenate(
            [l2_normalize_rows(img).descriptors, l2_normalize_rows(geo).descriptors], axis=1
        )
        return l2_normalize_rows(FeatureField(joined)).descriptors

    src = concat(f_img_src, f_geo_src)
    tgt = concat(f_img_tgt, f_geo_tgt)
    sim = SimilarityMatrix(src @ tgt.T, branch="geo")
    return posterior_softmax(sim, tau).values
