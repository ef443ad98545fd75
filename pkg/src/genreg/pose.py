"""Correspondence extraction, closed-form alignment, robust estimation,
and rotation/translation error metrics.

``horn_fit`` solves the least-squares rigid alignment over known pairs
by centroid subtraction and an SVD of the 3x3 cross-covariance, with a
reflection correction on the determinant sign. ``robust_register``
wraps it in a hypothesize-and-verify loop seeded by second-order
spatial-compatibility scores: two correspondences are compatible when
their intra-cloud distances agree within ``d_comp``, and a pair ranks
high when many correspondences connect to it through a common
compatible neighbor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DegenerateConfigurationError, PointCloud, RigidTransform
from .rng import STREAM_ROBUST, make_stream

__all__ = [
    "CorrespondenceSet",
    "RobustConfig",
    "RegistrationResult",
    "mutual_nn_match",
    "horn_fit",
    "robust_register",
    "rre_degrees",
    "rte_meters",
]

COLLINEARITY_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Putative matches: source index, target index, confidence in [0, 1].

    Source indices are unique (the set is a partial injection).
    """

    src_indices: np.ndarray
    tgt_indices: np.ndarray
    confidences: np.ndarray

    def __post_init__(self) -> None:
        si = np.asarray(self.src_indices, dtype=np.int64).reshape(-1)
        ti = np.asarray(self.tgt_indices, dtype=np.int64).reshape(-1)
        cf = np.asarray(self.confidences, dtype=np.float64).reshape(-1)
        if not (len(si) == len(ti) == len(cf)):
            raise ValueError("index and confidence arrays must have equal length")
        if len(np.unique(si)) != len(si):
            raise ValueError("duplicate source index in correspondence set")
        if len(cf) and ((cf < -1e-9).any() or (cf > 1 + 1e-9).any()):
            raise ValueError("confidences must lie in [0, 1]")
        object.__setattr__(self, "src_indices", si)
        object.__setattr__(self, "tgt_indices", ti)
        object.__setattr__(self, "confidences", np.clip(cf, 0.0, 1.0))

    def __len__(self) -> int:
        return len(self.src_indices)


@dataclass(frozen=True)
class RobustConfig:
    """Parameters of the compatibility-seeded robust estimator.

    Distances default to twice the indoor voxel size (5 cm). The RNG is
    a counter-based stream keyed by ``seed``, so results are a pure
    function of inputs and configuration.
    """

    d_comp: float = 0.05
    d_inlier: float = 0.05
    hypotheses: int = 1000
    min_inliers: int = 5
    top_seeds: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d_comp <= 0 or self.d_inlier <= 0:
            raise ValueError("compatibility and inlier distances must be positive")
        if self.hypotheses < 1 or self.min_inliers < 3 or self.top_seeds < 1:
            raise ValueError("hypotheses >= 1, min_inliers >= 3, top_seeds >= 1 required")


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    """Robust estimation outcome; ``transform`` is None on failure."""

    transform: RigidTransform | None
    inlier_indices: np.ndarray
    success: bool
    message: str = ""
    rre_deg: float | None = None
    rte_m: float | None = None


def _matrix_values(p) -> np.ndarray:
    values = getattr(p, "values", p)
    return np.asarray(values, dtype=np.float64)


def mutual_nn_match(p) -> CorrespondenceSet:
    """Keep pair (i, j) iff j is the argmax of row i and i the argmax of
    column j. Argmax ties resolve to the lowest index. Confidence is the
    matrix entry itself.
    """
    values = _matrix_values(p)
    if values.ndim != 2:
        raise ValueError(f"expected a 2D matrix, got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ValueError("match matrix must be finite")
    if values.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return CorrespondenceSet(empty, empty, np.zeros(0))
    row_best = values.argmax(axis=1)
    col_best = values.argmax(axis=0)
    rows = np.arange(values.shape[0])
    keep = col_best[row_best] == rows
    si = rows[keep]
    ti = row_best[keep]
    return CorrespondenceSet(si, ti, values[si, ti])


def _horn(p: np.ndarray, q: np.ndarray) -> RigidTransform:
    # Core solver on matched coordinate arrays; assumes caller validated
    # counts and degeneracy.
    pc = p.mean(axis=0)
    qc = q.mean(axis=0)
    h = (p - pc).T @ (q - qc)
    u, _, vt = np.linalg.svd(h)
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T))
    r = v @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, qc - r @ pc)


def _collinear(p: np.ndarray) -> bool:
    s = np.linalg.svd(p - p.mean(axis=0), compute_uv=False)
    return s[1] < COLLINEARITY_RTOL * s[0]


def horn_fit(c: CorrespondenceSet, src: PointCloud, tgt: PointCloud) -> RigidTransform:
    """Closed-form minimizer of sum ||R p_i + t - q_i||^2 over SE(3).

    Requires at least 3 pairs spanning a non-collinear configuration;
    collinear sets leave the rotation about the line unconstrained and
    raise DegenerateConfigurationError.
    """
    if len(c) < 3:
        raise ValueError(f"horn_fit needs at least 3 pairs, got {len(c)}")
    p = src.points[c.src_indices]
    q = tgt.points[c.tgt_indices]
    if _collinear(p):
        raise DegenerateConfigurationError("source correspondences are collinear")
    return _horn(p, q)


def _compatibility_scores(p: np.ndarray, q: np.ndarray, d_comp: float) -> tuple[np.ndarray, np.ndarray]:
    # C[a, b] = 1 iff | ||p_a - p_b|| - ||q_a - q_b|| | <= d_comp, diagonal
    # zeroed. The seed score counts length-2 compatibility paths, i.e. the
    # row sums of C @ C.
    dp = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2)
    dq = np.linalg.norm(q[:, None, :] - q[None, :, :], axis=2)
    comp = (np.abs(dp - dq) <= d_comp).astype(np.int64)
    np.fill_diagonal(comp, 0)
    degree = comp.sum(axis=1)
    return comp, comp @ degree


def robust_register(
    c: CorrespondenceSet,
    src: PointCloud,
    tgt: PointCloud,
    cfg: RobustConfig | None = None,
    gt: RigidTransform | None = None,
) -> RegistrationResult:
    """Hypothesize-and-verify rigid estimation over putative matches.

    Seeds are the correspondences with the highest second-order
    compatibility scores; each hypothesis fits a transform to a seed plus
    two companions sampled from the seed's compatible set, and the
    hypothesis with the most residual inliers (ties: lowest hypothesis
    index) is refit on its inliers. Returns a failure result, not an
    exception, when no hypothesis reaches ``min_inliers``. When ``gt`` is
    given, the rotation/translation errors of the estimate are attached.
    """
    cfg = cfg or RobustConfig()
    if len(c) < 3:
        raise ValueError(f"robust_register needs at least 3 correspondences, got {len(c)}")
    p = src.points[c.src_indices]
    q = tgt.points[c.tgt_indices]
    n = len(c)

    comp, scores = _compatibility_scores(p, q, cfg.d_comp)
    ranked = np.argsort(-scores, kind="stable")
    n_seeds = min(cfg.top_seeds, n)
    rng = make_stream(cfg.seed, STREAM_ROBUST)

    best_count = 0
    best_inliers: np.ndarray | None = None
    for h in range(cfg.hypotheses):
        seed_idx = int(ranked[h % n_seeds])
        pool = np.nonzero(comp[seed_idx])[0]
        if len(pool) < 2:
            pool = np.delete(np.arange(n), seed_idx)
            if len(pool) < 2:
                continue
        companions = rng.choice(pool, size=2, replace=False)
        sample = np.array([seed_idx, companions[0], companions[1]])
        ps = p[sample]
        if _collinear(ps):
            continue
        t = _horn(ps, q[sample])
        residuals = np.linalg.norm(p @ t.rotation.T + t.translation - q, axis=1)
        inliers = residuals <= cfg.d_inlier
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers

    if best_inliers is None or best_count < max(cfg.min_inliers, 3):
        return RegistrationResult(
            transform=None,
            inlier_indices=np.zeros(0, dtype=np.int64),
            success=False,
            message=(
                f"no hypothesis reached min_inliers={cfg.min_inliers} "
                f"(best consensus {best_count} of {n})"
            ),
        )

    idx = np.nonzero(best_inliers)[0]
    try:
        final = _horn(p[idx], q[idx]) if not _collinear(p[idx]) else None
    except np.linalg.LinAlgError:
        final = None
    if final is None:
        # Refit can be degenerate only in pathological layouts; fall back
        # to the best hypothesis consensus as-is.
        final = _horn(p[idx[:3]], q[idx[:3]])
    residuals = np.linalg.norm(p @ final.rotation.T + final.translation - q, axis=1)
    final_inliers = np.nonzero(residuals <= cfg.d_inlier)[0]

    rre = rte = None
    if gt is not None:
        rre = rre_degrees(final.rotation, gt.rotation)
        rte = rte_meters(final.translation, gt.translation)
    return RegistrationResult(
        transform=final,
        inlier_indices=final_inliers,
        success=True,
        message=f"{len(final_inliers)} inliers of {n} correspondences",
        rre_deg=rre,
        rte_m=rte,
    )


def _two_prod(x: float, y: float) -> tuple[float, float]:
    # Dekker error-free product: x * y == hi + lo exactly.
    hi = x * y
    c = 134217729.0 * x
    xh = c - (c - x)
    xl = x - xh
    c = 134217729.0 * y
    yh = c - (c - y)
    yl = y - yh
    lo = ((xh * yh - hi) + xh * yl + xl * yh) + xl * yl
    return hi, lo


def rre_degrees(r_est: np.ndarray, r_gt: np.ndarray) -> float:
    """Relative rotation error in degrees.

    Mathematically arccos(clamp((trace(R_gt^T R_est) - 1) / 2, -1, 1)),
    evaluated stably near zero: the residual e = 3 - trace is accumulated
    from error-free products, and the angle computed as 2 asin(sqrt(e)/2),
    which is the same function without the arccos quantization floor of
    about 1.2e-6 degrees.
    """
    a = np.asarray(r_gt, dtype=np.float64).reshape(9)
    b = np.asarray(r_est, dtype=np.float64).reshape(9)
    terms = [3.0]
    for x, y in zip(a, b):
        hi, lo = _two_prod(float(x), float(y))
        terms.append(-hi)
        terms.append(-lo)
    e = min(max(math.fsum(terms), 0.0), 4.0)
    return math.degrees(2.0 * math.asin(math.sqrt(e) / 2.0))


def rte_meters(t_est: np.ndarray, t_gt: np.ndarray) -> float:
    """Relative translation error: Euclidean distance."""
    return float(np.linalg.norm(np.asarray(t_est, dtype=np.float64) - np.asarray(t_gt, dtype=np.float64)))
