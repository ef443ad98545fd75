"""Acceptance suite: one test per primary criterion, each printed as a
PASS line when its assertions hold. Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import hashlib
import os
import time

import numpy as np
import pytest

from genreg.bench import BenchConfig, run_benchmark, write_report
from genreg.correspondence import SimilarityMatrix, posterior_softmax, similarity_img_maxpool
from genreg.features import ViewFeatureStack
from genreg.fusion import fuse_noisy_and, fuse_noisy_or
from genreg.geometry import (
    DepthMap,
    FThetaCamera,
    PinholeCamera,
    PointCloud,
    RigidTransform,
    apply_transform,
    lift_depth,
    lift_ftheta,
    project_ftheta,
    project_pinhole,
    rotation_about_axis,
)
from genreg.pose import CorrespondenceSet, RobustConfig, horn_fit, robust_register


def report(name):
    print(f"\nACCEPTANCE {name}: PASS")


def random_rotation(rng):
    return rotation_about_axis(rng.standard_normal(3), rng.uniform(-np.pi, np.pi))


def identity_pairs(n):
    idx = np.arange(n)
    return CorrespondenceSet(idx, idx, np.ones(n))


def test_noisy_and_bayes_oracle_equivalence():
    """Discrete two-signal generative model, exhaustively enumerated:
    the fused posterior equals exact Bayes within 1e-12 on 1000 random
    parameterizations, in under 5 seconds."""
    rng = np.random.default_rng(2024)
    n = 1000
    start = time.perf_counter()

    pi = rng.uniform(0.01, 0.99, n)
    t_img = rng.dirichlet(np.ones(4), size=(n, 2))  # [:, 0] = P(s|M=0), [:, 1] = P(s|M=1)
    t_geo = rng.dirichlet(np.ones(4), size=(n, 2))

    # Enumerate all 16 symbol combinations for every parameterization.
    pi_col = pi[:, None]
    p_img = (pi_col * t_img[:, 1]) / (pi_col * t_img[:, 1] + (1 - pi_col) * t_img[:, 0])
    p_geo = (pi_col * t_geo[:, 1]) / (pi_col * t_geo[:, 1] + (1 - pi_col) * t_geo[:, 0])

    joint1 = pi[:, None, None] * t_img[:, 1, :, None] * t_geo[:, 1, None, :]
    joint0 = (1 - pi)[:, None, None] * t_img[:, 0, :, None] * t_geo[:, 0, None, :]
    exact = joint1 / (joint1 + joint0)

    a = np.broadcast_to(p_img[:, :, None], (n, 4, 4)).reshape(n, 16)
    b = np.broadcast_to(p_geo[:, None, :], (n, 4, 4)).reshape(n, 16)
    prior = np.broadcast_to(pi[:, None], (n, 16))
    fused = fuse_noisy_and(a, b, np.ascontiguousarray(prior))

    elapsed = time.perf_counter() - start
    assert np.abs(fused - exact.reshape(n, 16)).max() <= 1e-12
    assert elapsed < 5.0
    report("noisy-AND Bayes-oracle equivalence (1000 parameterizations, 1e-12)")


def test_noisy_or_monte_carlo_equivalence():
    """For 100 random branch probabilities, the closed form lies within
    3 binomial standard errors of a one-million-draw Bernoulli estimate,
    in under 30 seconds."""
    rng = np.random.default_rng(99)
    n_draws = 1_000_000
    start = time.perf_counter()
    for _ in range(100):
        a = float(rng.uniform(0.001, 0.999))
        b = float(rng.uniform(0.001, 0.999))
        closed = fuse_noisy_or(np.array([[a]]), np.array([[b]]))[0, 0]
        hits = (rng.random(n_draws) < a) | (rng.random(n_draws) < b)
        estimate = hits.mean()
        se = np.sqrt(max(closed * (1 - closed), 1e-12) / n_draws)
        assert abs(estimate - closed) <= 3 * se + 1e-12
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    report("noisy-OR Monte-Carlo equivalence (100 x 1e6 draws, 3 sigma)")


def test_identity_evidence():
    """A branch that sits exactly at the prior leaves the other branch
    unchanged, elementwise within 1e-10."""
    rng = np.random.default_rng(11)
    for _ in range(50):
        shape = (rng.integers(2, 40), rng.integers(2, 40))
        p = rng.uniform(1e-6, 1 - 1e-6, shape)
        pi = rng.uniform(0.01, 0.99, shape)
        np.testing.assert_allclose(fuse_noisy_and(p, pi, pi), p, atol=1e-10)
        scalar_pi = float(rng.uniform(0.01, 0.99))
        np.testing.assert_allclose(
            fuse_noisy_and(p, np.full(shape, scalar_pi), scalar_pi), p, atol=1e-10
        )
    report("identity-evidence fixed point (1e-10)")


def test_horn_exactness():
    """1000 noise-free instances of 10 to 100 points recover the ground
    truth within 1e-9 (rotation Frobenius, translation L2), under 5 s."""
    rng = np.random.default_rng(42)
    start = time.perf_counter()
    worst_r = worst_t = 0.0
    for _ in range(1000):
        n = int(rng.integers(10, 101))
        src = PointCloud(rng.uniform(-2, 2, (n, 3)))
        t_gt = RigidTransform(random_rotation(rng), rng.uniform(-3, 3, 3))
        tgt = apply_transform(t_gt, src)
        fit = horn_fit(identity_pairs(n), src, tgt)
        worst_r = max(worst_r, float(np.linalg.norm(fit.rotation - t_gt.rotation)))
        worst_t = max(worst_t, float(np.linalg.norm(fit.translation - t_gt.translation)))
    elapsed = time.perf_counter() - start
    assert worst_r <= 1e-9
    assert worst_t <= 1e-9
    assert elapsed < 5.0
    report(f"Horn exactness (1000 instances, worst dR={worst_r:.2e}, dt={worst_t:.2e})")


def test_robust_estimation_forty_percent_inliers():
    """500 correspondences with 40% exact inliers in a 3 m scene, 50
    fixed-seed trials: median RRE <= 0.5 deg, median RTE <= 1 cm, zero
    failures, under 30 seconds."""
    start = time.perf_counter()
    rres, rtes = [], []
    for trial in range(50):
        rng = np.random.default_rng(10_000 + trial)
        src = PointCloud(rng.uniform(-1.5, 1.5, (500, 3)))
        t_gt = RigidTransform(random_rotation(rng), rng.uniform(-1, 1, 3))
        tgt_pts = apply_transform(t_gt, src).points.copy()
        out_idx = rng.choice(500, 300, replace=False)
        tgt_pts[out_idx] = rng.uniform(-1.5, 1.5, (300, 3))
        result = robust_register(
            identity_pairs(500),
            src,
            PointCloud(tgt_pts),
            RobustConfig(seed=trial),
            gt=t_gt,
        )
        assert result.success, f"trial {trial} failed: {result.message}"
        rres.append(result.rre_deg)
        rtes.append(result.rte_m)
    elapsed = time.perf_counter() - start
    assert float(np.median(rres)) <= 0.5
    assert float(np.median(rtes)) <= 0.01
    assert elapsed < 30.0
    report(
        f"robust estimation at 40% inliers (median RRE={np.median(rres):.2e} deg, "
        f"median RTE={np.median(rtes):.2e} m, 0 failures)"
    )


def test_posterior_contracts():
    """Softmax rows sum to one within 1e-6, the row argmax is invariant
    under temperature, and the view max-pool dominates every single view."""
    rng = np.random.default_rng(5)
    for _ in range(200):
        n_src, n_tgt = rng.integers(2, 30, 2)
        values = rng.uniform(-1, 1, (n_src, n_tgt))
        sim = SimilarityMatrix(values, branch="geo")
        reference = None
        for tau in (0.05, 0.1, 0.7, 3.0, 1e4):
            post = posterior_softmax(sim, tau)
            np.testing.assert_allclose(post.values.sum(axis=1), 1.0, atol=1e-6)
            argmax = post.values.argmax(axis=1)
            if reference is None:
                reference = values.argmax(axis=1)
            np.testing.assert_array_equal(argmax, reference)

    for _ in range(50):
        v, n, d = int(rng.integers(1, 5)) ** 2, int(rng.integers(2, 12)), 6
        src = ViewFeatureStack(rng.standard_normal((v, n, d)))
        tgt = ViewFeatureStack(rng.standard_normal((v, n + 3, d)))
        pooled = similarity_img_maxpool(src, tgt).values
        for k in range(v):
            single = src.descriptors[k] @ tgt.descriptors[k].T
            assert (pooled >= single - 1e-12).all()
    report("posterior contracts (row sums, argmax invariance, max-pool dominance)")


def test_fig8_qualitative_reproduction():
    """Default mixed-noise regime over 20 seeds: noisy-AND mean precision
    is at or above noisy-OR at every matched recall grid point, and both
    probabilistic fusions beat the concat baseline mean RRE by at least
    20%. Under 5 minutes."""
    start = time.perf_counter()
    config = BenchConfig()
    assert len(config.seeds) >= 20
    rep = run_benchmark(config)
    elapsed = time.perf_counter() - start

    comparison = rep.aggregate["fusion_comparison"]
    and_prec = np.array(comparison["noisy_and_mean_precision"])
    or_prec = np.array(comparison["noisy_or_mean_precision"])
    assert (and_prec >= or_prec).all()
    assert comparison["and_precision_ge_or_at_all_grid_points"]

    gain_and = comparison["noisy_and_rre_improvement_over_concat"]
    gain_or = comparison["noisy_or_rre_improvement_over_concat"]
    assert gain_and is not None and gain_and >= 0.20
    assert gain_or is not None and gain_or >= 0.20
    assert elapsed < 300.0
    report(
        f"fusion-ordering reproduction (AND>=OR at {len(and_prec)} recall points; "
        f"mean-RRE gain over concat: AND {gain_and:.0%}, OR {gain_or:.0%})"
    )


def test_projection_round_trips():
    """Pinhole and equidistant lift-after-project recover every
    non-occluded in-field point within the pixel-quantization bound on
    100 random scenes each."""
    rng = np.random.default_rng(99)

    pin = PinholeCamera(fx=150.0, fy=140.0, cx=32.0, cy=24.0, width=64, height=48)
    for _ in range(100):
        n = int(rng.integers(50, 300))
        pts = np.column_stack(
            [rng.uniform(-0.2, 0.2, n), rng.uniform(-0.15, 0.15, n), rng.uniform(1.0, 5.0, n)]
        )
        depth, winner = project_pinhole(PointCloud(pts), pin)
        lifted, pixels = lift_depth(depth, pin)
        assert len(lifted) == (winner >= 0).sum()
        for point, (v, u) in zip(lifted.points, pixels):
            src = pts[winner[v, u]]
            bound = src[2] * 0.5 * np.hypot(1 / pin.fx, 1 / pin.fy) + 1e-12
            assert np.linalg.norm(point - src) <= bound

    fth = FThetaCamera(f=50.0, cx=80.0, cy=80.0, theta_max=2.2, width=160, height=160)
    for _ in range(100):
        n = int(rng.integers(50, 300))
        theta = rng.uniform(0.02, 2.0, n)
        azimuth = rng.uniform(-np.pi, np.pi, n)
        rho = rng.uniform(1.0, 30.0, n)
        pts = np.column_stack(
            [
                rho * np.sin(theta) * np.cos(azimuth),
                rho * np.sin(theta) * np.sin(azimuth),
                rho * np.cos(theta),
            ]
        )
        depth, winner = project_ftheta(PointCloud(pts), fth)
        lifted, pixels = lift_ftheta(depth, fth)
        assert len(lifted) == (winner >= 0).sum()
        for point, (v, u) in zip(lifted.points, pixels):
            src = pts[winner[v, u]]
            src_range = np.linalg.norm(src)
            bound = src_range * (np.sqrt(0.5) / fth.f) * (1 + 1e-9) + 1e-12
            assert np.linalg.norm(point - src) <= bound
    report("projection round trips (pinhole and f-theta, 100 scenes each)")


def _tree_digest(root):
    digest = hashlib.sha256()
    for dirpath, dirnames, filenames in sorted(os.walk(root)):
        dirnames.sort()
        for name in sorted(filenames):
            path = os.path.join(dirpath, name)
            digest.update(os.path.relpath(path, root).encode())
            with open(path, "rb") as fh:
                digest.update(fh.read())
    return digest.hexdigest()


def test_bench_determinism_byte_identical(tmp_path):
    """Rerunning the benchmark with an identical config writes
    byte-identical CSV and JSON reports."""
    config = BenchConfig(n_points=150, seeds=[0, 1, 2], hypotheses=100, top_seeds=40)
    first = tmp_path / "first"
    second = tmp_path / "second"
    write_report(run_benchmark(config), first)
    write_report(run_benchmark(config), second)
    assert _tree_digest(first) == _tree_digest(second)
    report("benchmark determinism (byte-identical reports)")
