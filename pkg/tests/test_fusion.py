import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from genreg.correspondence import posterior_softmax, similarity_geo, SimilarityMatrix
from genreg.features import FeatureField, l2_normalize_rows
from genreg.fusion import (
    CLAMP_EPS,
    fuse_concat_baseline,
    fuse_noisy_and,
    fuse_noisy_or,
    uniform_prior,
)


def odds(p):
    return p / (1.0 - p)


class TestNoisyAnd:
    def test_worked_example_against_odds_oracle(self):
        # o = odds(0.9) * odds(0.8) / odds(0.5) = 9 * 4 / 1 = 36 -> 36/37.
        out = fuse_noisy_and(np.array([[0.9]]), np.array([[0.8]]), 0.5)
        o = odds(0.9) * odds(0.8) / odds(0.5)
        assert out[0, 0] == pytest.approx(o / (1 + o), rel=1e-12)
        assert out[0, 0] == pytest.approx(36.0 / 37.0, rel=1e-9)

    def test_matches_odds_oracle_elementwise(self, rng):
        a = rng.uniform(0.01, 0.99, (6, 7))
        b = rng.uniform(0.01, 0.99, (6, 7))
        pi = 0.2
        out = fuse_noisy_and(a, b, pi)
        o = odds(a) * odds(b) / odds(pi)
        np.testing.assert_allclose(out, o / (1 + o), rtol=1e-10)

    def test_identity_evidence(self, rng):
        # A branch equal to the prior contributes nothing.
        p = rng.uniform(0.001, 0.999, (5, 5))
        pi = rng.uniform(0.05, 0.95, (5, 5))
        out = fuse_noisy_and(p, pi, pi)
        np.testing.assert_allclose(out, p, atol=1e-10)

    def test_no_evidence_fixed_point(self):
        pi = 0.37
        out = fuse_noisy_and(np.full((3, 3), pi), np.full((3, 3), pi), pi)
        np.testing.assert_allclose(out, pi, atol=1e-12)

    def test_output_strictly_inside_unit_interval(self, rng):
        a = rng.uniform(0, 1, (20, 20))
        b = rng.uniform(0, 1, (20, 20))
        out = fuse_noisy_and(a, b, 1e-6)
        assert (out > 0).all() and (out < 1).all()

    @given(st.integers(0, 2**32 - 1))
    def test_monotone_in_each_branch(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(0.05, 0.9, (4, 4))
        b = rng.uniform(0.05, 0.9, (4, 4))
        pi = float(rng.uniform(0.05, 0.95))
        base = fuse_noisy_and(a, b, pi)
        bigger = fuse_noisy_and(np.minimum(a + 0.05, 1.0), b, pi)
        assert (bigger >= base - 1e-12).all()
        bigger = fuse_noisy_and(a, np.minimum(b + 0.05, 1.0), pi)
        assert (bigger >= base - 1e-12).all()

    def test_symmetric_under_branch_swap(self, rng):
        a = rng.uniform(0.01, 0.99, (5, 6))
        b = rng.uniform(0.01, 0.99, (5, 6))
        np.testing.assert_allclose(
            fuse_noisy_and(a, b, 0.3), fuse_noisy_and(b, a, 0.3), rtol=1e-12
        )

    def test_agreement_above_half_amplifies(self, rng):
        a = rng.uniform(0.55, 0.99, (8, 8))
        b = rng.uniform(0.55, 0.99, (8, 8))
        out = fuse_noisy_and(a, b, 0.5)
        assert (out > np.maximum(a, b)).all()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shapes differ"):
            fuse_noisy_and(np.zeros((2, 2)), np.zeros((2, 3)), 0.5)

    def test_prior_bounds(self):
        p = np.full((2, 2), 0.5)
        for bad in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValueError, match="strictly inside"):
                fuse_noisy_and(p, p, bad)

    def test_prior_matrix_shape_checked(self):
        p = np.full((2, 2), 0.5)
        with pytest.raises(ValueError, match="prior shape"):
            fuse_noisy_and(p, p, np.full((3, 3), 0.5))

    def test_accepts_posterior_matrix_inputs(self, rng):
        sim = SimilarityMatrix(rng.uniform(-1, 1, (4, 6)), branch="geo")
        p = posterior_softmax(sim, 0.1)
        out = fuse_noisy_and(p, p, uniform_prior(4, 6))
        assert out.shape == (4, 6)

    def test_exhaustive_bayes_enumeration(self, rng):
        # Discrete two-signal generative model: binary match state, each
        # branch emits one of four symbols with known conditional tables.
        # The fused posterior must equal exact enumeration.
        for _ in range(50):
            pi = float(rng.uniform(0.01, 0.99))
            t1 = rng.dirichlet(np.ones(4), size=2)  # rows: P(s | M=0), P(s | M=1)
            t2 = rng.dirichlet(np.ones(4), size=2)
            for s1 in range(4):
                for s2 in range(4):
                    joint1 = pi * t1[1, s1] * t2[1, s2]
                    joint0 = (1 - pi) * t1[0, s1] * t2[0, s2]
                    exact = joint1 / (joint1 + joint0)
                    p1 = pi * t1[1, s1] / (pi * t1[1, s1] + (1 - pi) * t1[0, s1])
                    p2 = pi * t2[1, s2] / (pi * t2[1, s2] + (1 - pi) * t2[0, s2])
                    fused = fuse_noisy_and(np.array([[p1]]), np.array([[p2]]), pi)
                    assert fused[0, 0] == pytest.approx(exact, abs=1e-12)


class TestNoisyOr:
    def test_zero_inputs(self):
        assert fuse_noisy_or(np.zeros((1, 1)), np.zeros((1, 1)))[0, 0] == 0.0

    def test_direct_formula(self):
        out = fuse_noisy_or(np.array([[0.9]]), np.array([[0.8]]))
        assert out[0, 0] == pytest.approx(0.98, abs=1e-15)

    def test_monte_carlo_small(self, rng):
        a, b = 0.37, 0.62
        out = fuse_noisy_or(np.array([[a]]), np.array([[b]]))[0, 0]
        n = 200_000
        draws = (rng.uniform(size=n) < a) | (rng.uniform(size=n) < b)
        estimate = draws.mean()
        se = np.sqrt(out * (1 - out) / n)
        assert abs(estimate - out) <= 3 * se + 1e-12

    def test_never_below_either_input(self, rng):
        a = rng.uniform(0, 1, (10, 10))
        b = rng.uniform(0, 1, (10, 10))
        out = fuse_noisy_or(a, b)
        assert (out >= a - 1e-12).all() and (out >= b - 1e-12).all()

    def test_permutation_equivariant(self, rng):
        a = rng.uniform(0, 1, (6, 7))
        b = rng.uniform(0, 1, (6, 7))
        perm = rng.permutation(6)
        np.testing.assert_allclose(fuse_noisy_or(a, b)[perm], fuse_noisy_or(a[perm], b[perm]))

    def test_swap_symmetric(self, rng):
        a = rng.uniform(0, 1, (5, 5))
        b = rng.uniform(0, 1, (5, 5))
        np.testing.assert_allclose(fuse_noisy_or(a, b), fuse_noisy_or(b, a))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shapes differ"):
            fuse_noisy_or(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="lie in"):
            fuse_noisy_or(np.full((1, 1), 1.5), np.full((1, 1), 0.5))


class TestUniformPrior:
    def test_value(self):
        assert uniform_prior(20, 50) == 1.0 / 1000.0

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            uniform_prior(0, 5)


class TestConcatBaseline:
    def test_identical_fields_give_diagonal_argmax(self, rng):
        img = l2_normalize_rows(FeatureField(rng.standard_normal((6, 4))))
        geo = l2_normalize_rows(FeatureField(rng.standard_normal((6, 8))))
        out = fuse_concat_baseline(img, img, geo, geo, 0.1)
        np.testing.assert_array_equal(out.argmax(axis=1), np.arange(6))

    def test_zero_geo_reduces_to_image_only(self, rng):
        img_src = l2_normalize_rows(FeatureField(rng.standard_normal((5, 4))))
        img_tgt = l2_normalize_rows(FeatureField(rng.standard_normal((7, 4))))
        zeros_src = FeatureField(np.zeros((5, 3)))
        zeros_tgt = FeatureField(np.zeros((7, 3)))
        out = fuse_concat_baseline(img_src, img_tgt, zeros_src, zeros_tgt, 0.1)
        expected = posterior_softmax(similarity_geo(img_src, img_tgt), 0.1).values
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_matches_compositional_oracle(self, rng):
        img_src = FeatureField(rng.standard_normal((6, 4)))
        img_tgt = FeatureField(rng.standard_normal((8, 4)))
        geo_src = FeatureField(rng.standard_normal((6, 10)))
        geo_tgt = FeatureField(rng.standard_normal((8, 10)))
        out = fuse_concat_baseline(img_src, img_tgt, geo_src, geo_tgt, 0.2)

        def joined(img, geo):
            cat = np.concatenate(
                [
                    l2_normalize_rows(img).descriptors,
                    l2_normalize_rows(geo).descriptors,
                ],
                axis=1,
            )
            return l2_normalize_rows(FeatureField(cat))

        sim = similarity_geo(joined(img_src, geo_src), joined(img_tgt, geo_tgt))
        expected = posterior_softmax(sim, 0.2).values
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_point_count_mismatch(self, rng):
        f4 = FeatureField(rng.standard_normal((4, 3)))
        f5 = FeatureField(rng.standard_normal((5, 3)))
        with pytest.raises(ValueError, match="point counts differ"):
            fuse_concat_baseline(f4, f4, f5, f4, 0.1)


class TestClamping:
    def test_exact_zero_and_one_inputs_survive(self):
        a = np.array([[0.0, 1.0]])
        b = np.array([[1.0, 0.0]])
        out = fuse_noisy_and(a, b, 0.5)
        assert np.isfinite(out).all()
        # Clamp keeps odds finite: 0 is treated as CLAMP_EPS.
        assert out[0, 0] > 0.0
        assert out[0, 1] < 1.0
        assert CLAMP_EPS == 1e-12
