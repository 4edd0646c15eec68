import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.exceptions import NotFittedError

from _scenarios import RATE_T1, stein_rate_study
from glrbandit.environment import gen_theta_star
from glrbandit.exceptions import DimensionMismatch, InvalidConfig, RankOutOfRange
from glrbandit.matrix_core import SvdFactorization
from glrbandit.stage1 import solve_stein
from glrbandit.subspace import (
    SubspaceRotation,
    SubspaceTransformer,
    build_rotated_problem,
    effective_dimension,
    reduce_tail,
    rotate_and_vectorize,
    rotate_parameter,
    s_perp_bound,
    svd_split,
    tail_norm,
    unvectorize,
)


def colmajor(block):
    return block.flatten(order="F")


def random_rotation(d1, d2, r, seed):
    A = np.random.default_rng(seed).standard_normal((d1, d2))
    return svd_split(A, r)


class TestSvdSplit:
    def test_diagonal_example(self):
        rot = svd_split(np.diag([3.0, 0.0, 0.0]), 1)
        np.testing.assert_allclose(np.abs(rot.U_hat[:, 0]), [1, 0, 0], atol=1e-14)
        np.testing.assert_allclose(np.abs(rot.V_hat[:, 0]), [1, 0, 0], atol=1e-14)
        # perps span {e2, e3}
        np.testing.assert_allclose(rot.U_perp @ rot.U_perp.T, np.diag([0.0, 1, 1]), atol=1e-14)
        np.testing.assert_allclose(rot.V_perp @ rot.V_perp.T, np.diag([0.0, 1, 1]), atol=1e-14)

    def test_full_rank_split(self):
        rot = random_rotation(3, 5, 3, 0)
        assert rot.U_perp.shape == (3, 0)
        assert rot.V_perp.shape == (5, 2)

    @pytest.mark.parametrize("seed", range(5))
    def test_orthogonality(self, seed):
        rot = random_rotation(12, 12, 2, seed)
        np.testing.assert_allclose(rot.left.T @ rot.left, np.eye(12), atol=1e-8)
        np.testing.assert_allclose(rot.right.T @ rot.right, np.eye(12), atol=1e-8)

    def test_accepts_result_and_factorization(self):
        A = np.random.default_rng(1).standard_normal((4, 3))
        a = svd_split(solve_stein(A, 0.1), 1)
        b = svd_split(SvdFactorization.of(A), 1)
        np.testing.assert_allclose(np.abs(a.U_hat), np.abs(b.U_hat), atol=1e-12)

    @pytest.mark.parametrize("r", [0, 4])
    def test_rank_out_of_range(self, r):
        with pytest.raises(RankOutOfRange):
            svd_split(np.ones((3, 5)), r)


class TestRotateAndVectorize:
    def test_identity_rotation_blocks(self):
        d1, d2, r = 4, 3, 2
        I1, I2 = np.eye(d1), np.eye(d2)
        rot = SubspaceRotation(I1[:, :r], I1[:, r:], I2[:, :r], I2[:, r:], r)
        X = np.arange(12.0).reshape(d1, d2)
        expected = np.concatenate([colmajor(X[:r, :r]), colmajor(X[r:, :r]),
                                   colmajor(X[:r, r:]), colmajor(X[r:, r:])])
        np.testing.assert_array_equal(rotate_and_vectorize(rot, X), expected)

    def test_stack_shape(self):
        rot = random_rotation(4, 3, 1, 2)
        X = np.random.default_rng(3).standard_normal((7, 4, 3))
        out = rotate_and_vectorize(rot, X)
        assert out.shape == (7, 12)
        np.testing.assert_allclose(out[3], rotate_and_vectorize(rot, X[3]), atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            rotate_and_vectorize(random_rotation(4, 3, 1, 0), np.ones((3, 4)))

    def test_exact_subspace_has_zero_tail(self):
        truth = gen_theta_star(10, 10, 2, "random-rotated", 1.0, np.random.default_rng(4))
        rot = svd_split(truth.theta_star, 2)
        v = rotate_parameter(rot, truth.theta_star)
        np.testing.assert_allclose(v[rot.k:], 0.0, atol=1e-12)
        assert np.linalg.norm(v[: rot.k]) == pytest.approx(1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 10_000))
    def test_isometry_and_inner_products(self, d1, d2, seed):
        r = 1 + seed % min(d1, d2)
        rot = random_rotation(d1, d2, r, seed)
        rng = np.random.default_rng(seed + 1)
        X, T = rng.standard_normal((2, d1, d2))
        vx, vt = rotate_and_vectorize(rot, X), rotate_parameter(rot, T)
        assert np.linalg.norm(vx) == pytest.approx(np.linalg.norm(X), rel=1e-12)
        assert vx @ vt == pytest.approx(np.sum(X * T), abs=1e-9 * (1 + np.abs(X).sum() * np.abs(T).max()))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
    def test_round_trip(self, d1, d2, seed):
        rot = random_rotation(d1, d2, 1 + seed % min(d1, d2), seed)
        X = np.random.default_rng(seed).standard_normal((d1, d2))
        np.testing.assert_allclose(unvectorize(rot, rotate_and_vectorize(rot, X)), X, atol=1e-10)

    def test_zero_matrix(self):
        np.testing.assert_array_equal(rotate_parameter(random_rotation(3, 3, 1, 0), np.zeros((3, 3))), 0.0)

    def test_tail_norm_matches_direct(self):
        rng = np.random.default_rng(5)
        truth = gen_theta_star(6, 5, 1, "random-rotated", 1.0, rng)
        noisy = truth.theta_star + 0.3 * rng.standard_normal((6, 5))
        rot = svd_split(noisy, 1)
        direct = np.linalg.norm(rot.U_perp.T @ truth.theta_star @ rot.V_perp)
        assert tail_norm(rotate_parameter(rot, truth.theta_star), rot.k) == pytest.approx(direct, rel=1e-12)

    def test_misspecification_cauchy_schwarz(self):
        rng = np.random.default_rng(6)
        truth = gen_theta_star(6, 6, 1, "random-rotated", 1.0, rng)
        rot = svd_split(truth.theta_star + 0.2 * rng.standard_normal((6, 6)), 1)
        th = rotate_parameter(rot, truth.theta_star)
        X = rotate_and_vectorize(rot, rng.standard_normal((200, 6, 6)))
        k = rot.k
        gap = np.abs(X @ th - reduce_tail(X, k) @ th[:k])
        bound = np.linalg.norm(X[:, k:], axis=1) * np.linalg.norm(th[k:])
        assert np.all(gap <= bound + 1e-12)


class TestReduceAndDims:
    def test_reduce_example(self):
        np.testing.assert_array_equal(reduce_tail(np.arange(1.0, 7.0), 4), [1, 2, 3, 4])

    def test_reduce_dimension_guard(self):
        with pytest.raises(RankOutOfRange):
            reduce_tail(np.arange(6.0), 6)

    def test_reduce_matches_three_blocks(self):
        rot = random_rotation(5, 4, 2, 7)
        X = np.random.default_rng(8).standard_normal((5, 4))
        Xr = rot.left.T @ X @ rot.right
        r = 2
        three = np.concatenate([colmajor(Xr[:r, :r]), colmajor(Xr[r:, :r]), colmajor(Xr[:r, r:])])
        np.testing.assert_allclose(reduce_tail(rotate_and_vectorize(rot, X), rot.k), three, atol=1e-12)

    def test_effective_dimension(self):
        assert effective_dimension(10, 10, 1) == 19
        assert effective_dimension(12, 12, 2) == 44
        assert effective_dimension(7, 3, 2) == 7 * 3 - 5 * 1

    def test_rotated_problem(self):
        rot = random_rotation(5, 5, 1, 9)
        arms = np.random.default_rng(10).standard_normal((20, 5, 5))
        prob = build_rotated_problem(rot, arms, S_perp=0.3)
        assert prob.arms_full.shape == (20, 25) and prob.arms_reduced.shape == (20, 9)
        assert prob.k == 9 and prob.p == 25 and prob.k < prob.p
        np.testing.assert_allclose(np.linalg.norm(prob.arms_full, axis=1),
                                   np.linalg.norm(arms.reshape(20, -1), axis=1), rtol=1e-12)

    def test_rotated_problem_needs_tail(self):
        with pytest.raises(RankOutOfRange):
            build_rotated_problem(random_rotation(1, 4, 1, 0), np.ones((2, 1, 4)))


class TestSPerp:
    def test_substitution(self):
        val = s_perp_bound(10, 10, 1, 100.0, 1800, 1.0, 0.01)
        assert val == pytest.approx(20 * 100 / 1800 * np.log(2000))
        assert val == pytest.approx(8.445, abs=1e-3)

    def test_scaling_and_limit(self):
        a = s_perp_bound(10, 10, 1, 100.0, 1800, 1.0, 0.01)
        assert s_perp_bound(10, 10, 1, 100.0, 3600, 1.0, 0.01) == pytest.approx(a / 2)
        assert s_perp_bound(10, 10, 1, 100.0, 10**12, 1.0, 0.01) < 1e-6
        assert s_perp_bound(10, 10, 1, 100.0, 1800, 1.0, 0.01, multiplier=0.5) == pytest.approx(a / 2)

    def test_invalid(self):
        with pytest.raises(InvalidConfig):
            s_perp_bound(10, 10, 1, 100.0, 0, 1.0, 0.01)
        with pytest.raises(InvalidConfig):
            s_perp_bound(10, 10, 1, 100.0, 10, 1.0, 1.0)


class TestTransformer:
    def test_fit_transform_inverse(self):
        rng = np.random.default_rng(11)
        theta = rng.standard_normal((4, 5))
        arms = rng.standard_normal((6, 4, 5))
        tr = SubspaceTransformer(rank=2).fit(theta)
        v = tr.transform(arms)
        assert v.shape == (6, 20) and tr.k_ == 14
        np.testing.assert_allclose(tr.inverse_transform(v), arms, atol=1e-10)
        red = SubspaceTransformer(rank=2, reduce=True).fit(theta)
        np.testing.assert_allclose(red.transform(arms), v[:, :14], atol=1e-12)
        assert red.inverse_transform(red.transform(arms)).shape == (6, 4, 5)

    def test_params_and_unfitted(self):
        tr = SubspaceTransformer(rank=3, reduce=True)
        assert tr.get_params() == {"rank": 3, "reduce": True}
        with pytest.raises(NotFittedError):
            tr.transform(np.ones((2, 2)))


def test_tail_norm_shrinks_with_exploration_length():
    study = stein_rate_study(n_seeds=20)
    med = [np.median(study[T][1]) for T in RATE_T1]
    assert med[0] > med[1] > med[2], med
