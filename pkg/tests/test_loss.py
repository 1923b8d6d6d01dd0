"""Pair loss values, analytic gradients vs finite differences, stats."""

import numpy as np
import pytest

from binhash import ContractError, LossParams, Rng, pair_grad, pair_loss, quantization_stats


def sgn(v):
    return np.where(np.asarray(v, dtype=np.float64) >= 0, 1.0, -1.0)


class TestPairLoss:
    def test_perfect_matching_pair(self):
        f = np.array([1.0, -1.0])
        out = pair_loss(f, f, sgn(f), sgn(f), 1, LossParams(c=1.0))
        assert out.total == 0.0

    def test_margin_satisfied_non_match(self):
        p = LossParams(c=1.0)
        f_i = np.array([1.0, 1.0])
        f_j = np.array([-1.0, -1.0])
        out = pair_loss(f_i, f_j, sgn(f_i), sgn(f_j), 0, p)
        assert out.total == 0.0

    def test_coincident_non_match(self):
        p = LossParams(c=1.0)
        f = np.array([1.0, -1.0])
        out = pair_loss(f, f, sgn(f), sgn(f), 0, p)
        assert out.hinge_term == 1.0
        assert out.total == 1.0

    def test_hand_evaluated_terms(self):
        f_i = np.array([0.5, -0.5])
        f_j = np.array([1.0, -1.0])
        out = pair_loss(f_i, f_j, sgn(f_i), sgn(f_j), 1, LossParams(c=1.0, alpha=1.0))
        assert out.similarity_term == pytest.approx(0.5, abs=1e-15)
        assert out.quantization_term == pytest.approx(0.5, abs=1e-15)
        assert out.total == pytest.approx(1.0, abs=1e-15)

    def test_non_sign_codes_rejected(self):
        f = np.array([1.0, -1.0])
        with pytest.raises(ContractError):
            pair_loss(f, f, np.array([0.5, 1.0]), sgn(f), 1, LossParams(c=1.0))

    def test_bad_label_rejected(self):
        f = np.array([1.0, -1.0])
        with pytest.raises(ContractError):
            pair_loss(f, f, sgn(f), sgn(f), 2, LossParams(c=1.0))

    def test_swap_symmetry(self):
        rng = Rng(5)
        p = LossParams(c=2.0, alpha=1.5)
        for y in (0, 1):
            f_i, f_j = rng.gaussian(4), rng.gaussian(4)
            b_i, b_j = sgn(rng.gaussian(4)), sgn(rng.gaussian(4))
            a = pair_loss(f_i, f_j, b_i, b_j, y, p)
            b = pair_loss(f_j, f_i, b_j, b_i, y, p)
            assert a.total == pytest.approx(b.total, abs=1e-15)
            g1 = pair_grad(f_i, f_j, b_i, b_j, y, p)
            g2 = pair_grad(f_j, f_i, b_j, b_i, y, p)
            np.testing.assert_allclose(g1[0], g2[1], atol=1e-15)
            np.testing.assert_allclose(g1[1], g2[0], atol=1e-15)

    def test_alpha_zero_match_is_squared_distance(self):
        rng = Rng(9)
        p = LossParams(c=3.0, alpha=0.0)
        f_i, f_j = rng.gaussian(5), rng.gaussian(5)
        out = pair_loss(f_i, f_j, sgn(f_i), sgn(f_j), 1, p)
        assert out.total == pytest.approx(float(((f_i - f_j) ** 2).sum()), rel=1e-15)

    def test_non_negative_and_zero_conditions(self):
        rng = Rng(12)
        p = LossParams(c=1.0)
        for y in (0, 1):
            for _ in range(50):
                f_i, f_j = rng.gaussian(3), rng.gaussian(3)
                out = pair_loss(f_i, f_j, sgn(f_i), sgn(f_j), y, p)
                assert out.total >= 0.0
        # zero iff matching pair coincides, non-matching beyond margin, f = b
        ones = np.ones(3)
        assert pair_loss(ones, ones, ones, ones, 1, p).total == 0.0
        far = -np.ones(3)
        assert pair_loss(ones, far, ones, far, 0, p).total == 0.0


class TestPairGrad:
    def test_coincident_match_leaves_quantization_only(self):
        f = np.array([0.4, -0.2])
        p = LossParams(c=1.0, alpha=2.0)
        g_i, g_j = pair_grad(f, f, sgn(f), sgn(f), 1, p)
        np.testing.assert_allclose(g_i, 2 * p.alpha * (f - sgn(f)), atol=1e-15)
        np.testing.assert_allclose(g_j, 2 * p.alpha * (f - sgn(f)), atol=1e-15)

    def test_inactive_hinge(self):
        p = LossParams(c=0.5, alpha=1.0)
        f_i = np.array([2.0, 0.0])
        f_j = np.array([-2.0, 0.0])
        g_i, _ = pair_grad(f_i, f_j, sgn(f_i), sgn(f_j), 0, p)
        np.testing.assert_allclose(g_i, 2 * (f_i - sgn(f_i)), atol=1e-15)

    def test_zero_distance_hinge_subgradient_is_zero(self):
        f = np.array([0.1, 0.1])
        p = LossParams(c=5.0, alpha=0.0)
        g_i, g_j = pair_grad(f, f, sgn(f), sgn(f), 0, p)
        np.testing.assert_array_equal(g_i, 0.0)
        np.testing.assert_array_equal(g_j, 0.0)

    def test_matches_finite_differences(self):
        """Central differences (h = 1e-4) on random configurations, away
        from the non-smooth band around d in {0, c}."""
        rng = Rng(101)
        checked = 0
        while checked < 30:
            code_len = 2 + rng.below(5)
            y = rng.below(2)
            params = LossParams(c=0.5 + 2.0 * rng.uniform(), alpha=[0.0, 1.0, 2.5][rng.below(3)])
            f_i, f_j = rng.gaussian(code_len), rng.gaussian(code_len)
            b_i, b_j = sgn(rng.gaussian(code_len)), sgn(rng.gaussian(code_len))
            d = float(np.linalg.norm(f_i - f_j))
            if abs(d - params.c) < 1e-3 or d < 1e-3:
                continue
            g_i, g_j = pair_grad(f_i, f_j, b_i, b_j, y, params)
            num_i = _fd_grad(lambda v: pair_loss(v, f_j, b_i, b_j, y, params).total, f_i)
            num_j = _fd_grad(lambda v: pair_loss(f_i, v, b_i, b_j, y, params).total, f_j)
            np.testing.assert_allclose(g_i, num_i, rtol=1e-4, atol=1e-7)
            np.testing.assert_allclose(g_j, num_j, rtol=1e-4, atol=1e-7)
            checked += 1


class TestQuantizationStats:
    def test_already_binary(self):
        assert quantization_stats(np.array([[1.0, -1.0], [-1.0, 1.0]])) == (0.0, 0.0)

    def test_zero_matrix(self):
        assert quantization_stats(np.zeros((3, 2))) == (1.0, 1.0)

    def test_hand_values(self):
        mean, peak = quantization_stats(np.array([[0.5, -2.0]]))
        assert mean == pytest.approx(0.75)
        assert peak == pytest.approx(1.0)

    def test_empty(self):
        assert quantization_stats(np.zeros((0, 4))) == (0.0, 0.0)


class TestLossParams:
    def test_code_len_defaults(self):
        p = LossParams.for_code_len(16)
        assert p.c == 8.0 and p.alpha == 1.0

    def test_validation(self):
        with pytest.raises(ContractError):
            LossParams(c=0.0)
        with pytest.raises(ContractError):
            LossParams(c=1.0, alpha=-0.5)


def _fd_grad(fn, x, h=1e-4):
    grad = np.zeros_like(x)
    for i in range(x.size):
        up = x.copy()
        down = x.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (fn(up) - fn(down)) / (2 * h)
    return grad
