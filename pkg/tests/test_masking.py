import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from amtl.errors import ShapeError
from amtl.masking import (
    AmlParams,
    AmtlParams,
    amtl_backward,
    amtl_logits,
    aml_forward,
    apply_mask,
    init_aml,
    init_amtl,
    mask_from_selection,
    mask_matrix,
    one_hot_rows,
    select,
    select_hard,
    ste_combine,
)
from amtl.ops import (
    finite_difference_gradient,
    relative_error,
    temperated_softmax,
    temperated_softmax_backward,
)

# Frozen from a 50-digit direct evaluation: temperated softmax of [1,2,3] at T=0.5.
SOFT_123_T05 = np.array([0.015876239976466766, 0.11731042782619836, 0.86681333219733487])


def eq1_mask(dim, k):
    return np.array([1.0 if j <= k else 0.0 for j in range(dim)])


class TestMaskMatrix:
    def test_matches_prefix_mask_for_every_onehot(self):
        for dim in range(1, 17):
            M = mask_matrix(dim)
            for k in range(dim):
                t = np.zeros(dim)
                t[k] = 1.0
                np.testing.assert_array_equal(mask_from_selection(t, M), eq1_mask(dim, k))

    def test_lower_triangular_ones(self):
        M = mask_matrix(4)
        assert M[2, 1] == 1.0 and M[2, 2] == 1.0 and M[2, 3] == 0.0

    def test_soft_selection_hand_product(self):
        m = mask_from_selection(np.array([0.5, 0.5, 0.0]), mask_matrix(3))
        np.testing.assert_array_equal(m, [1.0, 0.5, 0.0])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mask_from_selection(np.ones(3), mask_matrix(4))


class TestSelect:
    def test_tie_breaks_to_lowest_index(self):
        res = select(np.zeros(4), 0.5)
        assert res.k == 0
        np.testing.assert_array_equal(res.hard, [1, 0, 0, 0])

    def test_clear_winner(self):
        res = select(np.array([0.0, 10.0, 0.0]), 1.0)
        assert res.k == 1
        np.testing.assert_array_equal(res.hard, [0, 1, 0])

    def test_frozen_soft_values(self):
        res = select(np.array([1.0, 2.0, 3.0]), 0.5)
        assert res.k == 2
        np.testing.assert_allclose(res.soft, SOFT_123_T05, atol=1e-15)
        assert abs(res.probs.sum() - 1.0) <= 1e-12

    @given(
        arrays(np.float64, st.integers(2, 12), elements=st.floats(-20, 20)),
        st.floats(-5, 5),
        st.floats(0.1, 10),
    )
    def test_argmax_invariance_shift_and_scale(self, logits, c, lam):
        k0 = select(logits, 1.0).k
        assert select(logits + c, 1.0).k == k0
        assert select(logits * lam, 1.0).k == k0

    def test_select_hard_matches_select(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(40, 8))
        ks = select_hard(logits)
        for i in range(40):
            assert ks[i] == select(logits[i], 0.2).k


class TestSteCombine:
    def test_forward_is_hard(self):
        out = ste_combine(np.array([0.6, 0.4]), np.array([1.0, 0.0]))
        np.testing.assert_array_equal(out, [1.0, 0.0])

    def test_soft_equal_hard(self):
        h = np.array([0.0, 1.0, 0.0])
        np.testing.assert_array_equal(ste_combine(h, h), h)

    def test_forward_bitwise_hard_on_random_cases(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            d = rng.integers(1, 16)
            soft = temperated_softmax(rng.normal(size=d), 0.2)
            k = rng.integers(0, d)
            hard = np.zeros(d)
            hard[k] = 1.0
            assert np.array_equal(ste_combine(soft, hard), hard)

    def test_rejects_non_onehot(self):
        with pytest.raises(ShapeError):
            ste_combine(np.array([0.5, 0.5]), np.array([0.5, 0.5]))
        with pytest.raises(ShapeError):
            ste_combine(np.array([0.5, 0.5]), np.array([1.0, 1.0]))

    def test_gradient_contract_matches_surrogate_finite_differences(self):
        # upstream grad applied through the straight-through path must equal
        # the finite-difference gradient of the soft surrogate <g, soft(logits)>
        rng = np.random.default_rng(9)
        for _ in range(20):
            d = int(rng.integers(2, 10))
            logits = rng.uniform(-1, 1, d)
            g = rng.uniform(-1, 1, d)
            t = 0.2
            soft = temperated_softmax(logits, t)
            analytic = temperated_softmax_backward(soft, g, t)
            fd = finite_difference_gradient(
                lambda x: float(np.dot(g, temperated_softmax(x, t))), logits.copy(), eps=1e-4
            )
            assert relative_error(analytic, fd) <= 1e-3


class TestApplyMask:
    def test_all_ones_identity(self):
        e = np.array([0.1, -0.2, 0.3])
        np.testing.assert_array_equal(apply_mask(e, np.ones(3)), e)

    def test_prefix_zeroes_suffix(self):
        out = apply_mask(np.array([0.1, 0.2, 0.3, 0.4]), np.array([1.0, 0, 0, 0]))
        np.testing.assert_array_equal(out, [0.1, 0, 0, 0])

    def test_gradient_is_masked_upstream(self):
        rng = np.random.default_rng(1)
        e = rng.uniform(-1, 1, 5)
        m = np.array([1.0, 1.0, 0.0, 0.0, 0.0])
        g = rng.uniform(-1, 1, 5)
        fd = finite_difference_gradient(
            lambda x: float(np.dot(g, apply_mask(x, m))), e.copy(), eps=1e-4
        )
        np.testing.assert_allclose(fd, m * g, atol=1e-9)


class TestTwins:
    def make_params(self, seed=3, z=2, hidden=4, dim=5, temperature=0.2):
        rng = np.random.default_rng(seed)
        return init_amtl(rng, z, dim, hidden=hidden, temperature=temperature)

    def test_alpha_one_is_pure_h_branch(self):
        params = self.make_params()
        s = np.array([0.4, -0.2])
        logits, _ = amtl_logits(params, s, 1.0)
        np.testing.assert_array_equal(logits, aml_forward(params.h_aml, s)[0])

    def test_alpha_zero_is_pure_l_branch(self):
        params = self.make_params()
        s = np.array([0.4, -0.2])
        logits, _ = amtl_logits(params, s, 0.0)
        np.testing.assert_array_equal(logits, aml_forward(params.l_aml, s)[0])

    def test_half_alpha_on_identity_branches_is_mean(self):
        ident = AmlParams([(np.eye(2), np.zeros(2))])
        shifted = AmlParams([(np.eye(2), np.array([1.0, -1.0]))])
        params = AmtlParams(h_aml=ident, l_aml=shifted, temperature=1.0)
        logits, _ = amtl_logits(params, np.array([2.0, 4.0]), 0.5)
        # h branch: [2,4]; l branch: [3,3]; mean: [2.5, 3.5]
        np.testing.assert_allclose(logits, [2.5, 3.5], atol=1e-15)

    def test_branch_shape_mismatch_rejected(self):
        bad = AmlParams([(np.zeros((2, 3)), np.zeros(3))])
        good = AmlParams([(np.zeros((2, 5)), np.zeros(5))])
        with pytest.raises(ShapeError):
            AmtlParams(h_aml=good, l_aml=bad, temperature=1.0)

    def test_alpha_extremes_kill_other_branch_gradient(self):
        params = self.make_params()
        s = np.array([0.3, 0.9])
        for a, dead in ((1.0, "l"), (0.0, "h")):
            logits, caches = amtl_logits(params, s, a)
            grads = amtl_backward(params, caches, np.ones(params.dim))
            for gW, gb in grads[dead]:
                assert not gW.any() and not gb.any()

    def test_backward_matches_finite_differences(self):
        params = self.make_params(seed=8)
        s = np.array([0.25, -0.75])
        a = 0.3
        g = np.random.default_rng(2).uniform(-1, 1, params.dim)
        logits, caches = amtl_logits(params, s, a)
        grads = amtl_backward(params, caches, g)

        for branch_name, branch in (("h", params.h_aml), ("l", params.l_aml)):
            for li, (W, b) in enumerate(branch.layers):
                for pname, arr in (("W", W), ("b", b)):
                    def surrogate(v, _arr=arr):
                        old = _arr.copy()
                        _arr[...] = v
                        out, _ = amtl_logits(params, s, a)
                        _arr[...] = old
                        return float(np.dot(g, out))

                    fd = finite_difference_gradient(surrogate, arr.copy(), eps=1e-4)
                    got = grads[branch_name][li][0 if pname == "W" else 1]
                    assert relative_error(got, fd) <= 1e-3, (branch_name, li, pname)

    def test_branch_gradient_scaling_ratio(self):
        # identical branch initializations and the same input: gradient norms
        # must sit in the exact ratio alpha : (1 - alpha)
        rng = np.random.default_rng(5)
        branch = init_aml(rng, [2, 4, 6])
        clone = AmlParams([(W.copy(), b.copy()) for W, b in branch.layers])
        params = AmtlParams(h_aml=branch, l_aml=clone, temperature=0.5)
        s = np.array([0.1, 0.7])
        for a in (0.2, 0.5, 0.9):
            logits, caches = amtl_logits(params, s, a)
            grads = amtl_backward(params, caches, np.ones(6))
            nh = np.sqrt(sum((gW**2).sum() + (gb**2).sum() for gW, gb in grads["h"]))
            nl = np.sqrt(sum((gW**2).sum() + (gb**2).sum() for gW, gb in grads["l"]))
            assert nh / nl == pytest.approx(a / (1 - a), rel=1e-12)

    def test_batched_matches_single(self):
        params = self.make_params(seed=13)
        rng = np.random.default_rng(4)
        S = rng.uniform(-1, 1, (6, 2))
        alphas = rng.uniform(0, 1, 6)
        G = rng.uniform(-1, 1, (6, params.dim))
        logits_b, caches_b = amtl_logits(params, S, alphas)
        grads_b = amtl_backward(params, caches_b, G)
        acc = {
            "h": [(np.zeros_like(W), np.zeros_like(b)) for W, b in params.h_aml.layers],
            "l": [(np.zeros_like(W), np.zeros_like(b)) for W, b in params.l_aml.layers],
        }
        for i in range(6):
            logits_i, caches_i = amtl_logits(params, S[i], alphas[i])
            np.testing.assert_allclose(logits_b[i], logits_i, atol=1e-14)
            g_i = amtl_backward(params, caches_i, G[i])
            for name in ("h", "l"):
                for li, (gW, gb) in enumerate(g_i[name]):
                    acc[name][li][0][...] += gW
                    acc[name][li][1][...] += gb
        for name in ("h", "l"):
            for li in range(len(acc[name])):
                np.testing.assert_allclose(grads_b[name][li][0], acc[name][li][0], atol=1e-12)
                np.testing.assert_allclose(grads_b[name][li][1], acc[name][li][1], atol=1e-12)

    def test_invalid_alpha_rejected(self):
        params = self.make_params()
        with pytest.raises(ShapeError):
            amtl_logits(params, np.array([0.0, 0.0]), 1.5)


class TestInit:
    def test_bounds_and_determinism(self):
        a = init_amtl(np.random.default_rng(7), 2, 8)
        b = init_amtl(np.random.default_rng(7), 2, 8)
        for (Wa, ba), (Wb, bb) in zip(a.h_aml.layers, b.h_aml.layers):
            np.testing.assert_array_equal(Wa, Wb)
            np.testing.assert_array_equal(ba, bb)
            assert np.abs(Wa).max() <= 1.0 / np.sqrt(Wa.shape[0])

    def test_branches_differ(self):
        params = init_amtl(np.random.default_rng(7), 2, 8)
        assert not np.array_equal(params.h_aml.layers[0][0], params.l_aml.layers[0][0])

    def test_prefix_mask_suffix_is_zero(self):
        params = init_amtl(np.random.default_rng(3), 2, 6)
        rng = np.random.default_rng(1)
        for _ in range(50):
            s = rng.uniform(-2, 2, 2)
            res = select(amtl_logits(params, s, float(rng.uniform(0, 1)))[0], 0.2)
            m = mask_from_selection(ste_combine(res.soft, res.hard), params.mask)
            e = rng.uniform(-1, 1, 6)
            masked = apply_mask(e, m)
            assert not masked[res.k + 1 :].any()
            assert (masked[: res.k + 1] == e[: res.k + 1]).all()


class TestOneHotRows:
    def test_basic(self):
        out = one_hot_rows(np.array([2, 0]), 3)
        np.testing.assert_array_equal(out, [[0, 0, 1], [1, 0, 0]])
