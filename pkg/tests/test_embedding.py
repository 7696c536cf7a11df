import numpy as np
import pytest

from amtl.embedding import (
    EmbeddingTable,
    init_table,
    lookup,
    masked_lookup,
    sgd_update,
    sgd_update_rows,
)
from amtl.errors import NumericsError, ShapeError, VocabularyError
from amtl.freq import build_stats
from amtl.masking import AmlParams, AmtlParams, init_amtl


def rigged_params(dim, k):
    """Selection layer whose logits always argmax at k, for any input."""
    b = np.full(dim, -10.0)
    b[k] = 10.0
    branch = AmlParams([(np.zeros((2, dim)), b)])
    clone = AmlParams([(np.zeros((2, dim)), b.copy())])
    return AmtlParams(h_aml=branch, l_aml=clone, temperature=0.2)


@pytest.fixture
def stats100():
    rng = np.random.default_rng(0)
    return build_stats("f", rng.integers(0, 50, size=100))


class TestLookup:
    def test_identity_table_gives_basis_vectors(self):
        table = EmbeddingTable("f", 4, 4, np.eye(4))
        for j in range(4):
            expected = np.zeros(4)
            expected[j] = 1.0
            np.testing.assert_array_equal(lookup(table, j), expected)

    def test_fresh_rows_within_init_bounds(self):
        table = init_table(np.random.default_rng(3), "f", 50, 8)
        assert np.abs(table.weights).max() <= 0.01

    def test_lookup_equals_onehot_product(self):
        table = init_table(np.random.default_rng(1), "f", 10, 6)
        for vid in range(10):
            onehot = np.zeros(10)
            onehot[vid] = 1.0
            np.testing.assert_array_equal(lookup(table, vid), table.weights.T @ onehot)

    def test_returns_copy(self):
        table = init_table(np.random.default_rng(1), "f", 3, 2)
        row = lookup(table, 0)
        row[:] = 99.0
        assert np.abs(table.weights).max() <= 0.01

    def test_out_of_range(self):
        table = init_table(np.random.default_rng(1), "f", 3, 2)
        for bad in (-1, 3):
            with pytest.raises(VocabularyError):
                lookup(table, bad)


class TestMaskedLookup:
    def test_full_dim_selection_is_identity(self, stats100):
        table = init_table(np.random.default_rng(2), "f", 100, 6)
        masked, res, _ = masked_lookup(table, rigged_params(6, 5), stats100, 17)
        assert res.k == 5
        np.testing.assert_array_equal(masked, lookup(table, 17))

    def test_k_zero_keeps_only_first(self, stats100):
        table = init_table(np.random.default_rng(2), "f", 100, 6)
        masked, res, _ = masked_lookup(table, rigged_params(6, 0), stats100, 17)
        assert res.k == 0
        assert masked[0] == table.weights[17, 0]
        assert not masked[1:].any()

    def test_zero_suffix_for_every_id(self, stats100):
        table = init_table(np.random.default_rng(4), "f", 100, 8)
        params = init_amtl(np.random.default_rng(5), 2, 8)
        for vid in range(100):
            masked, res, _ = masked_lookup(table, params, stats100, vid)
            assert not masked[res.k + 1 :].any()
            np.testing.assert_array_equal(masked[: res.k + 1], table.weights[vid, : res.k + 1])

    def test_deterministic_per_id(self, stats100):
        table = init_table(np.random.default_rng(4), "f", 100, 8)
        params = init_amtl(np.random.default_rng(5), 2, 8)
        a1, r1, _ = masked_lookup(table, params, stats100, 42)
        a2, r2, _ = masked_lookup(table, params, stats100, 42)
        np.testing.assert_array_equal(a1, a2)
        assert r1.k == r2.k

    def test_dim_mismatch(self, stats100):
        table = init_table(np.random.default_rng(4), "f", 100, 8)
        with pytest.raises(ShapeError):
            masked_lookup(table, init_amtl(np.random.default_rng(5), 2, 4), stats100, 0)


class TestSgdUpdate:
    def test_zero_grad_no_change(self):
        table = init_table(np.random.default_rng(6), "f", 5, 3)
        before = table.weights.copy()
        sgd_update(table, 2, np.zeros(3), lr=1.0)
        np.testing.assert_array_equal(table.weights, before)

    def test_lr_one_grad_equals_row_zeroes_it(self):
        table = init_table(np.random.default_rng(6), "f", 5, 3)
        sgd_update(table, 1, table.weights[1].copy(), lr=1.0)
        np.testing.assert_array_equal(table.weights[1], np.zeros(3))

    def test_only_touched_row_changes(self):
        table = init_table(np.random.default_rng(6), "f", 5, 3)
        before = table.weights.copy()
        sgd_update(table, 3, np.ones(3), lr=0.1)
        mask = np.ones(5, dtype=bool)
        mask[3] = False
        np.testing.assert_array_equal(table.weights[mask], before[mask])

    def test_nonfinite_rejected(self):
        table = init_table(np.random.default_rng(6), "f", 5, 3)
        with pytest.raises(NumericsError):
            sgd_update(table, 0, np.array([1.0, np.nan, 0.0]), lr=0.1)

    def test_masked_dims_receive_zero_update(self, stats100):
        # gradient through a masked forward only touches the kept prefix
        table = init_table(np.random.default_rng(7), "f", 100, 6)
        params = rigged_params(6, 2)
        masked, res, caches = masked_lookup(table, params, stats100, 9)
        upstream = np.ones(6)
        grad_e = caches["mask"] * upstream
        before = table.weights[9].copy()
        sgd_update(table, 9, grad_e, lr=0.5)
        np.testing.assert_array_equal(table.weights[9, 3:], before[3:])
        assert (table.weights[9, :3] != before[:3]).all()

    def test_batched_duplicates_accumulate_order_free(self):
        table_a = init_table(np.random.default_rng(8), "f", 6, 2)
        table_b = init_table(np.random.default_rng(8), "f", 6, 2)
        ids = np.array([1, 3, 1])
        grads = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 2.0]])
        sgd_update_rows(table_a, ids, grads, lr=0.1)
        sgd_update_rows(table_b, ids[::-1], grads[::-1], lr=0.1)
        np.testing.assert_array_equal(table_a.weights, table_b.weights)
        # row 1 got the summed gradient
        expected = init_table(np.random.default_rng(8), "f", 6, 2).weights[1] - 0.1 * np.array([1.0, 2.0])
        np.testing.assert_allclose(table_a.weights[1], expected, atol=1e-15)
