import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from amtl.errors import ShapeError, VocabularyError
from amtl.freq import (
    FrequencyStats,
    alpha,
    build_stats,
    feature_vector,
    frequency_groups,
    ingest,
    ingest_columns,
)

# Counts {16,8,4,2,1} for ids 0..4; constants frozen from a 50-digit
# evaluation of the standardization formula over log(1+q).
COUNTS_POW2 = np.array([16, 8, 4, 2, 1])
MEAN_LOG_POW2 = 1.6863270606109182
STD_LOG_POW2 = 0.76342534515907402
STDZ_POW2 = np.array(
    [1.5022900283803423, 0.66921738970933185, -0.10071600145891999,
     -0.76983921960351874, -1.3009521970272354]
)
ALPHA_COUNT16 = 0.81791577743966826

count_vectors = st.lists(st.integers(0, 10_000), min_size=1, max_size=50).map(np.array)


class TestIngest:
    def test_counts_and_ranks(self):
        stats = ingest([("f", 0), ("f", 0), ("f", 1)], {"f": 2})["f"]
        np.testing.assert_array_equal(stats.counts, [2, 1])
        np.testing.assert_array_equal(stats.ranks, [0, 1])

    def test_empty_stream_degenerates(self):
        stats = ingest([], {"f": 4})["f"]
        assert stats.counts.sum() == 0
        assert stats.std_logcount == 0.0
        np.testing.assert_array_equal(stats.standardized_logcounts(), np.zeros(4))

    def test_out_of_vocabulary_named_in_error(self):
        with pytest.raises(VocabularyError, match=r"'f'.*7"):
            ingest([("f", 7)], {"f": 3})
        with pytest.raises(VocabularyError):
            ingest([("g", 0)], {"f": 3})

    def test_tie_break_by_ascending_id(self):
        stats = ingest([("f", 2), ("f", 0)], {"f": 3})["f"]
        # counts [1, 0, 1]: ids 0 and 2 tie, id 0 wins the lower rank
        np.testing.assert_array_equal(stats.ranks, [0, 2, 1])

    def test_power_law_rank_zero_holds_max(self):
        rng = np.random.default_rng(11)
        draws = rng.zipf(1.3, size=5000)
        draws = draws[draws <= 60] - 1
        stats = ingest((("f", int(d)) for d in draws), {"f": 60})["f"]
        top = int(np.argwhere(stats.ranks == 0)[0, 0])
        assert stats.counts[top] == stats.counts.max()

    def test_columnar_matches_stream(self):
        rng = np.random.default_rng(5)
        col = rng.integers(0, 9, size=300)
        a = ingest((("f", int(v)) for v in col), {"f": 9})["f"]
        b = ingest_columns({"f": col}, {"f": 9})["f"]
        np.testing.assert_array_equal(a.counts, b.counts)
        np.testing.assert_array_equal(a.ranks, b.ranks)
        assert a.mean_logcount == b.mean_logcount
        assert a.std_logcount == b.std_logcount


class TestStandardization:
    def test_frozen_constants(self):
        stats = build_stats("f", COUNTS_POW2)
        assert abs(stats.mean_logcount - MEAN_LOG_POW2) <= 1e-14
        assert abs(stats.std_logcount - STD_LOG_POW2) <= 1e-14
        np.testing.assert_allclose(stats.standardized_logcounts(), STDZ_POW2, atol=1e-13)

    @given(count_vectors)
    def test_standardized_is_standard(self, counts):
        stats = build_stats("f", counts)
        z = stats.standardized_logcounts()
        if stats.std_logcount == 0.0:
            np.testing.assert_array_equal(z, np.zeros(len(counts)))
        else:
            assert abs(z.mean()) <= 1e-9
            assert abs(z.var() - 1.0) <= 1e-6

    @given(count_vectors)
    def test_ranks_are_bijection_ordered_by_count(self, counts):
        stats = build_stats("f", counts)
        assert sorted(stats.ranks) == list(range(len(counts)))
        by_rank = stats.counts[np.argsort(stats.ranks)]
        assert (np.diff(by_rank) <= 0).all()


class TestFeatureVector:
    def test_equal_counts_zero_first_component(self):
        stats = build_stats("f", np.array([3, 3, 3]))
        for vid in range(3):
            assert feature_vector(stats, vid)[0] == 0.0

    def test_percentile_extremes(self):
        stats = build_stats("f", COUNTS_POW2)
        assert feature_vector(stats, 0)[1] == 0.0  # most frequent
        assert feature_vector(stats, 4)[1] == 1.0  # least frequent

    def test_single_entry_vocab(self):
        stats = build_stats("f", np.array([5]))
        np.testing.assert_array_equal(feature_vector(stats, 0), [0.0, 0.0])

    def test_frozen_hand_computed(self):
        stats = build_stats("f", COUNTS_POW2)
        np.testing.assert_allclose(
            feature_vector(stats, 0), [STDZ_POW2[0], 0.0], atol=1e-13
        )
        np.testing.assert_allclose(
            feature_vector(stats, 4), [STDZ_POW2[4], 1.0], atol=1e-13
        )

    def test_unknown_id(self):
        stats = build_stats("f", COUNTS_POW2)
        with pytest.raises(VocabularyError):
            feature_vector(stats, 5)

    def test_matrix_matches_per_id(self):
        stats = build_stats("f", COUNTS_POW2)
        mat = stats.feature_matrix()
        for vid in range(5):
            np.testing.assert_array_equal(mat[vid], feature_vector(stats, vid))


class TestAlpha:
    def test_mean_count_gives_half(self):
        # standardized value 0 <=> log-count at the mean
        stats = build_stats("f", np.array([7, 7, 7, 7]))
        assert alpha(stats, 2) == 0.5

    def test_equal_counts_all_half(self):
        stats = build_stats("f", np.array([1, 1]))
        assert alpha(stats, 0) == 0.5 and alpha(stats, 1) == 0.5

    def test_frozen_direct_evaluation(self):
        stats = build_stats("f", COUNTS_POW2)
        assert abs(alpha(stats, 0) - ALPHA_COUNT16) <= 1e-14

    @given(count_vectors)
    def test_monotone_in_count(self, counts):
        stats = build_stats("f", counts)
        a = stats.alphas()
        order = np.argsort(counts, kind="stable")
        assert (np.diff(a[order]) >= -1e-15).all()

    def test_alphas_match_scalar(self):
        stats = build_stats("f", COUNTS_POW2)
        np.testing.assert_allclose(
            stats.alphas(), [alpha(stats, i) for i in range(5)], atol=1e-15
        )


class TestFrequencyGroups:
    def test_one_per_group_ordered_ascending(self):
        stats = build_stats("f", np.array([5, 3, 9, 1, 2, 8, 7]))
        groups = frequency_groups(stats, 7)
        assert all(len(g) == 1 for g in groups)
        counts_in_order = [stats.counts[g[0]] for g in groups]
        assert counts_in_order == sorted(counts_in_order)

    def test_two_per_group(self):
        stats = build_stats("f", np.arange(14))
        groups = frequency_groups(stats, 7)
        assert all(len(g) == 2 for g in groups)

    def test_partition_and_means_increase_on_power_law(self):
        rng = np.random.default_rng(3)
        raw = rng.zipf(1.2, size=40_000)
        raw = raw[raw <= 700] - 1
        stats = build_stats("f", np.bincount(raw, minlength=700))
        groups = frequency_groups(stats, 7)
        assert sum(len(g) for g in groups) == 700
        all_ids = np.sort(np.concatenate(groups))
        np.testing.assert_array_equal(all_ids, np.arange(700))
        means = [stats.counts[g].mean() for g in groups]
        assert all(means[i] < means[i + 1] for i in range(6))

    def test_too_small_vocab_rejected(self):
        with pytest.raises(ShapeError):
            frequency_groups(build_stats("f", np.array([1, 2])), 7)

    @given(count_vectors.filter(lambda c: len(c) >= 7))
    def test_group_means_nondecreasing(self, counts):
        stats = build_stats("f", counts)
        groups = frequency_groups(stats, 7)
        means = [stats.counts[g].mean() for g in groups]
        assert all(means[i] <= means[i + 1] + 1e-12 for i in range(6))
