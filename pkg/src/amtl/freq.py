"""Per-field frequency statistics over interaction logs.

Counts how often each feature value appears, ranks values by frequency,
and standardizes log-counts; the standardized log-count drives the
high/low-frequency branch weight and, together with the rank percentile,
forms the 2-feature input of the selection layer. A built snapshot is
frozen for the whole training run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ShapeError, VocabularyError
from .ops import sigmoid

FEATURE_DIM = 2  # standardized log-count, rank percentile


@dataclass(frozen=True)
class FrequencyStats:
    """Frozen frequency snapshot for one feature field.

    ranks are dense over the whole vocabulary: 0 = most frequent, ties
    broken by ascending id. Standardization constants are computed over
    log(1+count) of every distinct vocabulary entry; a degenerate spread
    (all counts equal, or a single-entry vocabulary) stores std 0 and the
    standardized value is defined as exactly 0 there.
    """

    field_name: str
    vocab_size: int
    counts: np.ndarray  # (|F|,) int64
    ranks: np.ndarray  # (|F|,) int64
    mean_logcount: float
    std_logcount: float

    def _check_id(self, value_id: int) -> int:
        value_id = int(value_id)
        if not 0 <= value_id < self.vocab_size:
            raise VocabularyError(
                f"field {self.field_name!r}: id {value_id} outside vocabulary of {self.vocab_size}"
            )
        return value_id

    def standardized_logcounts(self) -> np.ndarray:
        logc = np.log1p(self.counts.astype(np.float64))
        if self.std_logcount == 0.0:
            return np.zeros(self.vocab_size)
        return (logc - self.mean_logcount) / self.std_logcount

    def percentiles(self) -> np.ndarray:
        if self.vocab_size == 1:
            return np.zeros(1)
        return self.ranks.astype(np.float64) / (self.vocab_size - 1)

    def feature_matrix(self) -> np.ndarray:
        """(|F|, 2) matrix of selection-layer inputs for every id."""
        return np.column_stack([self.standardized_logcounts(), self.percentiles()])

    def alphas(self) -> np.ndarray:
        """(|F|,) high-frequency branch weights, sigmoid of standardized log-count."""
        return sigmoid(self.standardized_logcounts())


def ingest(
    events: Iterable[tuple[str, int]], vocab_sizes: Mapping[str, int]
) -> dict[str, FrequencyStats]:
    """Count (field, value-id) events into one FrequencyStats per declared field.

    Every declared field gets a snapshot even if no event mentions it;
    an id at or above its field's declared vocabulary size is an error.
    """
    counts = {f: np.zeros(int(n), dtype=np.int64) for f, n in vocab_sizes.items()}
    for field, value_id in events:
        if field not in counts:
            raise VocabularyError(f"undeclared field {field!r}")
        arr = counts[field]
        vid = int(value_id)
        if not 0 <= vid < arr.size:
            raise VocabularyError(
                f"field {field!r}: id {vid} outside vocabulary of {arr.size}"
            )
        arr[vid] += 1
    return {field: build_stats(field, arr) for field, arr in counts.items()}


def build_stats(field_name: str, counts: np.ndarray) -> FrequencyStats:
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 1 or counts.size == 0:
        raise ShapeError("counts must be a non-empty 1-D array")
    if (counts < 0).any():
        raise ShapeError("counts must be nonnegative")
    n = counts.size
    # rank 0 = most frequent; ties broken by ascending id
    order = np.lexsort((np.arange(n), -counts))
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n)
    logc = np.log1p(counts.astype(np.float64))
    mean = float(logc.mean())
    # population std; all-equal counts are pinned to exactly 0 (mean rounding
    # otherwise leaves a denormal spread and garbage standardized values)
    std = 0.0 if (counts == counts[0]).all() else float(logc.std())
    return FrequencyStats(
        field_name=field_name,
        vocab_size=n,
        counts=counts,
        ranks=ranks,
        mean_logcount=mean,
        std_logcount=std,
    )


def feature_vector(stats: FrequencyStats, value_id: int) -> np.ndarray:
    """[standardized log(1+count), rank percentile] for one id."""
    vid = stats._check_id(value_id)
    if stats.std_logcount == 0.0:
        stdz = 0.0
    else:
        stdz = (np.log1p(float(stats.counts[vid])) - stats.mean_logcount) / stats.std_logcount
    if stats.vocab_size == 1:
        pct = 0.0
    else:
        pct = stats.ranks[vid] / (stats.vocab_size - 1)
    return np.array([stdz, pct])


def alpha(stats: FrequencyStats, value_id: int) -> float:
    """High-frequency branch weight in (0,1); exactly 0.5 under a degenerate spread."""
    return float(sigmoid(feature_vector(stats, value_id)[0]))


def frequency_groups(stats: FrequencyStats, n_groups: int = 7) -> list[np.ndarray]:
    """Partition ids by rank into contiguous near-equal groups, lowest frequency first.

    Group 0 holds the least frequent ids; sizes differ by at most one.
    """
    n = stats.vocab_size
    if n < n_groups:
        raise ShapeError(f"vocabulary of {n} cannot form {n_groups} groups")
    if n_groups < 1:
        raise ShapeError("need at least one group")
    # position 0 = least frequent
    ids_by_ascending_freq = np.argsort(stats.ranks)[::-1]
    bounds = [g * n // n_groups for g in range(n_groups + 1)]
    return [
        np.array(ids_by_ascending_freq[bounds[g] : bounds[g + 1]], dtype=np.int64)
        for g in range(n_groups)
    ]


def ingest_columns(
    ids: Mapping[str, np.ndarray], vocab_sizes: Mapping[str, int]
) -> dict[str, FrequencyStats]:
    """Column-oriented ingest; same result as the event-stream path, but vectorized."""
    out = {}
    for field, n in vocab_sizes.items():
        column = np.asarray(ids.get(field, np.empty(0, dtype=np.int64)), dtype=np.int64)
        if column.size and (column.min() < 0 or column.max() >= n):
            bad = column[(column < 0) | (column >= n)][0]
            raise VocabularyError(
                f"field {field!r}: id {int(bad)} outside vocabulary of {n}"
            )
        out[field] = build_stats(field, np.bincount(column, minlength=int(n)))
    return out
