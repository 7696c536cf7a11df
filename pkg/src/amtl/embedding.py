"""Per-field embedding tables: lookup, masked lookup, sparse SGD updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError, ShapeError, VocabularyError
from .freq import FrequencyStats, alpha as freq_alpha, feature_vector
from .masking import AmtlParams, SelectionResult, apply_mask, amtl_logits, mask_from_selection, select, ste_combine

INIT_SCALE = 0.01


@dataclass
class EmbeddingTable:
    field_name: str
    vocab_size: int
    dim: int
    weights: np.ndarray  # (|F|, D)

    def _check_id(self, value_id: int) -> int:
        value_id = int(value_id)
        if not 0 <= value_id < self.vocab_size:
            raise VocabularyError(
                f"field {self.field_name!r}: id {value_id} outside vocabulary of {self.vocab_size}"
            )
        return value_id


def init_table(
    rng: np.random.Generator, field_name: str, vocab_size: int, dim: int
) -> EmbeddingTable:
    """Uniform init in [-0.01, 0.01]; small rows keep the untrained head near 0.5."""
    W = rng.uniform(-INIT_SCALE, INIT_SCALE, (vocab_size, dim))
    return EmbeddingTable(field_name=field_name, vocab_size=vocab_size, dim=dim, weights=W)


def lookup(table: EmbeddingTable, value_id: int) -> np.ndarray:
    """Row copy for one id; callers never alias parameter storage."""
    return table.weights[table._check_id(value_id)].copy()


def masked_lookup(
    table: EmbeddingTable,
    params: AmtlParams,
    stats: FrequencyStats,
    value_id: int,
) -> tuple[np.ndarray, SelectionResult, dict]:
    """Full selection pipeline for one id: frequency features -> twins logits
    -> straight-through selection -> prefix mask -> masked row.

    The returned embedding is exactly zero past the selected index k.
    """
    if table.dim != params.dim:
        raise ShapeError(
            f"table dim {table.dim} does not match selection layer dim {params.dim}"
        )
    vid = table._check_id(value_id)
    s = feature_vector(stats, vid)
    a = freq_alpha(stats, vid)
    logits, caches = amtl_logits(params, s, a)
    result = select(logits, params.temperature)
    result.alpha = a
    t = ste_combine(result.soft, result.hard)
    m = mask_from_selection(t, params.mask)
    masked = apply_mask(lookup(table, vid), m)
    caches.update({"s": s, "mask": m, "selection": result})
    return masked, result, caches


def sgd_update(table: EmbeddingTable, value_id: int, grad: np.ndarray, lr: float) -> None:
    """row <- row - lr * grad for one id; rejects non-finite gradients."""
    vid = table._check_id(value_id)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != (table.dim,):
        raise ShapeError(f"gradient shape {grad.shape} does not match dim {table.dim}")
    if not np.isfinite(grad).all():
        raise NumericsError(f"non-finite gradient for field {table.field_name!r} id {vid}")
    if not lr > 0.0:
        raise ShapeError(f"learning rate must be positive, got {lr}")
    table.weights[vid] -= lr * grad


def sgd_update_rows(
    table: EmbeddingTable, ids: np.ndarray, grads: np.ndarray, lr: float
) -> None:
    """Batched row update with per-id accumulation.

    Duplicate ids inside one batch are summed before the single subtraction,
    so the result does not depend on their order in the batch.
    """
    ids = np.asarray(ids)
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != (len(ids), table.dim):
        raise ShapeError(f"gradient block {grads.shape} does not match ids x dim")
    if not np.isfinite(grads).all():
        raise NumericsError(f"non-finite gradient batch for field {table.field_name!r}")
    acc = np.zeros_like(table.weights)
    np.add.at(acc, ids, grads)
    table.weights -= lr * acc
