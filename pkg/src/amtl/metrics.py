"""Evaluation: ROC AUC, frequency-group dimension profiles, comparison tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ShapeError
from .freq import FrequencyStats, frequency_groups
from .model import ADAPTIVE_POLICIES, CtrModel, field_dims, predict


def auc(labels, scores) -> float:
    """Probability that a random positive outranks a random negative.

    Rank-sum (Mann-Whitney) computation with average ranks for ties, so tied
    positive/negative pairs count half. O(n log n).
    """
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ShapeError("labels and scores must be matching 1-D arrays")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != labels.size:
        raise ShapeError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise ShapeError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(labels.size)
    sorted_scores = scores[order]
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass
class GroupProfile:
    group: int
    mean_count: float
    mean_dim: float
    size: int


def dim_profile(model: CtrModel, field_name: str, n_groups: int = 7) -> list[GroupProfile]:
    """Mean selected dimension per frequency group, lowest-frequency group first."""
    cfg = next((f for f in model.config.fields if f.name == field_name), None)
    if cfg is None:
        raise ShapeError(f"unknown field {field_name!r}")
    if cfg.policy not in ADAPTIVE_POLICIES:
        raise ShapeError(
            f"field {field_name!r} has policy {cfg.policy!r}; a dimension profile "
            "needs an adaptive selection policy"
        )
    if model.stats is None:
        raise ShapeError("attach frequency stats before profiling")
    stats = model.stats[field_name]
    dims = field_dims(model, field_name)
    out = []
    for g, ids in enumerate(frequency_groups(stats, n_groups)):
        out.append(
            GroupProfile(
                group=g,
                mean_count=float(stats.counts[ids].mean()),
                mean_dim=float(dims[ids].mean()),
                size=len(ids),
            )
        )
    return out


@dataclass
class CompareRow:
    policy: str
    auc: float
    avg_dim: float
    memory_ratio: float
    sec_per_epoch: float | None  # None when no timing log is available


def model_avg_dim(model: CtrModel) -> tuple[float, float]:
    """(avg kept dimension, ratio) pooled over every field's vocabulary."""
    kept, full = 0.0, 0.0
    for f in model.config.fields:
        dims = field_dims(model, f.name)
        kept += float(dims.sum())
        full += float(f.dim * f.vocab_size)
    return kept / sum(f.vocab_size for f in model.config.fields), kept / full


def compare(
    models: list[CtrModel],
    test_set: Dataset,
    sec_per_epoch: list[float | None] | None = None,
) -> list[CompareRow]:
    """One row per model, evaluated on the same test split."""
    rows = []
    for i, model in enumerate(models):
        scores = predict(model, test_set)
        avg, ratio = model_avg_dim(model)
        if sec_per_epoch is not None:
            sec = sec_per_epoch[i]
        elif model.epoch_log:
            sec = float(np.mean([e.seconds for e in model.epoch_log]))
        else:
            sec = None
        policies = sorted({f.policy for f in model.config.fields})
        rows.append(
            CompareRow(
                policy="+".join(policies),
                auc=auc(test_set.labels, scores),
                avg_dim=avg,
                memory_ratio=ratio,
                sec_per_epoch=sec,
            )
        )
    return rows


def write_compare_tsv(rows: list[CompareRow], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("policy\tauc\tavg_dim\tratio\tsec_per_epoch\n")
        for r in rows:
            sec = "" if r.sec_per_epoch is None else f"{r.sec_per_epoch:.3f}"
            fh.write(
                f"{r.policy}\t{r.auc:.6f}\t{r.avg_dim:.4f}\t{r.memory_ratio:.2%}\t{sec}\n"
            )


def write_profile_csv(profiles: list[GroupProfile], path) -> None:
    """Plot-ready rows: group index, mean count, mean selected dimension, size."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("group,mean_count,mean_dim,size\n")
        for p in profiles:
            fh.write(f"{p.group},{p.mean_count:.4f},{p.mean_dim:.4f},{p.size}\n")
