"""Ranking metrics and cross-model aggregation.

Average precision uses the step-wise definition (no interpolation) with a
pessimistic, deterministic tie rule: within a score tie, positives are
ranked after negatives. Aggregation reports means with normal-approximation
95% half-widths and mean ranks with tie sharing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .errors import DegenerateLabels

Z_95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class ScoredQuery:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.intp)
        if scores.shape != labels.shape or scores.ndim != 1:
            raise ValueError("scores and labels must be parallel 1-D arrays")
        if len(scores) < 2:
            raise ValueError("a scored query needs at least two samples")
        n_pos = int(labels.sum())
        if n_pos == 0 or n_pos == len(labels):
            raise DegenerateLabels(
                "query needs at least one positive and one negative"
            )
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @property
    def prevalence(self) -> float:
        return float(self.labels.mean())


def _pessimistic_order(q: ScoredQuery) -> np.ndarray:
    """Indices sorted by descending score; positives after negatives in ties."""
    return np.lexsort((q.labels, -q.scores))


def average_precision(q: ScoredQuery) -> float:
    """Step-wise AP over the pessimistically tie-broken ranking."""
    order = _pessimistic_order(q)
    labels = q.labels[order]
    ranks = np.arange(1, len(labels) + 1)
    cum_pos = np.cumsum(labels)
    hit = labels == 1
    precision_at_hits = cum_pos[hit] / ranks[hit]
    return float(precision_at_hits.sum() / labels.sum())


def delta_aucpr(q: ScoredQuery) -> float:
    """AP improvement over a random classifier (whose AP is the prevalence)."""
    return average_precision(q) - q.prevalence


def hitrate_at_percent(q: ScoredQuery, k_percent: float) -> float:
    """Positive fraction among the top max(1, floor(k% of n)) samples."""
    if not 0.0 < k_percent <= 100.0:
        raise ValueError("k_percent must lie in (0, 100]")
    n = len(q.labels)
    m = max(1, int(np.floor(k_percent / 100.0 * n)))
    order = _pessimistic_order(q)
    return float(q.labels[order[:m]].sum() / m)


# ---------------------------------------------------------------------------
# Aggregation


@dataclass
class EvalReport:
    """Per-episode rows plus aggregates recomputable from them.

    ``per_episode`` columns: model, task_id, support_size, repeat, plus one
    column per metric. ``aggregates`` holds mean and 95% half-width per
    (model, support_size, metric); ``mean_ranks`` the tie-shared mean rank
    per (model, support_size, metric).
    """

    per_episode: pd.DataFrame
    aggregates: pd.DataFrame
    mean_ranks: pd.DataFrame

    def to_json_dict(self) -> dict:
        return {
            "per_episode": self.per_episode.to_dict(orient="records"),
            "aggregates": self.aggregates.to_dict(orient="records"),
            "mean_ranks": self.mean_ranks.to_dict(orient="records"),
        }


def _metric_columns(rows: pd.DataFrame) -> list[str]:
    reserved = {"model", "task_id", "support_size", "repeat", "hit_fraction",
                "n_support", "n_query", "prevalence"}
    return [c for c in rows.columns
            if c not in reserved and pd.api.types.is_numeric_dtype(rows[c])]


def aggregate(rows: pd.DataFrame) -> EvalReport:
    """Aggregate per-episode metric rows across tasks and repeats.

    Means come with 1.96 * sd / sqrt(n) half-widths. Mean ranks are computed
    within each (task_id, support_size, repeat) cell across models (rank 1 =
    best, ties share the mean of their positions) and then averaged.
    """
    rows = rows.reset_index(drop=True)
    metric_cols = _metric_columns(rows)

    agg_records = []
    for (model, size), group in rows.groupby(["model", "support_size"],
                                             sort=True):
        for col in metric_cols:
            vals = group[col].to_numpy(dtype=np.float64)
            vals = vals[~np.isnan(vals)]
            if len(vals) == 0:
                continue
            mean = float(vals.mean())
            half = 0.0 if len(vals) < 2 else float(
                Z_95 * vals.std(ddof=1) / np.sqrt(len(vals)))
            agg_records.append({
                "model": model, "support_size": size, "metric": col,
                "mean": mean, "ci95_half_width": half, "n": len(vals),
            })
    aggregates = pd.DataFrame(agg_records)

    rank_records = []
    for col in metric_cols:
        sub = rows[["model", "task_id", "support_size", "repeat", col]].dropna()
        ranked = sub.copy()
        ranked["rank"] = (
            sub.groupby(["task_id", "support_size", "repeat"])[col]
            .transform(lambda v: rankdata(-v.to_numpy(), method="average"))
        )
        means = ranked.groupby(["model", "support_size"])["rank"].mean()
        for (model, size), mean_rank in means.items():
            rank_records.append({
                "model": model, "support_size": size, "metric": col,
                "mean_rank": float(mean_rank),
            })
    mean_ranks = pd.DataFrame(rank_records)
    return EvalReport(per_episode=rows, aggregates=aggregates,
                      mean_ranks=mean_ranks)
