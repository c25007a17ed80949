"""Ranking-quality metrics and latency summary statistics.

Binary relevance throughout. A user with an empty relevant set scores 0 on
all three metrics by convention (callers exclude such users from averages
and report the count). Percentiles use the nearest-rank rule so reports are
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Set

import numpy as np


def precision_at_k(ranking: Sequence, relevant: Set, k: int) -> float:
    """|top-k intersect relevant| / k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    top = ranking[:k]
    if len(set(top)) != len(top):
        raise ValueError("ranking contains duplicate items")
    if not relevant:
        return 0.0
    return sum(1 for item in top if item in relevant) / k


def recall_at_k(ranking: Sequence, relevant: Set, k: int) -> float:
    """|top-k intersect relevant| / |relevant|, 0 when relevant is empty."""
    if k < 1:
        raise ValueError("k must be >= 1")
    top = ranking[:k]
    if len(set(top)) != len(top):
        raise ValueError("ranking contains duplicate items")
    if not relevant:
        return 0.0
    return sum(1 for item in top if item in relevant) / len(relevant)


def ndcg_at_k(ranking: Sequence, relevant: Set, k: int) -> float:
    """Binary NDCG with the log2(i + 1) discount and truncated ideal DCG."""
    if k < 1:
        raise ValueError("k must be >= 1")
    top = ranking[:k]
    if len(set(top)) != len(top):
        raise ValueError("ranking contains duplicate items")
    if not relevant:
        return 0.0
    dcg = sum(
        1.0 / math.log2(i + 2) for i, item in enumerate(top) if item in relevant
    )
    ideal = min(k, len(relevant))
    idcg = sum(1.0 / math.log2(i + 2) for i in range(ideal))
    return dcg / idcg


@dataclass
class LatencyStats:
    count: int
    mean_ms: float
    std_ms: float  # sample std (n - 1)
    p50_ms: float
    p99_ms: float
    min_ms: float
    max_ms: float


def _nearest_rank(sorted_samples: np.ndarray, pct: float) -> float:
    rank = math.ceil(pct / 100.0 * sorted_samples.size)
    return float(sorted_samples[max(rank, 1) - 1])


def latency_stats(samples_ms: Sequence[float]) -> LatencyStats:
    samples = np.asarray(samples_ms, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("latency_stats requires at least one sample")
    ordered = np.sort(samples)
    std = float(samples.std(ddof=1)) if samples.size >= 2 else 0.0
    return LatencyStats(
        count=int(samples.size),
        mean_ms=float(samples.mean()),
        std_ms=std,
        p50_ms=_nearest_rank(ordered, 50.0),
        p99_ms=_nearest_rank(ordered, 99.0),
        min_ms=float(ordered[0]),
        max_ms=float(ordered[-1]),
    )
