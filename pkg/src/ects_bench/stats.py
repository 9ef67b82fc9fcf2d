"""Statistical comparison layer: mean ranks, bootstrap confidence intervals,
the Wilcoxon signed-rank test with Holm correction, and pairwise win/tie/loss
comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

EXACT_WILCOXON_MAX_N = 12


@dataclass(frozen=True)
class RankRow:
    method: str
    mean_rank: float
    ci_low: float
    ci_high: float


def _rank_ascending(values: Sequence[float]) -> List[float]:
    """Ranks starting at 1, ties receive the average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        for idx in order[i : j + 1]:
            ranks[idx] = avg
        i = j + 1
    return ranks


def mean_ranks(costs: Dict[str, Dict[str, float]], methods: Sequence[str]) -> Dict[str, float]:
    """Per-method mean rank across datasets; costs[dataset][method], lower is
    better (rank 1)."""
    out = {m: 0.0 for m in methods}
    n = len(costs)
    if n == 0:
        raise ValueError("no datasets")
    for dataset, row in costs.items():
        missing = [m for m in methods if m not in row]
        if missing:
            raise ValueError(f"missing cost for {missing[0]!r} on dataset {dataset!r}")
        ranks = _rank_ascending([row[m] for m in methods])
        for m, r in zip(methods, ranks):
            out[m] += r / n
    return out


def per_dataset_ranks(costs: Dict[str, Dict[str, float]], methods: Sequence[str]) -> Dict[str, List[float]]:
    """Rank vectors per method across datasets, for bootstrap CIs on the mean."""
    out: Dict[str, List[float]] = {m: [] for m in methods}
    for dataset in sorted(costs):
        row = costs[dataset]
        ranks = _rank_ascending([row[m] for m in methods])
        for m, r in zip(methods, ranks):
            out[m].append(r)
    return out


def bootstrap_mean_ci(
    values: Sequence[float], level: float = 0.9, resamples: int = 10000, seed: int = 0
) -> Tuple[float, float]:
    """Percentile interval of resampled means; deterministic given the seed."""
    if not values:
        raise ValueError("empty value list")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    arr = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(arr), size=(resamples, len(arr)))
    means = arr[idx].mean(axis=1)
    lo = float(np.quantile(means, (1.0 - level) / 2.0))
    hi = float(np.quantile(means, (1.0 + level) / 2.0))
    return lo, hi


def _signed_ranks(diffs: Sequence[float]) -> Tuple[List[float], List[int]]:
    nonzero = [d for d in diffs if d != 0.0]
    ranks = _rank_ascending([abs(d) for d in nonzero])
    signs = [1 if d > 0 else -1 for d in nonzero]
    return ranks, signs


def wilcoxon_signed_rank(diffs: Sequence[float], alternative: str = "two-sided") -> Tuple[float, float]:
    """Wilcoxon signed-rank: returns (W, p).

    W is the smaller of the positive/negative rank sums. Zero differences are
    dropped. Exact p by full sign enumeration for n <= 12, otherwise a normal
    approximation with tie and continuity corrections. Two-sided p is
    P(min(S+, S-) <= W) under random signs; "one-sided" is the directional
    value in favor of the observed effect, P(S+ <= W).
    """
    if alternative not in ("two-sided", "one-sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    ranks, signs = _signed_ranks(diffs)
    n = len(ranks)
    if n == 0:
        return 0.0, 1.0
    w_pos = sum(r for r, s in zip(ranks, signs) if s > 0)
    total = sum(ranks)
    w_neg = total - w_pos
    w = min(w_pos, w_neg)
    if n <= EXACT_WILCOXON_MAX_N:
        count = 0
        for mask in range(1 << n):
            s_pos = sum(ranks[i] for i in range(n) if mask >> i & 1)
            if alternative == "two-sided":
                if min(s_pos, total - s_pos) <= w + 1e-12:
                    count += 1
            else:
                if s_pos <= w + 1e-12:
                    count += 1
        return w, count / (1 << n)
    mean = total / 2.0
    # Tie correction over groups of equal absolute differences.
    tie_term = 0.0
    seen: Dict[float, int] = {}
    for r in ranks:
        seen[r] = seen.get(r, 0) + 1
    for r, cnt in seen.items():
        if cnt > 1:
            tie_term += cnt**3 - cnt
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0
    if var <= 0:
        return w, 1.0
    z = (w - mean + 0.5) / math.sqrt(var)
    p = 0.5 * math.erfc(-z / math.sqrt(2.0))
    if alternative == "two-sided":
        p = min(1.0, 2.0 * p)
    return w, min(1.0, p)


def holm_adjust(p_values: Sequence[float]) -> List[float]:
    """Holm step-down adjustment, returned in original order, clipped at 1."""
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    adjusted = [0.0] * m
    running = 0.0
    for pos, i in enumerate(order):
        running = max(running, (m - pos) * p_values[i])
        adjusted[i] = min(1.0, running)
    return adjusted


def pairwise_comparison(
    costs_a: Sequence[float], costs_b: Sequence[float]
) -> Tuple[int, int, int, float]:
    """(wins, ties, losses, p): wins counts datasets where a is cheaper."""
    if len(costs_a) != len(costs_b):
        raise ValueError(f"misaligned lists: {len(costs_a)} vs {len(costs_b)}")
    wins = sum(1 for a, b in zip(costs_a, costs_b) if a < b)
    ties = sum(1 for a, b in zip(costs_a, costs_b) if a == b)
    losses = len(costs_a) - wins - ties
    diffs = [a - b for a, b in zip(costs_a, costs_b)]
    _, p = wilcoxon_signed_rank(diffs)
    return wins, ties, losses, p
