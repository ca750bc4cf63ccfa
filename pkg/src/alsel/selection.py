"""Turning scored candidates into a translation batch under a budget.

Three strategies: uniform random sampling, top-k by priority, and
length-stratified top-k where per-bin budgets follow a reference length
distribution via largest-remainder apportionment. Ties break by
ascending id everywhere, so every strategy is a total order and every
batch is reproducible.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .corpus import MonoPool, ParallelCorpus
from .errors import StateError
from .rng import SplitMix64
from .scorers import ScoredCandidate


@dataclass(frozen=True)
class LengthDistribution:
    """Reference sentence-length histogram over half-open bins.

    ``bin_edges`` has one more entry than ``proportions``; bin j covers
    lengths in [bin_edges[j], bin_edges[j+1]).
    """

    bin_edges: tuple[int, ...]
    proportions: tuple[float, ...]
    source: str = "train"

    def __post_init__(self):
        if len(self.bin_edges) != len(self.proportions) + 1:
            raise ValueError("bin_edges must have exactly one more entry than proportions")
        if len(self.proportions) < 1:
            raise ValueError("at least one bin required")
        for lo, hi in zip(self.bin_edges, self.bin_edges[1:]):
            if hi <= lo:
                raise ValueError("bin_edges must be strictly ascending")
        if any(p < 0 for p in self.proportions):
            raise ValueError("proportions must be non-negative")
        if abs(sum(self.proportions) - 1.0) > 1e-9:
            raise ValueError(f"proportions sum to {sum(self.proportions)!r}, expected 1")

    @property
    def num_bins(self) -> int:
        return len(self.proportions)

    def bin_index(self, length: int) -> int:
        """Bin holding ``length``; lengths beyond the last edge clamp into the last bin."""
        idx = bisect_right(self.bin_edges, length) - 1
        return min(max(idx, 0), self.num_bins - 1)

    def bin_label(self, index: int) -> str:
        return f"[{self.bin_edges[index]},{self.bin_edges[index + 1]})"


@dataclass(frozen=True)
class StrataQuota:
    """Per-bin target counts summing exactly to the budget."""

    quotas: tuple[int, ...]
    total: int

    def __post_init__(self):
        if sum(self.quotas) != self.total:
            raise ValueError(f"quotas sum to {sum(self.quotas)}, expected {self.total}")


@dataclass(frozen=True)
class SelectionBatch:
    """One iteration's chosen ids, in selection-rank order."""

    iteration: int
    strategy: str
    selected_ids: tuple[int, ...]
    seed: int | None = None
    fill_report: tuple[dict, ...] | None = None

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "strategy": self.strategy,
            "seed": self.seed,
            "selected_ids": list(self.selected_ids),
            "fill_report": list(self.fill_report) if self.fill_report is not None else None,
        }


def select_random(
    pool: MonoPool, budget: int, seed: int, iteration: int = 0
) -> SelectionBatch:
    """Uniform sample without replacement from the unconsumed pool."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    available = pool.available()
    if not available:
        raise StateError("no unconsumed pool sentences available")
    ids = [rec.id for rec in available]
    chosen = SplitMix64(seed).sample(ids, min(budget, len(ids)))
    return SelectionBatch(
        iteration=iteration, strategy="random", selected_ids=tuple(chosen), seed=seed
    )


def _rank_key(candidate: ScoredCandidate) -> tuple[float, int]:
    return (-candidate.priority, candidate.id)


def select_top_k(
    candidates: Sequence[ScoredCandidate],
    budget: int,
    iteration: int = 0,
    seed: int | None = None,
    strategy: str | None = None,
) -> SelectionBatch:
    """The budget-many candidates with highest priority.

    Ties break by ascending id; output is ordered by (priority desc,
    id asc), i.e. the prefix of the full sorted ranking.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not candidates:
        raise ValueError("candidates must be non-empty")
    top = heapq.nsmallest(min(budget, len(candidates)), candidates, key=_rank_key)
    return SelectionBatch(
        iteration=iteration,
        strategy=strategy or candidates[0].strategy_tag,
        selected_ids=tuple(c.id for c in top),
        seed=seed,
    )


def build_length_histogram(
    reference: ParallelCorpus, bin_width: int, source: str = "train"
) -> LengthDistribution:
    """Histogram of reference source lengths over bins [1, 1+w), [1+w, 1+2w), ...

    Bins extend just far enough to cover the longest observed sentence.
    """
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")
    if len(reference) == 0:
        raise ValueError("reference corpus must be non-empty")
    lengths = [rec.source_len for rec in reference]
    max_len = max(lengths)
    num_bins = (max_len - 1) // bin_width + 1
    edges = tuple(1 + j * bin_width for j in range(num_bins + 1))
    counts = [0] * num_bins
    for length in lengths:
        counts[(length - 1) // bin_width] += 1
    total = len(lengths)
    proportions = tuple(c / total for c in counts)
    return LengthDistribution(bin_edges=edges, proportions=proportions, source=source)


def _largest_remainder(weights: Sequence[float], total: int) -> list[int]:
    """Hamilton apportionment of ``total`` seats over ``weights``.

    Weights are renormalized in exact rational arithmetic so the floors
    plus remainder seats always sum to ``total``; remainder ties break
    toward the lower index. All-zero weights fall back to uniform.
    """
    fracs = [Fraction(w) for w in weights]
    denom = sum(fracs)
    if denom == 0:
        fracs = [Fraction(1)] * len(weights)
        denom = Fraction(len(weights))
    shares = [total * f / denom for f in fracs]
    base = [math.floor(s) for s in shares]
    leftover = total - sum(base)
    by_remainder = sorted(range(len(weights)), key=lambda i: (base[i] - shares[i], i))
    for i in by_remainder[:leftover]:
        base[i] += 1
    return base


def allocate_strata(dist: LengthDistribution, budget: int) -> StrataQuota:
    """Largest-remainder apportionment of the budget over bin proportions."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    quotas = _largest_remainder(dist.proportions, budget)
    return StrataQuota(quotas=tuple(quotas), total=budget)


def select_stratified(
    candidates: Sequence[ScoredCandidate],
    lengths: Mapping[int, int],
    dist: LengthDistribution,
    budget: int,
    iteration: int = 0,
    seed: int | None = None,
    strategy: str = "srttl",
) -> SelectionBatch:
    """Per-bin top-k selection matching a reference length distribution.

    Each bin contributes its highest-priority candidates up to its
    quota. When a bin runs short, the deficit is re-apportioned over
    the remaining (non-exhausted) bins' original proportions, repeating
    until the budget is filled or every bin is exhausted. The per-bin
    fill report makes any deviation from the target auditable.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not candidates:
        raise ValueError("candidates must be non-empty")
    missing = [c.id for c in candidates if c.id not in lengths]
    if missing:
        raise ValueError(f"candidates missing lengths: {missing[:5]}")

    n_bins = dist.num_bins
    by_bin: list[list[ScoredCandidate]] = [[] for _ in range(n_bins)]
    for cand in candidates:
        by_bin[dist.bin_index(lengths[cand.id])].append(cand)
    for bucket in by_bin:
        bucket.sort(key=_rank_key)

    target = min(budget, len(candidates))
    quotas = _largest_remainder(dist.proportions, target)
    available = [len(b) for b in by_bin]
    cursor = [0] * n_bins
    filled = [0] * n_bins
    selected: list[ScoredCandidate] = []

    pending = list(quotas)
    while True:
        for b in range(n_bins):
            take = min(pending[b], available[b] - cursor[b])
            if take > 0:
                selected.extend(by_bin[b][cursor[b] : cursor[b] + take])
                cursor[b] += take
                filled[b] += take
        deficit = target - len(selected)
        if deficit == 0:
            break
        active = [b for b in range(n_bins) if cursor[b] < available[b]]
        if not active:
            break
        pending = [0] * n_bins
        for b, extra in zip(active, _largest_remainder([dist.proportions[b] for b in active], deficit)):
            pending[b] = extra

    selected.sort(key=_rank_key)
    report = tuple(
        {
            "bin": dist.bin_label(b),
            "lo": dist.bin_edges[b],
            "hi": dist.bin_edges[b + 1],
            "quota": quotas[b],
            "available": available[b],
            "filled": filled[b],
            "deficit": max(0, quotas[b] - filled[b]),
        }
        for b in range(n_bins)
    )
    return SelectionBatch(
        iteration=iteration,
        strategy=strategy,
        selected_ids=tuple(c.id for c in selected),
        seed=seed,
        fill_report=report,
    )
