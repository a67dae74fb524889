"""Nonparametric comparison machinery: permutation test for medians and
multiple-comparison adjustment over all method pairs.

The adjustment enumerates exhaustive hypothesis sets (index sets of pairwise
hypotheses that can be true simultaneously, i.e. the within-block pairs of
some partition of the methods), which is exponential in the number of
methods; it is capped at six methods with a Holm fallback beyond that.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, TooManyGroups

MAX_EXACT_GROUPS = 6
DEFAULT_PERMUTATIONS = 4999


@dataclass
class PermTestResult:
    p_value: float
    observed_stat: float  # |median(a) - median(b)|
    n_permutations: int
    seed: int


def permutation_median_test(
    a, b, n_perm: int = DEFAULT_PERMUTATIONS, seed: int = 0
) -> PermTestResult:
    """Two-sided permutation test for a difference in medians.

    Pools both samples, reshuffles them into groups of the original sizes,
    and counts permuted |median difference| at least as large as observed.
    The add-one estimate (1 + count) / (1 + n_perm) keeps p strictly
    positive.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size < 2 or b.size < 2:
        raise InsufficientData("both samples need at least two values")
    if n_perm < 100:
        raise InsufficientData("need at least 100 permutations")

    observed = abs(float(np.median(a)) - float(np.median(b)))
    pooled = np.concatenate([a, b])
    n_a = a.size
    rng = np.random.default_rng(seed)
    count = 0
    # Batched shuffles: one argsort of uniform draws per permutation row.
    batch = 512
    done = 0
    while done < n_perm:
        rows = min(batch, n_perm - done)
        order = np.argsort(rng.random((rows, pooled.size)), axis=1)
        shuffled = pooled[order]
        stat = np.abs(
            np.median(shuffled[:, :n_a], axis=1) - np.median(shuffled[:, n_a:], axis=1)
        )
        count += int(np.sum(stat >= observed))
        done += rows
    p = (1.0 + count) / (1.0 + n_perm)
    return PermTestResult(
        p_value=p, observed_stat=observed, n_permutations=n_perm, seed=seed
    )


@dataclass
class PairwiseMatrix:
    names: tuple
    raw: np.ndarray  # symmetric (k, k), NaN on the diagonal
    adjusted: np.ndarray
    reject: np.ndarray  # boolean, at the given alpha
    alpha: float
    method: str  # "bergmann-hommel" or "holm"


def _partitions(items):
    """All set partitions of a sequence."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for smaller in _partitions(rest):
        for k in range(len(smaller)):
            yield smaller[:k] + [[first] + smaller[k]] + smaller[k + 1 :]
        yield [[first]] + smaller


def exhaustive_pair_sets(k: int):
    """Distinct nonempty sets of pairwise hypotheses that can hold jointly:
    the within-block pairs of each partition of range(k)."""
    seen = set()
    for partition in _partitions(range(k)):
        pairs = frozenset(
            pair
            for block in partition
            for pair in itertools.combinations(sorted(block), 2)
        )
        if pairs and pairs not in seen:
            seen.add(pairs)
            yield pairs


def _holm_adjust(names, raw: np.ndarray) -> np.ndarray:
    pairs = list(itertools.combinations(range(len(names)), 2))
    pvals = np.array([raw[i, j] for i, j in pairs])
    order = np.argsort(pvals, kind="stable")
    m = len(pairs)
    # Step-down: running maximum of (m - rank) * p over ascending p-values.
    running = np.maximum.accumulate(np.minimum((m - np.arange(m)) * pvals[order], 1.0))
    adjusted = np.full_like(raw, np.nan)
    for rank, idx in enumerate(order):
        i, j = pairs[idx]
        adjusted[i, j] = adjusted[j, i] = running[rank]
    return adjusted


def bergmann_hommel_adjust(
    names, raw, alpha: float = 0.05, holm_fallback: bool = False
) -> PairwiseMatrix:
    """Adjust pairwise p-values over k methods.

    The adjusted p-value of a pair is the largest |I| * min(p over I) across
    exhaustive sets I containing that pair (clamped to one); a pair is
    rejected when its adjusted p-value is at most alpha. With more than
    MAX_EXACT_GROUPS methods the exact enumeration is refused unless
    holm_fallback is set, in which case Holm's step-down adjustment is used.
    """
    names = tuple(names)
    k = len(names)
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (k, k):
        raise ValueError(f"expected a {k}x{k} p-value matrix, got {raw.shape}")
    if k < 2:
        raise InsufficientData("need at least two methods to compare")

    if k > MAX_EXACT_GROUPS:
        if not holm_fallback:
            raise TooManyGroups(
                f"exact adjustment capped at {MAX_EXACT_GROUPS} methods; "
                "pass holm_fallback=True"
            )
        adjusted = _holm_adjust(names, raw)
        reject = adjusted <= alpha
        np.fill_diagonal(reject, False)
        return PairwiseMatrix(names, raw, adjusted, reject, alpha, "holm")

    adjusted = np.full((k, k), np.nan)
    pair_list = list(itertools.combinations(range(k), 2))
    sets = list(exhaustive_pair_sets(k))
    for i, j in pair_list:
        best = 0.0
        for pairs in sets:
            if (i, j) not in pairs:
                continue
            min_p = min(raw[u, v] for u, v in pairs)
            best = max(best, len(pairs) * min_p)
        value = min(best, 1.0)
        adjusted[i, j] = adjusted[j, i] = value
    reject = adjusted <= alpha
    np.fill_diagonal(reject, False)
    return PairwiseMatrix(names, raw, adjusted, reject, alpha, "bergmann-hommel")
