"""Enumeration, unranking, and capped uniform sampling of column subsets.

The canonical ordering is colexicographic: subset {c_1 < ... < c_k} has rank
sum_j C(c_j, j) (the combinatorial number system), so rank 0 is {0,...,k-1}
and rank C(K,k)-1 is {K-k,...,K-1}.  Capped sampling draws distinct ranks
uniformly by rejection, which is exact and needs O(cap) expected draws when
the cap is far below C(K,k); the plan lists subsets in rank order so that
downstream averaging has a fixed summation order.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .seeding import child_seed


@dataclass(frozen=True)
class SubsetModel:
    """One size-k index set into the regressor columns."""

    k: int
    members: Tuple[int, ...]

    def __post_init__(self):
        if self.k != len(self.members):
            raise ValueError("k must equal len(members)")
        if any(b <= a for a, b in zip(self.members, self.members[1:])):
            raise ValueError("members must be strictly increasing")
        if self.k >= 1 and self.members[0] < 0:
            raise ValueError("members must be nonnegative")


@dataclass(frozen=True)
class SubsetPlan:
    """The subsets actually used for one size k, possibly capped.

    ``total`` is the exact C(K,k); ``capped`` is True iff total exceeded the
    cap and ``selected`` holds cap distinct uniform draws instead of the full
    enumeration.  Plans for different k under one seed use independent
    streams (see ``seeding``).
    """

    K: int
    k: int
    total: int
    selected: List[SubsetModel]
    capped: bool
    seed: int

    def members_matrix(self) -> np.ndarray:
        """(M, k) int64 matrix of the selected subsets, plan order."""
        return np.array([m.members for m in self.selected], dtype=np.int64).reshape(
            len(self.selected), self.k
        )


def count_combinations(K: int, k: int) -> int:
    """Exact C(K, k) as an arbitrary-precision integer."""
    K, k = int(K), int(k)
    if K < 0 or k < 0 or k > K:
        raise ValueError(f"need 0 <= k <= K, got K={K}, k={k}")
    return math.comb(K, k)


def rank_combination(members) -> int:
    """Colex rank of a strictly increasing index tuple (inverse of unrank)."""
    return sum(math.comb(c, j + 1) for j, c in enumerate(members))


def unrank_combination(K: int, k: int, rank: int) -> SubsetModel:
    """The rank-th size-k subset of {0..K-1} in colexicographic order."""
    K, k, rank = int(K), int(k), int(rank)
    total = count_combinations(K, k)
    if not 0 <= rank < total:
        raise ValueError(f"rank {rank} out of range [0, {total})")
    members = [0] * k
    n = K
    r = rank
    kk = k
    while kk > 0:
        n -= 1
        offset = math.comb(n, kk)
        if r >= offset:
            r -= offset
            kk -= 1
            members[kk] = n
    return SubsetModel(k=k, members=tuple(members))


def sample_subsets(K: int, k: int, cap: int, seed: int) -> SubsetPlan:
    """Full enumeration when C(K,k) <= cap, else cap distinct uniform draws.

    Draws are without replacement via rejection sampling on colex ranks; the
    result is deterministic in ``seed`` and listed in rank order.
    """
    K, k, cap = int(K), int(k), int(cap)
    if not 1 <= k <= K:
        raise ValueError(f"need 1 <= k <= K, got K={K}, k={k}")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    total = count_combinations(K, k)
    if total <= cap:
        selected = [unrank_combination(K, k, r) for r in range(total)]
        return SubsetPlan(K=K, k=k, total=total, selected=selected, capped=False, seed=seed)
    rng = random.Random(child_seed(seed, k))
    ranks = set()
    while len(ranks) < cap:
        ranks.add(rng.randrange(total))
    selected = [unrank_combination(K, k, r) for r in sorted(ranks)]
    return SubsetPlan(K=K, k=k, total=total, selected=selected, capped=True, seed=seed)
