"""Partitions of [n], partnership matrices, and clustering error metrics.

err(G_hat, G_star) is the permutation-minimized average misclassification
proportion (1/2n) min_pi sum_k |G*_k symdiff Ghat_pi(k)|, computed exactly as
1 - (maximum total overlap)/n with integer arithmetic.  Empty groups are legal
members of a partition (estimators may return fewer than K occupied groups and
the symmetric-difference formula stays well-defined); balancedness is only
defined when every group is occupied.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations
from typing import Optional

import numpy as np

from .errors import DegenerateError, ParameterError

EXHAUSTIVE_PERMUTATION_LIMIT = 8


class Partition:
    """A partition of {0, ..., n-1} into ordered groups (possibly empty)."""

    __slots__ = ("groups", "n")

    def __init__(self, groups, n: Optional[int] = None):
        gs = tuple(tuple(sorted(int(i) for i in g)) for g in groups)
        seen = set()
        for g in gs:
            for i in g:
                if i in seen:
                    raise ParameterError(f"element {i} appears in two groups")
                seen.add(i)
        size = len(seen)
        if n is None:
            n = size
        if size != n or (seen and (min(seen) < 0 or max(seen) >= n)):
            raise ParameterError("groups must cover {0,...,n-1} exactly")
        self.groups = gs
        self.n = n

    @staticmethod
    def from_labels(labels, k: Optional[int] = None) -> "Partition":
        labels = np.asarray(labels, dtype=int)
        if k is None:
            k = int(labels.max()) + 1 if len(labels) else 0
        groups = [[] for _ in range(k)]
        for i, lab in enumerate(labels):
            groups[int(lab)].append(i)
        return Partition(groups, n=len(labels))

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def k_nonempty(self) -> int:
        return sum(1 for g in self.groups if g)

    def labels(self) -> np.ndarray:
        out = np.empty(self.n, dtype=int)
        for gi, g in enumerate(self.groups):
            for i in g:
                out[i] = gi
        return out

    def sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    def gamma(self) -> float:
        """Balancedness ratio max|G_k| / min|G_k|; undefined with empty groups."""
        sizes = self.sizes()
        if not sizes or min(sizes) == 0:
            raise DegenerateError("gamma undefined for partitions with empty groups")
        return max(sizes) / min(sizes)

    def drop_empty(self) -> "Partition":
        return Partition([g for g in self.groups if g], n=self.n)

    def __eq__(self, other):
        return (isinstance(other, Partition)
                and sorted(g for g in self.groups if g) == sorted(g for g in other.groups if g))

    def __hash__(self):
        return hash(tuple(sorted(g for g in self.groups if g)))

    def __repr__(self):
        return f"Partition({list(self.groups)})"


@dataclass(frozen=True)
class PartitionPair:
    rows: Partition
    cols: Optional[Partition] = None


def partnership_matrices(part: Partition):
    """(M, B): M_ij = 1{i ~ j} with unit diagonal, B the block-normalized
    projector with 1/|G_k| on group k's block.  trace(B) equals the number of
    occupied groups; B @ 1 = 1 and B @ B = B."""
    n = part.n
    M = np.zeros((n, n), dtype=np.int64)
    B = np.zeros((n, n), dtype=float)
    for g in part.groups:
        if not g:
            continue
        idx = np.array(g, dtype=int)
        M[np.ix_(idx, idx)] = 1
        B[np.ix_(idx, idx)] = 1.0 / len(g)
    return M, B


def partnership_matrix_exact(part: Partition):
    """B as a Fraction matrix (list of lists) for exact projector checks."""
    n = part.n
    B = [[Fraction(0)] * n for _ in range(n)]
    for g in part.groups:
        if not g:
            continue
        w = Fraction(1, len(g))
        for i in g:
            for j in g:
                B[i][j] = w
    return B


def _overlap_matrix(g_hat: Partition, g_star: Partition) -> np.ndarray:
    k = max(g_hat.k, g_star.k)
    O = np.zeros((k, k), dtype=np.int64)
    star_sets = [set(g) for g in g_star.groups]
    for a, g in enumerate(g_hat.groups):
        gs = set(g)
        for b, s in enumerate(star_sets):
            O[a, b] = len(gs & s)
    return O


def best_overlap(g_hat: Partition, g_star: Partition) -> int:
    """Maximum total overlap over group matchings.

    Exhaustive over permutations for k <= 8, optimal assignment beyond."""
    if g_hat.n != g_star.n:
        raise ParameterError("partitions must cover the same ground set")
    O = _overlap_matrix(g_hat, g_star)
    k = O.shape[0]
    if k <= EXHAUSTIVE_PERMUTATION_LIMIT:
        best = 0
        rng = range(k)
        for perm in permutations(rng):
            tot = sum(O[perm[b], b] for b in rng)
            if tot > best:
                best = tot
        return int(best)
    from scipy.optimize import linear_sum_assignment

    r, c = linear_sum_assignment(-O)
    return int(O[r, c].sum())


def clustering_error(g_hat: Partition, g_star: Partition) -> Fraction:
    """Permutation-minimized misclassification proportion, exact rational."""
    return 1 - Fraction(best_overlap(g_hat, g_star), g_star.n)


def partnership_distance_sq(g_hat: Partition, g_star: Partition) -> int:
    """||M^Ghat - M^Gstar||_F^2 (integer: number of disagreeing cells)."""
    M1, _ = partnership_matrices(g_hat)
    M2, _ = partnership_matrices(g_star)
    return int(np.sum((M1 - M2) ** 2))


def partnership_error_bound(g_hat: Partition, g_star: Partition):
    """Check ||M - M*||_F^2 / (n(n-1)) <= 2 err, exactly. Returns (holds, lhs, rhs)."""
    n = g_star.n
    lhs = Fraction(partnership_distance_sq(g_hat, g_star), n * (n - 1))
    rhs = 2 * clustering_error(g_hat, g_star)
    return lhs <= rhs, lhs, rhs


def check_loss_inequality(g: Partition, g_star: Partition):
    """(1 - err)^2 <= gamma^2 - K ||M - M*||_F^2 / (2 n^2) for gamma-balanced
    pairs, with gamma the max of the two ratios.  Returns (holds, slack)."""
    gamma = Fraction(max(g.sizes())) / min(s for s in g.sizes()) if min(g.sizes()) else None
    gamma_star = Fraction(max(g_star.sizes())) / min(s for s in g_star.sizes()) \
        if min(g_star.sizes()) else None
    if gamma is None or gamma_star is None:
        raise DegenerateError("loss inequality needs fully occupied partitions")
    gamma = max(gamma, gamma_star)
    n = g_star.n
    K = max(g.k, g_star.k)
    err = clustering_error(g, g_star)
    lhs = (1 - err) ** 2
    rhs = gamma ** 2 - Fraction(K * partnership_distance_sq(g, g_star), 2 * n * n)
    return lhs <= rhs, rhs - lhs


def random_balanced_partition(n: int, k: int, rng) -> Partition:
    """Uniform partition with sizes as equal as possible (for randomized checks)."""
    perm = rng.permutation(n)
    base, extra = divmod(n, k)
    groups, at = [], 0
    for g in range(k):
        size = base + (1 if g < extra else 0)
        groups.append(perm[at:at + size].tolist())
        at += size
    return Partition(groups, n=n)
