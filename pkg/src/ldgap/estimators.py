"""Recovery procedures: exhaustive and Lloyd K-means, the split/project/link
pipeline, sparse column selection and two-step clustering, the exhaustive
Crit-ordered sparse estimator, and bi-Kmeans.

All tie-breaking is lexicographic (first index wins) and every source of
randomness is an explicit seed, so runs reproduce bit-for-bit.  The noise
level sigma^2 is assumed known wherever splitting needs it; a plug-in
estimate lives in models.estimate_sigma2 for harness use only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateError, ParameterError, ResourceGuardError
from .partitions import Partition, PartitionPair

log = logging.getLogger(__name__)

SINGLE_LINKAGE = "single_linkage"
LLOYD_MULTI = "lloyd_multi"


@dataclass
class EstimatorConfig:
    K: int = 2
    L: Optional[int] = None
    s: Optional[int] = None                 # column budget (sparse)
    split_seed: int = 0
    lowdim_backend: str = SINGLE_LINKAGE    # or LLOYD_MULTI
    restarts: int = 5
    exhaustive_guard: int = 2_000_000
    max_split_retries: int = 10

    def __post_init__(self):
        if self.restarts < 1 or self.exhaustive_guard < 1:
            raise ParameterError("restarts and exhaustive_guard must be positive")
        if self.lowdim_backend not in (SINGLE_LINKAGE, LLOYD_MULTI):
            raise ParameterError(f"unknown backend {self.lowdim_backend!r}")


def _mix64(x: int) -> int:
    """splitmix64 finalizer; the package's one fixed seed mixer."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def derive_seed(seed: int, stream: int) -> int:
    return _mix64((int(seed) & 0xFFFFFFFFFFFFFFFF) + _mix64(stream))


# ---------------------------------------------------------------------------
# partition enumeration (restricted growth strings)
# ---------------------------------------------------------------------------

def _stirling2(n: int, k: int) -> int:
    if k == 0:
        return 1 if n == 0 else 0
    table = [[0] * (k + 1) for _ in range(n + 1)]
    table[0][0] = 1
    for i in range(1, n + 1):
        for j in range(1, min(i, k) + 1):
            table[i][j] = j * table[i - 1][j] + table[i - 1][j - 1]
    return table[n][k]


def count_partitions_at_most(n: int, K: int) -> int:
    return sum(_stirling2(n, j) for j in range(1, min(n, K) + 1))


def _rgs_partitions(n: int, K: int, exactly: bool):
    """All label vectors in restricted-growth-string order with at most
    (or exactly) K labels used."""
    labels = [0] * n

    def rec(i: int, used: int):
        if i == n:
            if not exactly or used == K:
                yield tuple(labels)
            return
        for lab in range(min(used + 1, K)):
            labels[i] = lab
            yield from rec(i + 1, max(used, lab + 1))

    yield from rec(1, 1)


def kmeans_objective(Y: np.ndarray, part: Partition) -> float:
    """<Y Y^T, B^G> = sum_k ||sum_{i in G_k} Y_i||^2 / |G_k| (to maximize)."""
    Y = np.asarray(Y, dtype=float)
    obj = 0.0
    for g in part.groups:
        if g:
            srow = Y[list(g)].sum(axis=0)
            obj += float(srow @ srow) / len(g)
    return obj


def exact_kmeans(Y: np.ndarray, K: int, exhaustive_guard: int = 2_000_000) -> PartitionPair:
    """Global K-means optimum by enumerating all partitions of [n] into at
    most K groups; first maximizer in enumeration order wins ties."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    if K < 1 or n < 1:
        raise ParameterError("need n >= 1 and K >= 1")
    total = count_partitions_at_most(n, K)
    if total > exhaustive_guard:
        raise ResourceGuardError(
            f"{total} partitions exceed the guard {exhaustive_guard}; use lloyd_multi"
        )
    best_obj = -math.inf
    best = None
    for labels in _rgs_partitions(n, K, exactly=False):
        sums = np.zeros((K, Y.shape[1]))
        counts = np.zeros(K, dtype=int)
        for i, lab in enumerate(labels):
            sums[lab] += Y[i]
            counts[lab] += 1
        obj = 0.0
        for kidx in range(K):
            if counts[kidx]:
                obj += float(sums[kidx] @ sums[kidx]) / counts[kidx]
        if obj > best_obj:
            best_obj = obj
            best = labels
    return PartitionPair(rows=Partition.from_labels(np.array(best), K))


# ---------------------------------------------------------------------------
# Lloyd with greedy farthest-point init
# ---------------------------------------------------------------------------

def _lloyd_once(Y: np.ndarray, K: int, centers: np.ndarray, max_iter: int = 200):
    n = Y.shape[0]
    labels = np.zeros(n, dtype=int)
    prev_cost = math.inf
    for _ in range(max_iter):
        d2 = ((Y[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        # empty-cluster repair: hand the farthest point to each empty cluster
        for kidx in range(K):
            if not np.any(new_labels == kidx):
                far = int(np.argmax(d2[np.arange(n), new_labels]))
                new_labels[far] = kidx
                d2[far, :] = 0.0
        centers = np.vstack([Y[new_labels == kidx].mean(axis=0) for kidx in range(K)])
        cost = float(((Y - centers[new_labels]) ** 2).sum())
        assert cost <= prev_cost + 1e-9 * (1.0 + abs(prev_cost)), "Lloyd objective increased"
        if np.array_equal(new_labels, labels) and cost >= prev_cost - 1e-12:
            labels = new_labels
            break
        labels = new_labels
        prev_cost = cost
    return labels, float(((Y - centers[labels]) ** 2).sum())


def _farthest_point_centers(Y: np.ndarray, K: int, rng) -> np.ndarray:
    n = Y.shape[0]
    first = int(rng.integers(n))
    chosen = [first]
    d2 = ((Y - Y[first]) ** 2).sum(axis=1)
    while len(chosen) < K:
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((Y - Y[nxt]) ** 2).sum(axis=1))
    return Y[chosen].copy()


def lloyd_multi(Y: np.ndarray, K: int, restarts: int = 5, seed: int = 0) -> PartitionPair:
    """Best-of-restarts Lloyd iteration; deterministic given the seed, ties
    resolved in favor of the lowest restart index."""
    Y = np.asarray(Y, dtype=float)
    if restarts < 1:
        raise ParameterError("restarts must be >= 1")
    n = Y.shape[0]
    if n < K:
        raise ParameterError("need at least K points")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    best_labels, best_cost = None, math.inf
    for _ in range(restarts):
        centers = _farthest_point_centers(Y, K, rng)
        labels, cost = _lloyd_once(Y, K, centers)
        if cost < best_cost - 1e-15:
            best_labels, best_cost = labels, cost
    return PartitionPair(rows=Partition.from_labels(best_labels, K))


# ---------------------------------------------------------------------------
# spectral projection and single linkage
# ---------------------------------------------------------------------------

def spectral_project(Y1: np.ndarray, Y2: np.ndarray, K: int) -> np.ndarray:
    """Orthogonal projection of the rows of Y2 onto the span of the top-K
    eigenvectors of Y1^T Y1 (identity when p <= K)."""
    Y1 = np.asarray(Y1, dtype=float)
    Y2 = np.asarray(Y2, dtype=float)
    p = Y1.shape[1]
    if Y2.shape[1] != p:
        raise ParameterError("Y1 and Y2 need the same number of columns")
    if p <= K:
        return Y2.copy()
    G = Y1.T @ Y1
    G = (G + G.T) / 2.0
    _, vecs = np.linalg.eigh(G)
    V = vecs[:, -K:]
    gram = V.T @ V
    if np.max(np.abs(gram - np.eye(K))) > 1e-10:
        raise np.linalg.LinAlgError("eigenvectors lost orthonormality")
    return Y2 @ V @ V.T


def single_linkage(points: np.ndarray, K: int) -> Partition:
    """Agglomerate under minimum pairwise distance until K groups remain;
    ties broken by the lowest (group index, group index) pair."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < K:
        raise ParameterError("need at least K points")
    groups = [[i] for i in range(n)]
    diff = points[:, None, :] - points[None, :, :]
    D = np.sqrt((diff ** 2).sum(axis=2))
    np.fill_diagonal(D, np.inf)
    while len(groups) > K:
        flat = int(np.argmin(D))  # row-major: first occurrence = lex smallest pair
        a, b = divmod(flat, D.shape[0])
        if a > b:
            a, b = b, a
        groups[a].extend(groups[b])
        del groups[b]
        merged = np.minimum(D[a], D[b])
        D[a, :] = merged
        D[:, a] = merged
        D[a, a] = np.inf
        D = np.delete(np.delete(D, b, axis=0), b, axis=1)
    return Partition(groups, n=n)


def cluster_project_hc(Y: np.ndarray, K: int, config: EstimatorConfig,
                       seed: Optional[int] = None) -> PartitionPair:
    """Split rows in half, project the second half onto the top-K eigenvectors
    of the first half's Gram matrix, cluster it in low dimension, then assign
    the held-out half to the nearest group mean (in the original space)."""
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    if n < 2 * K:
        raise ParameterError("need n >= 2K for the split pipeline")
    base_seed = config.split_seed if seed is None else seed
    for attempt in range(config.max_split_retries):
        rng = np.random.Generator(np.random.PCG64(derive_seed(base_seed, attempt)))
        half = rng.integers(0, 2, size=n)
        idx1 = np.where(half == 0)[0]
        idx2 = np.where(half == 1)[0]
        if len(idx1) >= K and len(idx2) >= K:
            break
    else:
        raise DegenerateError("could not draw a split with both halves >= K")

    Y1, Y2 = Y[idx1], Y[idx2]
    if p <= max(K, math.log(n)):
        proj2 = Y2
    else:
        proj2 = spectral_project(Y1, Y2, K)
    if config.lowdim_backend == SINGLE_LINKAGE:
        low = single_linkage(proj2, K)
    else:
        low = lloyd_multi(proj2, K, config.restarts, derive_seed(base_seed, 1 << 20)).rows

    centers = []
    for g in low.groups:
        if not g:
            raise DegenerateError("low-dimensional step produced an empty group")
        centers.append(Y2[list(g)].mean(axis=0))
    centers = np.vstack(centers)

    labels = np.empty(n, dtype=int)
    for gi, g in enumerate(low.groups):
        labels[idx2[list(g)]] = gi
    d2 = ((Y1[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels[idx1] = np.argmin(d2, axis=1)
    return PartitionPair(rows=Partition.from_labels(labels, K))


# ---------------------------------------------------------------------------
# sparse clustering
# ---------------------------------------------------------------------------

def select_columns_topnorm(Y: np.ndarray, s: int) -> list[int]:
    """Indices of the s columns with largest squared norm, ties by lower index."""
    Y = np.asarray(Y, dtype=float)
    p = Y.shape[1]
    if not 1 <= s <= p:
        raise ParameterError("need 1 <= s <= p")
    norms = (Y ** 2).sum(axis=0)
    order = sorted(range(p), key=lambda j: (-norms[j], j))
    return sorted(order[:s])


def gaussian_split(Y: np.ndarray, sigma2: float, seed: int):
    """Independent halves Y1 = (Y + E')/sqrt(2), Y2 = (Y - E')/sqrt(2) with
    E' fresh noise of variance sigma^2."""
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    E = rng.normal(0.0, math.sqrt(sigma2), size=Y.shape)
    r = math.sqrt(2.0)
    return (Y + E) / r, (Y - E) / r


def sparse_two_step(Y: np.ndarray, K: int, s: int, config: EstimatorConfig,
                    sigma2: float = 1.0, seed: Optional[int] = None) -> PartitionPair:
    """Gaussian splitting, top-norm column selection on the first half,
    clustering of the second half restricted to the selected columns."""
    Y = np.asarray(Y, dtype=float)
    base_seed = config.split_seed if seed is None else seed
    Y1, Y2 = gaussian_split(Y, sigma2, derive_seed(base_seed, 0xC01))
    cols = select_columns_topnorm(Y1, s)
    sub = Y2[:, cols]
    inner = derive_seed(base_seed, 0xC02)
    if sub.shape[0] >= 2 * K and sub.shape[1] >= 1:
        try:
            return cluster_project_hc(sub, K, config, seed=inner)
        except DegenerateError:
            pass
    return lloyd_multi(sub, K, config.restarts, inner)


def _crit_value(group_sums: np.ndarray, sizes: np.ndarray, cols, K: int) -> float:
    """Crit(B, J) = <Y_J Y_J^T - |J| I, B> from precomputed per-group column
    sums of Y (shape K x p)."""
    sel = group_sums[:, cols]
    return float(((sel ** 2).sum(axis=1) / sizes).sum()) - len(cols) * K


def sparse_exhaustive_it(Y: np.ndarray, K: int, s: int, seed: int = 0,
                         sigma2: float = 1.0,
                         exhaustive_guard: int = 2_000_000) -> PartitionPair:
    """Exhaustive sparse estimator: per candidate K-partition B, select the s
    columns maximizing the squared group-sum norm on the first split half,
    then return a maximal element of the Crit ordering on the second half.

    The ordering need not be transitive on arbitrary data; the first
    undominated candidate (in enumeration order) is returned, falling back to
    the most-wins candidate with a warning if domination cycles occur.
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    count = _stirling2(n, K)
    if count > exhaustive_guard:
        raise ResourceGuardError(f"{count} candidate partitions exceed the guard")
    Y1, Y2 = gaussian_split(Y, sigma2, derive_seed(seed, 0xE01))

    parts = []
    for labels in _rgs_partitions(n, K, exactly=True):
        parts.append(np.array(labels))
    crit_cols, group_sums, sizes = [], [], []
    for labels in parts:
        S = np.zeros((K, p))
        for i, lab in enumerate(labels):
            S[lab] += Y1[i]
        score = (S ** 2).sum(axis=0)
        order = sorted(range(p), key=lambda j: (-score[j], j))
        crit_cols.append(tuple(sorted(order[:s])))
        S2 = np.zeros((K, p))
        for i, lab in enumerate(labels):
            S2[lab] += Y2[i]
        group_sums.append(S2)
        sizes.append(np.bincount(labels, minlength=K).astype(float))

    m = len(parts)
    beaten = [False] * m  # strictly dominated at least once
    wins = [0] * m
    for a in range(m):
        for b in range(a + 1, m):
            union = tuple(sorted(set(crit_cols[a]) | set(crit_cols[b])))
            ca = _crit_value(group_sums[a], sizes[a], list(union), K)
            cb = _crit_value(group_sums[b], sizes[b], list(union), K)
            if ca < cb:
                beaten[a] = True
                wins[b] += 1
            elif cb < ca:
                beaten[b] = True
                wins[a] += 1
            else:
                wins[a] += 1  # ties count for the earlier candidate
    for a in range(m):
        if not beaten[a]:
            return PartitionPair(rows=Partition.from_labels(parts[a], K))
    log.warning("Crit ordering is not transitive on this input; returning the "
                "candidate with the most pairwise wins")
    best = max(range(m), key=lambda a: (wins[a], -a))
    return PartitionPair(rows=Partition.from_labels(parts[best], K))


def omega_min_column_signal(X: np.ndarray, j_star, sigma2: float = 1.0) -> float:
    """omega^2_{J*} = min_{j in J*} ||X_:j||^2 / sigma^2."""
    X = np.asarray(X, dtype=float)
    j_star = list(j_star)
    if not j_star:
        raise ParameterError("J* must be nonempty")
    return float(min((X[:, j] ** 2).sum() for j in j_star)) / float(sigma2)


def homogeneity_ratio(X: np.ndarray, j_star) -> float:
    """eta = max/min of the active-column squared norms."""
    X = np.asarray(X, dtype=float)
    norms = [(X[:, j] ** 2).sum() for j in j_star]
    if not norms or min(norms) == 0.0:
        raise DegenerateError("eta undefined with an all-zero active column")
    return float(max(norms) / min(norms))


def homogeneity_bound_check(X: np.ndarray, j_star, part: Partition,
                            sigma2: float = 1.0):
    """Check omega^2 >= n (K-1) Delta^2 / (2 s K gamma eta); returns
    (holds, slack)."""
    from .models import group_means, separation

    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    omega2 = omega_min_column_signal(X, j_star, sigma2)
    eta = homogeneity_ratio(X, j_star)
    gamma = part.gamma()
    K = part.k
    delta2 = separation(group_means(X, part), sigma2)
    lower = n * (K - 1) * delta2 / (2 * len(list(j_star)) * K * gamma * eta)
    return omega2 >= lower, omega2 - lower


# ---------------------------------------------------------------------------
# bi-Kmeans
# ---------------------------------------------------------------------------

def bikmeans_objective(Y: np.ndarray, rows: Partition, cols: Partition) -> float:
    """Tr[Y^T B_r Y B_c] = sum_{k,l} (block sum)^2 / (|G_k| |H_l|)."""
    Y = np.asarray(Y, dtype=float)
    obj = 0.0
    for g in rows.groups:
        if not g:
            continue
        rsum = Y[list(g)].sum(axis=0)
        for h in cols.groups:
            if not h:
                continue
            blk = rsum[list(h)].sum()
            obj += blk * blk / (len(g) * len(h))
    return float(obj)


def _collapse_cols(Y: np.ndarray, cols: Partition) -> np.ndarray:
    """V with V_:l = (column-group sum)/sqrt(|H_l|): <V V^T, B_r> equals the
    bi-Kmeans trace objective for fixed column partition."""
    Vs = []
    for h in cols.groups:
        if h:
            Vs.append(Y[:, list(h)].sum(axis=1) / math.sqrt(len(h)))
    return np.column_stack(Vs)


def _lloyd_from_labels(V: np.ndarray, K: int, labels: np.ndarray):
    # labels arriving here always occupy all K groups (init repair + Lloyd repair)
    centers = np.vstack([V[labels == kidx].mean(axis=0) for kidx in range(K)])
    return _lloyd_once(V, K, centers)


def bikmeans(Y: np.ndarray, K: int, L: int, mode: str = "exhaustive",
             restarts: int = 5, seed: int = 0,
             exhaustive_guard: int = 2_000_000) -> PartitionPair:
    """Joint row/column K-means.

    mode="exhaustive": exact maximizer of Tr[Y^T B_r Y B_c] over all
    partitions into exactly K row and L column groups (n, p <= 9).
    mode="alternating": seeded alternating Lloyd sweeps on the collapsed
    matrices, objective nondecreasing per sweep, best of `restarts` starts.
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    if mode == "exhaustive":
        if n > 9 or p > 9:
            raise ResourceGuardError("exhaustive bi-Kmeans capped at n, p <= 9")
        n_rows = _stirling2(n, K)
        n_cols = _stirling2(p, L)
        if n_rows * n_cols > exhaustive_guard:
            raise ResourceGuardError("row x column partition count exceeds the guard")
        row_parts = [np.array(lab) for lab in _rgs_partitions(n, K, exactly=True)]
        col_parts = [np.array(lab) for lab in _rgs_partitions(p, L, exactly=True)]
        row_sums = []
        row_sizes = []
        for lab in row_parts:
            S = np.zeros((K, p))
            for i, g in enumerate(lab):
                S[g] += Y[i]
            row_sums.append(S)
            row_sizes.append(np.bincount(lab, minlength=K).astype(float))
        best = (-math.inf, None, None)
        for cj, clab in enumerate(col_parts):
            k_sizes = np.bincount(clab, minlength=L).astype(float)
            C = np.zeros((p, L))
            C[np.arange(p), clab] = 1.0
            for ri, S in enumerate(row_sums):
                blk = S @ C
                obj = float((blk ** 2 / (row_sizes[ri][:, None] * k_sizes[None, :])).sum())
                if obj > best[0]:
                    best = (obj, ri, cj)
        _, ri, cj = best
        return PartitionPair(rows=Partition.from_labels(row_parts[ri], K),
                             cols=Partition.from_labels(col_parts[cj], L))

    if mode != "alternating":
        raise ParameterError("mode must be 'exhaustive' or 'alternating'")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    best_obj, best_rows, best_cols = -math.inf, None, None
    for _ in range(max(1, restarts)):
        rlab = _random_full_labels(n, K, rng)
        clab = _random_full_labels(p, L, rng)
        obj = bikmeans_objective(Y, Partition.from_labels(rlab, K),
                                 Partition.from_labels(clab, L))
        for _sweep in range(100):
            V = _collapse_cols(Y, Partition.from_labels(clab, L))
            rlab, _ = _lloyd_from_labels(V, K, rlab)
            W = _collapse_cols(Y.T, Partition.from_labels(rlab, K))
            clab, _ = _lloyd_from_labels(W, L, clab)
            new_obj = bikmeans_objective(Y, Partition.from_labels(rlab, K),
                                         Partition.from_labels(clab, L))
            assert new_obj >= obj - 1e-9 * (1.0 + abs(obj)), "bi-Kmeans sweep decreased"
            if new_obj <= obj + 1e-12 * (1.0 + abs(obj)):
                obj = max(obj, new_obj)
                break
            obj = new_obj
        if obj > best_obj:
            best_obj, best_rows, best_cols = obj, rlab.copy(), clab.copy()
    return PartitionPair(rows=Partition.from_labels(best_rows, K),
                         cols=Partition.from_labels(best_cols, L))


def _random_full_labels(n: int, K: int, rng) -> np.ndarray:
    """Random label vector with every label occupied (first K slots seeded)."""
    lab = rng.integers(0, K, size=n)
    missing = [k for k in range(K) if not np.any(lab == k)]
    if missing:
        spots = rng.permutation(n)[: len(missing)]
        for k, i in zip(missing, spots):
            lab[i] = k
    return lab
