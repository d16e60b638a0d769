"""Identity verification suites behind `ldgap verify`.

Each check is one identity with a pass/fail status and a detail string that
carries the exact values involved.  The fast level enumerates |alpha| <= 4,
the full level |alpha| <= 6; everything else is shared, so the full run is a
strict superset of the fast run.

The whole suite builds fresh cumulant engines so that injected faults
(mutation tests monkeypatching e.g. the Mobius coefficient) are visible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement, product

import numpy as np

from . import cumulants as cm
from .exact import (
    ExactScalar,
    MultiIndex,
    enumerate_pairings,
    enumerate_set_partitions,
    fubini_number,
    mobius_coefficient,
    set_partitions,
)
from .models import BICLUSTERING, CLUSTERING, SPARSE, ModelSpec
from .partitions import (
    Partition,
    check_loss_inequality,
    clustering_error,
    partnership_error_bound,
    partnership_matrix_exact,
    random_balanced_partition,
)

GRID_N, GRID_P = 4, 3
FAST_DEPTH, FULL_DEPTH = 4, 6


@dataclass
class VerifyResult:
    name: str
    ok: bool
    detail: str


def model_combos() -> list[ModelSpec]:
    """The verification grid: the engine depends on (kind, K, L, rho) only, so
    the maximal n=4, p=3 index grid subsumes all smaller shapes."""
    combos = []
    for K in (2, 3):
        combos.append(ModelSpec.clustering(GRID_N, GRID_P, K, lambda2=1))
    for K in (2, 3):
        for rho in (Fraction(1, 2), Fraction(1, 3)):
            combos.append(ModelSpec.sparse(GRID_N, GRID_P, K, rho, lambda2=1))
    for K in (2, 3):
        for L in (2, 3):
            combos.append(ModelSpec.biclustering(GRID_N, GRID_P, K, L, lambda2=1))
    return combos


def iter_alphas(depth: int):
    cells = [(i, j) for i in range(GRID_N) for j in range(GRID_P)]
    for d in range(1, depth + 1):
        for combo in combinations_with_replacement(cells, d):
            yield MultiIndex.from_positions(combo)


def _spec_tag(spec: ModelSpec) -> str:
    tag = f"{spec.model_kind} K={spec.K}"
    if spec.L is not None:
        tag += f" L={spec.L}"
    if spec.rho is not None:
        tag += f" rho={spec.rho}"
    return tag


def _alpha_tag(alpha: MultiIndex) -> str:
    return "{" + ",".join(f"({i},{j})x{c}" for (i, j), c in alpha.cells) + "}"


# ---------------------------------------------------------------------------
# check groups
# ---------------------------------------------------------------------------

def _engine_for(engines: dict, spec: ModelSpec) -> cm.CumulantEngine:
    key = (spec.model_kind, spec.K, spec.L, spec.rho)
    if key not in engines:
        engines[key] = cm.CumulantEngine(spec)
    return engines[key]


def check_oracle_equivalence(depth: int, engines: dict) -> list[VerifyResult]:
    out = []
    for spec in model_combos():
        eng = _engine_for(engines, spec)
        tag = _spec_tag(spec)
        for alpha in iter_alphas(depth):
            b = eng.cumulant_bruteforce(alpha)
            c = eng.cumulant_conditioned(alpha)
            ok = b.coeff == c.coeff and (b.is_zero or b.lambda_power == c.lambda_power)
            out.append(VerifyResult(
                f"oracle-equiv {tag} alpha={_alpha_tag(alpha)}",
                ok, f"brute={b} conditioned={c}"))
    return out


def check_nullity_soundness(depth: int, engines: dict) -> list[VerifyResult]:
    out = []
    for spec in model_combos():
        eng = _engine_for(engines, spec)
        tag = _spec_tag(spec)
        nonvacuous = False
        for alpha in iter_alphas(depth):
            flagged = cm.nullity_predicate(spec.model_kind, alpha)
            if flagged:
                b = eng.cumulant_bruteforce(alpha)
                out.append(VerifyResult(
                    f"nullity-sound {tag} alpha={_alpha_tag(alpha)}",
                    b.is_zero, f"flagged zero, brute={b}"))
            elif not nonvacuous:
                if not eng.cumulant_bruteforce(alpha).is_zero:
                    nonvacuous = True
        out.append(VerifyResult(
            f"nullity-nonvacuous {tag}", nonvacuous,
            "some unflagged alpha has a nonzero cumulant"))
    return out


def check_sketch_bound(depth: int, engines: dict) -> list[VerifyResult]:
    """Clustering |kappa| <= lambda^d (1/K)^(m-1) d^(d-2m+4) d^(d-m-r+1)."""
    out = []
    for K in (2, 3):
        spec = ModelSpec.clustering(GRID_N, GRID_P, K, lambda2=1)
        eng = _engine_for(engines, spec)
        for alpha in iter_alphas(depth):
            kappa = eng.cumulant_bruteforce(alpha)
            d, m, r = alpha.total, alpha.n_rows, alpha.r_cols
            bound = (Fraction(1, K) ** (m - 1)
                     * Fraction(d) ** (d - 2 * m + 4)
                     * Fraction(d) ** (d - m - r + 1))
            ok = abs(kappa.coeff) <= bound
            out.append(VerifyResult(
                f"sketch-bound K={K} alpha={_alpha_tag(alpha)}",
                ok, f"|kappa|={abs(kappa.coeff)} <= {bound}"))
    return out


def check_counting_bound(depth: int) -> list[VerifyResult]:
    out = []
    for d in range(2, depth + 1):
        for m in range(2, d + 1):
            for r in range(1, d + 1):
                if d < max(2 * m - 2, 2 * r):
                    continue
                count, bound = cm.count_admissible(d, m, r, GRID_N, GRID_P)
                out.append(VerifyResult(
                    f"counting-bound d={d} m={m} r={r}",
                    Fraction(count) <= bound, f"count={count} bound={bound}"))
    return out


def check_fubini() -> list[VerifyResult]:
    out = []
    expect = {1: 1, 2: 3, 3: 13}
    for l in range(1, 9):
        f = fubini_number(l)
        from math import factorial
        ok = f <= 3 * factorial(l) * 2 ** l
        if l in expect:
            ok = ok and f == expect[l]
        out.append(VerifyResult(f"fubini l={l}", ok, f"f={f}"))
    return out


def check_known_values() -> list[VerifyResult]:
    out = []

    def add(name, ok, detail):
        out.append(VerifyResult(name, ok, detail))

    add("mobius |pi|=1", mobius_coefficient(1) == 1, "m=1")
    add("mobius |pi|=2", mobius_coefficient(2) == -1, "m=-1")
    add("mobius |pi|=3", mobius_coefficient(3) == 2, "m=2")
    add("bell(3)=5", len(enumerate_set_partitions(3)) == 5, "")
    add("bell(5)=52", len(enumerate_set_partitions(5)) == 52, "")

    one_cell = MultiIndex({(0, 0): 2})
    add("pairings single cell x2", len(enumerate_pairings(one_cell)) == 1, "")
    col4 = MultiIndex({(0, 0): 1, (1, 0): 1, (2, 0): 1, (3, 0): 1})
    add("pairings 4 distinct cells", len(enumerate_pairings(col4)) == 3, "")

    spec2 = ModelSpec.clustering(GRID_N, GRID_P, 2, lambda2=1)
    eng = cm.CumulantEngine(spec2)
    add("Cum(x) = 1/K",
        eng.cumulant_bruteforce(MultiIndex({})).coeff == Fraction(1, 2), "")
    a11 = MultiIndex({(0, 0): 1, (1, 0): 1})
    k = eng.cumulant_bruteforce(a11)
    add("kappa([[1],[1]]) = lambda^2/4 at K=2",
        k.coeff == Fraction(1, 4) and k.lambda_power == 2, f"kappa={k}")
    add("Cum(x, X_00) = 0", eng.cumulant_bruteforce(MultiIndex({(0, 0): 1})).is_zero, "")

    tri = cm.indicator_cumulant(2, [(0, 1), (1, 2), (2, 0)])
    add("indicator triangle K=2 = 1/8", tri == Fraction(1, 8), f"value={tri}")

    add("omega clustering pair = 1/K",
        cm.omega_probability(spec2, [a11]) == Fraction(1, 2), "")
    add("omega clustering two columns = 0",
        cm.omega_probability(spec2, [MultiIndex({(0, 0): 1, (0, 1): 1})]) == 0, "")
    spar = ModelSpec.sparse(GRID_N, GRID_P, 2, Fraction(1, 2), lambda2=1)
    add("omega sparse pair = rho/K",
        cm.omega_probability(spar, [a11]) == Fraction(1, 4), "")

    add("law of total cumulance 3 indicators K=2",
        law_of_total_cumulance_check(2) == Fraction(1, 8), "")
    return out


def law_of_total_cumulance_check(K: int) -> Fraction:
    """Sum over partitions of nested conditional cumulants for the triangle of
    indicators (1{k1=k2}, 1{k2=k3}, 1{k3=k1}), conditioning on k3."""
    pairs = [(0, 1), (1, 2), (2, 0)]

    def cond_moment(subset, z):
        # E[prod_{s in subset} W_s | k3 = z]; labels k1,k2 free, k3 = z
        tot = Fraction(0)
        for k1 in range(K):
            for k2 in range(K):
                lab = (k1, k2, z)
                if all(lab[a] == lab[b] for (a, b) in (pairs[s] for s in subset)):
                    tot += Fraction(1, K ** 2)
        return tot

    def cond_cumulant(subset, z):
        acc = Fraction(0)
        for part in set_partitions(len(subset)):
            val = Fraction(mobius_coefficient(part))
            for block in part:
                val *= cond_moment([subset[e] for e in block], z)
            acc += val
        return acc

    total = Fraction(0)
    for part in set_partitions(3):
        # outer cumulant of the conditional-cumulant variables (functions of k3)
        blocks = [list(b) for b in part]
        acc = Fraction(0)
        for outer in set_partitions(len(blocks)):
            val = Fraction(mobius_coefficient(outer))
            for ob in outer:
                # E over k3 of the product of conditional cumulants in ob
                m = Fraction(0)
                for z in range(K):
                    term = Fraction(1, K)
                    for e in ob:
                        term *= cond_cumulant(blocks[e], z)
                    m += term
                val *= m
            acc += val
        total += acc
    return total


def check_multilinearity() -> list[VerifyResult]:
    """Scaling lambda^2 by c multiplies kappa by c^{|alpha|/2} (exact)."""
    out = []
    spec = ModelSpec.clustering(GRID_N, GRID_P, 3, lambda2=1)
    eng = cm.CumulantEngine(spec)
    c = Fraction(7, 3)
    for cells in ({(0, 0): 1, (1, 0): 1},
                  {(0, 0): 2, (1, 0): 2},
                  {(0, 0): 1, (1, 0): 1, (2, 1): 2}):
        alpha = MultiIndex(cells)
        kappa = eng.cumulant_bruteforce(alpha)
        if kappa.is_zero:
            ok = kappa.evaluate_exact(c) == 0
        else:
            ok = (kappa.evaluate_exact(c)
                  == kappa.evaluate_exact(Fraction(1)) * c ** (alpha.total // 2))
        out.append(VerifyResult(
            f"multilinearity alpha={_alpha_tag(alpha)}", ok, f"kappa={kappa}"))
    return out


def check_relabeling_invariance(rng: np.random.Generator) -> list[VerifyResult]:
    """kappa is invariant under permutations of rows >= 2 and of all columns;
    checked on raw (non-canonicalizing) engines so the symmetry is exercised
    rather than assumed."""
    out = []
    for spec in (ModelSpec.clustering(GRID_N, GRID_P, 2, lambda2=1),
                 ModelSpec.sparse(GRID_N, GRID_P, 2, Fraction(1, 2), lambda2=1),
                 ModelSpec.biclustering(GRID_N, GRID_P, 2, 2, lambda2=1)):
        eng = cm.CumulantEngine(spec, use_canonical=False)
        tag = _spec_tag(spec)
        for _ in range(12):
            d = int(rng.integers(2, 6))
            cells = [(int(rng.integers(0, GRID_N)), int(rng.integers(0, GRID_P)))
                     for _ in range(d)]
            alpha = MultiIndex.from_positions(cells)
            rowperm = {0: 0, 1: 1, 2: 3, 3: 2}
            colperm = dict(zip(range(GRID_P), rng.permutation(GRID_P).tolist()))
            moved = MultiIndex({(rowperm[i], colperm[j]): c for (i, j), c in alpha.cells})
            ka = eng.cumulant_bruteforce(alpha)
            kb = eng.cumulant_bruteforce(moved)
            out.append(VerifyResult(
                f"relabel-invariance {tag} alpha={_alpha_tag(alpha)}",
                ka.coeff == kb.coeff, f"kappa={ka} moved={kb}"))
    return out


def check_canonicalization(rng: np.random.Generator) -> list[VerifyResult]:
    """Canonical-keyed engine agrees with a raw engine (guards the cache)."""
    out = []
    for spec in (ModelSpec.clustering(GRID_N, GRID_P, 3, lambda2=1),
                 ModelSpec.sparse(GRID_N, GRID_P, 2, Fraction(1, 3), lambda2=1),
                 ModelSpec.biclustering(GRID_N, GRID_P, 3, 2, lambda2=1)):
        eng_c = cm.CumulantEngine(spec)
        eng_r = cm.CumulantEngine(spec, use_canonical=False)
        tag = _spec_tag(spec)
        for _ in range(15):
            d = int(rng.integers(1, 6))
            cells = [(int(rng.integers(0, GRID_N)), int(rng.integers(0, GRID_P)))
                     for _ in range(d)]
            alpha = MultiIndex.from_positions(cells)
            a = eng_c.cumulant_bruteforce(alpha)
            b = eng_r.cumulant_bruteforce(alpha)
            out.append(VerifyResult(
                f"canonical-cache {tag} alpha={_alpha_tag(alpha)}",
                a.coeff == b.coeff, f"canonical={a} raw={b}"))
    return out


def check_partnership_and_loss(rng: np.random.Generator, trials: int) -> list[VerifyResult]:
    out = []
    hand_hat = Partition([[0, 2], [1, 3]])
    hand_star = Partition([[0, 1], [2, 3]])
    err = clustering_error(hand_hat, hand_star)
    from .partitions import partnership_distance_sq
    dist = partnership_distance_sq(hand_hat, hand_star)
    out.append(VerifyResult("hand n=4 err=1/2", err == Fraction(1, 2), f"err={err}"))
    out.append(VerifyResult("hand n=4 ||dM||^2=8", dist == 8, f"dist={dist}"))
    holds, lhs, rhs = partnership_error_bound(hand_hat, hand_star)
    out.append(VerifyResult("hand n=4 partnership-error bound", holds and lhs == Fraction(2, 3),
                            f"lhs={lhs} rhs={rhs}"))
    hl, slack = check_loss_inequality(hand_hat, hand_star)
    out.append(VerifyResult("hand n=4 loss-inequality", hl and slack == Fraction(1, 4),
                            f"slack={slack}"))

    for t in range(trials):
        n = int(rng.integers(4, 13))
        k = int(rng.integers(2, min(n, 5)))
        g1 = random_balanced_partition(n, k, rng)
        g2 = random_balanced_partition(n, k, rng)
        ok1, lhs, rhs = partnership_error_bound(g1, g2)
        ok2, slack = check_loss_inequality(g1, g2)
        out.append(VerifyResult(
            f"random-pair t={t} n={n} k={k}", ok1 and ok2,
            f"partnership-error {lhs}<={rhs}; loss slack={slack}"))

    # exact projector identities on a few random partitions
    for t in range(5):
        n = int(rng.integers(3, 10))
        k = int(rng.integers(2, min(n, 5)))
        part = random_balanced_partition(n, k, rng)
        B = partnership_matrix_exact(part)
        sq = [[sum(B[i][t2] * B[t2][j] for t2 in range(n)) for j in range(n)]
              for i in range(n)]
        ok = sq == B and sum(B[i][i] for i in range(n)) == k \
            and all(sum(row) == 1 for row in B)
        out.append(VerifyResult(f"partnership-projector t={t} n={n} k={k}", ok, ""))
    return out


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def run_verify(level: str = "fast") -> list[VerifyResult]:
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    depth = FAST_DEPTH if level == "fast" else FULL_DEPTH
    rng = np.random.Generator(np.random.PCG64(20240704))
    results: list[VerifyResult] = []
    results += check_known_values()
    results += check_fubini()
    results += check_multilinearity()
    engines: dict = {}
    results += check_oracle_equivalence(depth, engines)
    results += check_nullity_soundness(depth, engines)
    results += check_sketch_bound(depth, engines)
    results += check_counting_bound(min(depth, 6))
    results += check_relabeling_invariance(rng)
    results += check_canonicalization(rng)
    results += check_partnership_and_loss(rng, trials=200 if level == "fast" else 1000)
    return results


def render_report(results: list[VerifyResult], stream) -> int:
    failures = [r for r in results if not r.ok]
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        detail = f" -- {r.detail}" if r.detail else ""
        stream.write(f"{status} {r.name}{detail}\n")
    stream.write(f"# checked {len(results)} identities, {len(failures)} failed\n")
    if failures:
        stream.write("# failing identities (serialized):\n")
        stream.write(json.dumps(
            [dict(name=f.name, detail=f.detail) for f in failures], indent=2))
        stream.write("\n")
    return 0 if not failures else 1
