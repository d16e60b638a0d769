"""Exact joint cumulants of (x, X_alpha) under the three priors, by two
independent routes, plus nullity predicates and counting bounds.

Route 1 (brute force): Mobius inversion over the partition lattice of the
positions of alpha together with x,

    Cum = sum_pi m(pi) prod_{R in pi} E[ prod R ],

with every mixed moment evaluated by exact latent enumeration over the touched
rows/columns and the Gaussian moment E[nu^m] = lambda^m (m-1)!!.

Route 2 (conditioned): the decomposition

    kappa_{x,alpha} = lambda^{|alpha|} sum_{pairings} Cum(x, W_1, ..., W_l),

where W_s = delta(Z)^{beta_s} 1{Omega_{beta_s}} are the conditional-indicator
variables of a pair beta_s, and each small cumulant is Mobius-inverted over
partitions of {x, 1..l} with indicator moments computed from the latent law
(label-equality probabilities, sign parities, activation probabilities).

The two routes share only the value types; their agreement on a grid is the
package's central verification.

Everything is exact: rationals via fractions.Fraction, lambda symbolic as an
integer power.  Row indices 0 and 1 are the distinguished pair defining
x = 1{k*_0 = k*_1}.  Priors are exchangeable over the remaining rows and over
all columns, which the caches exploit through canonical relabeling.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import combinations_with_replacement, permutations, product

from .errors import ParameterError, ResourceGuardError
from .exact import (
    ExactScalar,
    MultiIndex,
    enumerate_pairings,
    gaussian_moment_coeff,
    mobius_coefficient,
    set_partitions,
)
from .models import BICLUSTERING, CLUSTERING, SPARSE, ModelSpec

MOMENT_SUPPORT_GUARD = 6      # max touched rows / columns per moment
BRUTE_SIZE_GUARD = 9          # |alpha| + x_flag
CONDITIONED_SIZE_GUARD = 8    # |alpha|
COUNT_GUARDS = dict(d=8, n=6, p=4)


# ---------------------------------------------------------------------------
# canonical relabeling (cache keys)
# ---------------------------------------------------------------------------

def _canonical_key(cells, protect_01: bool):
    """Lexicographically minimal form of a cell multiset under the symmetry
    group: all columns exchangeable, rows exchangeable except that rows {0,1}
    (the pair defining x) may only swap with each other when protect_01."""
    cols = sorted({j for (_, j), _ in cells})
    rows = sorted({i for (i, _), _ in cells})
    by_row = {}
    for (i, j), c in cells:
        by_row.setdefault(i, []).append((j, c))

    def row_vec(i, colmap):
        return tuple(sorted((colmap[j], c) for j, c in by_row.get(i, [])))

    best = None
    other_rows = [i for i in rows if not (protect_01 and i in (0, 1))]
    for colperm in permutations(range(len(cols))):
        colmap = {cols[t]: colperm[t] for t in range(len(cols))}
        if protect_01:
            for a, b in ((0, 1), (1, 0)):
                key = (row_vec(a, colmap), row_vec(b, colmap),
                       tuple(sorted(row_vec(i, colmap) for i in other_rows)))
                if best is None or key < best:
                    best = key
        else:
            key = ((), (), tuple(sorted(row_vec(i, colmap) for i in other_rows)))
            if best is None or key < best:
                best = key
    return best


def _cells_to_canonical_multiindex(key) -> tuple:
    """Rebuild a concrete cell multiset from a canonical key (rows 0,1 are the
    protected slots, other rows follow in sorted order)."""
    vec0, vec1, others = key
    cells = {}
    for j, c in vec0:
        cells[(0, j)] = cells.get((0, j), 0) + c
    for j, c in vec1:
        cells[(1, j)] = cells.get((1, j), 0) + c
    row = 2
    for vec in others:
        for j, c in vec:
            cells[(row, j)] = cells.get((row, j), 0) + c
        row += 1
    return tuple(sorted(cells.items()))


def _canonical_multiindex_free(key) -> tuple:
    """Same, but with no protected slots (rows start at 0)."""
    _, _, others = key
    cells = {}
    for row, vec in enumerate(others):
        for j, c in vec:
            cells[(row, j)] = cells.get((row, j), 0) + c
    return tuple(sorted(cells.items()))


def _falling(L: int, k: int) -> int:
    out = 1
    for t in range(k):
        out *= (L - t)
        if out == 0:
            return 0
    return out


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self):
        self.parent = {}

    def add(self, x):
        if x not in self.parent:
            self.parent[x] = x

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        self.add(a)
        self.add(b)
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def _uf_components(uf: _UnionFind) -> int:
    return len({uf.find(x) for x in uf.parent})


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

class CumulantEngine:
    """Caches exact moments and cumulants for one (kind, K, L, rho).

    use_canonical=False disables the exchangeability-based cache keying
    (every multiset computed from its own cells); tests use it to validate the
    canonical relabeling independently.
    """

    def __init__(self, spec: ModelSpec, use_canonical: bool = True):
        self.kind = spec.model_kind
        self.K = spec.K
        self.L = spec.L
        self.rho = spec.rho
        self.use_canonical = use_canonical
        self._canon = {}
        self._moments = {}
        self._gauss = {}
        self._brute = {}
        self._cond = {}

    # -- mixed-moment oracle (route 1 building block) -----------------------

    def moment(self, x_flag: bool, beta: MultiIndex) -> ExactScalar:
        """E[x^{x_flag} prod_{(i,j) in beta} X_ij], exact."""
        if beta.n_rows > MOMENT_SUPPORT_GUARD or beta.r_cols > MOMENT_SUPPORT_GUARD:
            raise ResourceGuardError(
                f"moment support capped at {MOMENT_SUPPORT_GUARD} rows/columns"
            )
        if beta.total == 0:
            return ExactScalar.of(Fraction(1, self.K)) if x_flag else ExactScalar.of(1)
        raw = (x_flag, beta.cells)
        if not self.use_canonical:
            got = self._moments.get(raw)
            if got is None:
                got = self._moments[raw] = self._moment_uncached(x_flag, beta.cells)
            return got
        canon = self._canon.get(raw)
        if canon is None:
            canon = (x_flag, _canonical_key(beta.cells, protect_01=x_flag))
            self._canon[raw] = canon
        got = self._moments.get(canon)
        if got is None:
            if x_flag:
                cells = _cells_to_canonical_multiindex(canon[1])
            else:
                cells = _canonical_multiindex_free(canon[1])
            got = self._moment_uncached(x_flag, cells)
            self._moments[canon] = got
        return got

    def _moment_uncached(self, x_flag: bool, cells) -> ExactScalar:
        if self.kind == CLUSTERING:
            return self._gaussian_label_moment(x_flag, cells)
        if self.kind == SPARSE:
            row_mass = {}
            for (i, _), c in cells:
                row_mass[i] = row_mass.get(i, 0) + c
            if any(m % 2 for m in row_mass.values()):
                return ExactScalar.zero()
            r = len({j for (_, j), _ in cells})
            base = self._gaussian_label_moment(x_flag, cells)
            return ExactScalar(base.coeff * self.rho ** r, base.lambda_power) \
                if not base.is_zero else base
        # biclustering: sign parities, then sum over column-label coincidence
        # patterns (set partitions of the touched columns, falling-factorial
        # weights), each pattern reducing to a Gaussian label moment on the
        # column-merged multiset.
        row_mass, col_mass = {}, {}
        for (i, j), c in cells:
            row_mass[i] = row_mass.get(i, 0) + c
            col_mass[j] = col_mass.get(j, 0) + c
        if any(m % 2 for m in row_mass.values()) or any(m % 2 for m in col_mass.values()):
            return ExactScalar.zero()
        cols = sorted(col_mass)
        total_power = sum(c for _, c in cells)
        acc = Fraction(0)
        for part in set_partitions(len(cols)):
            w = _falling(self.L, len(part))
            if w == 0:
                continue
            colmap = {}
            for part_idx, block in enumerate(part):
                for t in block:
                    colmap[cols[t]] = part_idx
            merged = {}
            for (i, j), c in cells:
                key = (i, colmap[j])
                merged[key] = merged.get(key, 0) + c
            g = self._gaussian_label_moment(x_flag, tuple(sorted(merged.items())))
            if not g.is_zero:
                acc += Fraction(w, self.L ** len(cols)) * g.coeff
        return ExactScalar(acc, total_power) if acc else ExactScalar.zero()

    def _gaussian_label_moment(self, x_flag: bool, cells) -> ExactScalar:
        """E over row labels of prod over (label, column) groups of the
        Gaussian moment (m-1)!!, times 1{k_0 = k_1} when x_flag."""
        key = (x_flag, cells)
        got = self._gauss.get(key)
        if got is not None:
            return got
        rows = sorted({i for (i, _), _ in cells} | ({0, 1} if x_flag else set()))
        idx = {i: t for t, i in enumerate(rows)}
        cell_list = [(idx[i], j, c) for (i, j), c in cells]
        power = sum(c for _, _, c in cell_list)
        K = self.K
        acc = 0
        for lab in product(range(K), repeat=len(rows)):
            if x_flag and lab[idx[0]] != lab[idx[1]]:
                continue
            masses = {}
            for t, j, c in cell_list:
                g = (lab[t], j)
                masses[g] = masses.get(g, 0) + c
            term = 1
            for m in masses.values():
                coef = gaussian_moment_coeff(m)
                if coef == 0:
                    term = 0
                    break
                term *= coef
            acc += term
        out = ExactScalar(Fraction(acc, K ** len(rows)), power) if acc else ExactScalar.zero()
        self._gauss[key] = out
        return out

    # -- route 1: Mobius over the full partition lattice ---------------------

    def cumulant_bruteforce(self, alpha: MultiIndex, x_flag: bool = True) -> ExactScalar:
        d = alpha.total
        if d + int(x_flag) > BRUTE_SIZE_GUARD:
            raise ResourceGuardError(
                f"brute-force cumulant capped at |alpha| + x <= {BRUTE_SIZE_GUARD}"
            )
        if d == 0:
            if not x_flag:
                raise ParameterError("empty cumulant")
            return ExactScalar.of(Fraction(1, self.K))
        raw = (x_flag, alpha.cells)
        if self.use_canonical:
            canon = self._canon.get(raw)
            if canon is None:
                canon = (x_flag, _canonical_key(alpha.cells, protect_01=x_flag))
                self._canon[raw] = canon
        else:
            canon = raw
        got = self._brute.get(canon)
        if got is not None:
            return got
        if not self.use_canonical:
            cells = alpha.cells
        elif x_flag:
            cells = _cells_to_canonical_multiindex(canon[1])
        else:
            cells = _canonical_multiindex_free(canon[1])
        positions = []
        for ij, c in cells:
            positions.extend([ij] * c)
        off = 1 if x_flag else 0
        m = len(positions) + off
        total = ExactScalar.zero()
        for part in set_partitions(m):
            prod_scalar = ExactScalar.of(mobius_coefficient(part))
            for block in part:
                block_cells = {}
                block_x = False
                for e in block:
                    if x_flag and e == 0:
                        block_x = True
                    else:
                        ij = positions[e - off]
                        block_cells[ij] = block_cells.get(ij, 0) + 1
                mom = self.moment(block_x, MultiIndex(block_cells))
                if mom.is_zero:
                    prod_scalar = ExactScalar.zero()
                    break
                prod_scalar = prod_scalar * mom
            total = total + prod_scalar
        self._brute[canon] = total
        return total

    # -- route 2: conditioned decomposition ----------------------------------

    def cumulant_conditioned(self, alpha: MultiIndex) -> ExactScalar:
        d = alpha.total
        if d > CONDITIONED_SIZE_GUARD:
            raise ResourceGuardError(
                f"conditioned cumulant capped at |alpha| <= {CONDITIONED_SIZE_GUARD}"
            )
        if alpha.n_rows > MOMENT_SUPPORT_GUARD or alpha.r_cols > MOMENT_SUPPORT_GUARD:
            raise ResourceGuardError(
                f"conditioned cumulant support capped at {MOMENT_SUPPORT_GUARD}"
            )
        if d == 0:
            return ExactScalar.of(Fraction(1, self.K))
        if d % 2:
            return ExactScalar.zero()
        raw = ("cond", alpha.cells)
        if self.use_canonical:
            canon = self._canon.get(raw)
            if canon is None:
                canon = _canonical_key(alpha.cells, protect_01=True)
                self._canon[raw] = canon
            cells = _cells_to_canonical_multiindex(canon)
        else:
            canon = raw
            cells = alpha.cells
        got = self._cond.get(canon)
        if got is not None:
            return got
        acc = Fraction(0)
        single_column_only = self.kind in (CLUSTERING, SPARSE)
        for pairing in enumerate_pairings(MultiIndex(cells)):
            if single_column_only and any(a[1] != b[1] for a, b in pairing):
                continue
            acc += self._conditional_C(pairing)
        out = ExactScalar(acc, d) if acc else ExactScalar.zero()
        self._cond[canon] = out
        return out

    def _conditional_C(self, pairing) -> Fraction:
        """Cum(x, W_1, ..., W_l) for W_s the indicator variable of pair s."""
        l = len(pairing)
        acc = Fraction(0)
        for part in set_partitions(l + 1):
            coef = Fraction(mobius_coefficient(part))
            prod_val = coef
            for block in part:
                x_in = block[0] == 0
                pairs = [pairing[e - 1] for e in block if e != 0]
                mom = self._omega_block_moment(x_in, pairs)
                if mom == 0:
                    prod_val = Fraction(0)
                    break
                prod_val *= mom
            acc += prod_val
        return acc

    def _omega_block_moment(self, x_in: bool, pairs) -> Fraction:
        """E[ x^{x_in} prod_s W_s ] for the pairs in one Mobius block."""
        if not pairs:
            return Fraction(1, self.K) if x_in else Fraction(1)
        uf_rows = _UnionFind()
        if x_in:
            uf_rows.union(0, 1)
        for (ia, _), (ib, _) in pairs:
            uf_rows.union(ia, ib)
        n_rows = len(uf_rows.parent)
        prob = Fraction(1, self.K) ** (n_rows - _uf_components(uf_rows))

        if self.kind == CLUSTERING:
            return prob

        if self.kind == SPARSE:
            row_mass, cols = {}, set()
            for (ia, ja), (ib, jb) in pairs:
                row_mass[ia] = row_mass.get(ia, 0) + 1
                row_mass[ib] = row_mass.get(ib, 0) + 1
                cols.add(ja)
                cols.add(jb)
            if any(m % 2 for m in row_mass.values()):
                return Fraction(0)
            return prob * self.rho ** len(cols)

        # biclustering
        row_mass, col_mass = {}, {}
        uf_cols = _UnionFind()
        for (ia, ja), (ib, jb) in pairs:
            row_mass[ia] = row_mass.get(ia, 0) + 1
            row_mass[ib] = row_mass.get(ib, 0) + 1
            col_mass[ja] = col_mass.get(ja, 0) + 1
            col_mass[jb] = col_mass.get(jb, 0) + 1
            uf_cols.union(ja, jb)
        if any(m % 2 for m in row_mass.values()) or any(m % 2 for m in col_mass.values()):
            return Fraction(0)
        n_cols = len(uf_cols.parent)
        return prob * Fraction(1, self.L) ** (n_cols - _uf_components(uf_cols))


# ---------------------------------------------------------------------------
# module-level API
# ---------------------------------------------------------------------------

_ENGINES: dict = {}


def get_engine(spec: ModelSpec, fresh: bool = False) -> CumulantEngine:
    key = (spec.model_kind, spec.K, spec.L, spec.rho)
    if fresh:
        return CumulantEngine(spec)
    eng = _ENGINES.get(key)
    if eng is None:
        eng = _ENGINES[key] = CumulantEngine(spec)
    return eng


def _as_multiindex(alpha) -> MultiIndex:
    if isinstance(alpha, MultiIndex):
        return alpha
    if hasattr(alpha, "items") or (alpha and isinstance(next(iter(alpha), None), tuple)
                                   and len(next(iter(alpha))) == 2
                                   and isinstance(next(iter(alpha))[0], tuple)):
        return MultiIndex(alpha)
    return MultiIndex.from_array(alpha)


def moment_oracle(spec: ModelSpec, x_flag: bool, beta) -> ExactScalar:
    return get_engine(spec).moment(x_flag, _as_multiindex(beta))


def cumulant_bruteforce(spec: ModelSpec, alpha, x_flag: bool = True) -> ExactScalar:
    return get_engine(spec).cumulant_bruteforce(_as_multiindex(alpha), x_flag)


def cumulant_conditioned(spec: ModelSpec, alpha) -> ExactScalar:
    return get_engine(spec).cumulant_conditioned(_as_multiindex(alpha))


def indicator_cumulant(K: int, pairs) -> Fraction:
    """Cum of label-coincidence indicators 1{k_a = k_b} for (a, b) in pairs,
    under i.i.d. uniform labels on [K].  Small sub-oracle used by tests."""
    l = len(pairs)
    if l == 0:
        raise ParameterError("need at least one indicator")
    acc = Fraction(0)
    for part in set_partitions(l):
        coef = Fraction(mobius_coefficient(part))
        val = coef
        for block in part:
            uf = _UnionFind()
            for e in block:
                a, b = pairs[e]
                uf.union(a, b)
            val *= Fraction(1, K) ** (len(uf.parent) - _uf_components(uf))
        acc += val
    return acc


# ---------------------------------------------------------------------------
# Omega events and probabilities
# ---------------------------------------------------------------------------

def omega_event(spec: ModelSpec, beta, state) -> bool:
    """Omega_beta(Z): all delta_ij(Z) nonzero and a single theta value."""
    beta = _as_multiindex(beta)
    if beta.total == 0:
        raise ParameterError("beta must be nonempty")
    thetas = set()
    for (i, j), _ in beta.cells:
        if spec.model_kind == CLUSTERING:
            thetas.add((int(state.k_star[i]), j))
        elif spec.model_kind == SPARSE:
            if state.z[j] == 0:
                return False
            thetas.add((int(state.k_star[i]), j))
        else:
            thetas.add((int(state.k_star[i]), int(state.l_star[j])))
    return len(thetas) == 1


def omega_probability(spec: ModelSpec, betas) -> Fraction:
    """P[intersection of Omega_{beta_s}] by exact latent enumeration on the
    touched rows/columns."""
    betas = [_as_multiindex(b) for b in betas]
    if any(b.total == 0 for b in betas):
        raise ParameterError("each beta must be nonempty")
    rows = sorted({i for b in betas for i in b.supp_rows})
    cols = sorted({j for b in betas for j in b.supp_cols})
    K = spec.K
    ridx = {i: t for t, i in enumerate(rows)}
    cidx = {j: t for t, j in enumerate(cols)}

    def theta_single(b, lab, col_lab):
        thetas = set()
        for (i, j), _ in b.cells:
            if spec.model_kind == BICLUSTERING:
                thetas.add((lab[ridx[i]], col_lab[cidx[j]]))
            else:
                thetas.add((lab[ridx[i]], j))
        return len(thetas) == 1

    total = Fraction(0)
    if spec.model_kind == CLUSTERING:
        for lab in product(range(K), repeat=len(rows)):
            if all(theta_single(b, lab, None) for b in betas):
                total += Fraction(1, K ** len(rows))
        return total
    if spec.model_kind == SPARSE:
        rho = spec.rho
        for lab in product(range(K), repeat=len(rows)):
            if not all(theta_single(b, lab, None) for b in betas):
                continue
            for zz in product((0, 1), repeat=len(cols)):
                needed = all(zz[cidx[j]] == 1 for b in betas for j in b.supp_cols)
                if not needed:
                    continue
                w = Fraction(1, K ** len(rows))
                for zv in zz:
                    w *= rho if zv else (1 - rho)
                total += w
        return total
    L = spec.L
    for lab in product(range(K), repeat=len(rows)):
        for col_lab in product(range(L), repeat=len(cols)):
            if all(theta_single(b, lab, col_lab) for b in betas):
                total += Fraction(1, K ** len(rows) * L ** len(cols))
    return total


# ---------------------------------------------------------------------------
# the bipartite multigraph view, nullity predicate, counting bound
# ---------------------------------------------------------------------------

class AlphaGraph:
    """The bipartite multigraph of alpha: row nodes u_i, column nodes v_j,
    alpha_ij parallel edges, restricted to non-isolated nodes."""

    __slots__ = ("alpha", "u_nodes", "v_nodes")

    def __init__(self, alpha: MultiIndex):
        self.alpha = alpha
        self.u_nodes = alpha.supp_rows
        self.v_nodes = alpha.supp_cols

    def u_degree(self, i: int) -> int:
        return self.alpha.row_mass(i)

    def v_degree(self, j: int) -> int:
        return self.alpha.col_mass(j)

    def connected_with_anchor_edge(self) -> bool:
        """Connectivity of G^- plus the extra (u_0, u_1) edge."""
        nodes = [("r", i) for i in self.u_nodes] + [("c", j) for j in self.v_nodes]
        if not nodes:
            return False
        adj = {v: set() for v in nodes}
        for (i, j), _ in self.alpha.cells:
            adj[("r", i)].add(("c", j))
            adj[("c", j)].add(("r", i))
        if ("r", 0) in adj and ("r", 1) in adj:
            adj[("r", 0)].add(("r", 1))
            adj[("r", 1)].add(("r", 0))
        seen = {nodes[0]}
        stack = [nodes[0]]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(nodes)


def nullity_predicate(model_kind: str, alpha) -> bool:
    """True when the model's necessary conditions for kappa != 0 FAIL, i.e.
    the cumulant is certified to vanish."""
    alpha = _as_multiindex(alpha)
    if alpha.total == 0:
        raise ParameterError("alpha must be nonzero")
    g = AlphaGraph(alpha)
    if 0 not in g.u_nodes or 1 not in g.u_nodes:
        return True
    if model_kind == BICLUSTERING:
        if any(g.u_degree(i) < 2 for i in g.u_nodes):
            return True
        if any(g.v_degree(j) < 2 for j in g.v_nodes):
            return True
        return False
    if any(g.v_degree(j) < 2 for j in g.v_nodes):
        return True
    anchor_exempt = (0, 1) if model_kind == CLUSTERING else ()
    if any(g.u_degree(i) < 2 for i in g.u_nodes if i not in anchor_exempt):
        return True
    if not g.connected_with_anchor_edge():
        return True
    return False


def count_admissible(d: int, m: int, r: int, n: int, p: int):
    """Exhaustive count of alpha on the n x p grid passing the clustering
    nullity conditions with |alpha| = d, #alpha = m, r_alpha = r, next to the
    closed-form bound d^{3(d-r-m+2)} n^{m-2} p^r.  Returns (count, bound)."""
    if d > COUNT_GUARDS["d"] or n > COUNT_GUARDS["n"] or p > COUNT_GUARDS["p"]:
        raise ResourceGuardError(f"count_admissible guards: {COUNT_GUARDS}")
    if m < 2 or r < 1 or d < 1:
        raise ParameterError("need m >= 2, r >= 1, d >= 1")
    bound = Fraction(d) ** (3 * (d - r - m + 2)) * n ** max(m - 2, 0) * p ** r
    count = 0
    cells = [(i, j) for i in range(n) for j in range(p)]
    for combo in combinations_with_replacement(cells, d):
        alpha = MultiIndex.from_positions(combo)
        if alpha.n_rows != m or alpha.r_cols != r:
            continue
        if not nullity_predicate(CLUSTERING, alpha):
            count += 1
    return count, bound
