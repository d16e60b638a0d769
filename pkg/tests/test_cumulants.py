"""Unit tests for the cumulant engine.

The full-grid oracle-equivalence sweep lives in
test_acceptance.py; here we pin the hand-computable values, the guards, the
nullity predicate, and the invariances on small inputs.
"""

from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from ldgap.cumulants import (
    CumulantEngine,
    count_admissible,
    cumulant_bruteforce,
    cumulant_conditioned,
    get_engine,
    indicator_cumulant,
    moment_oracle,
    nullity_predicate,
    omega_event,
    omega_probability,
)
from ldgap.errors import ParameterError, ResourceGuardError
from ldgap.exact import MultiIndex
from ldgap.models import LatentState, ModelSpec

CL2 = ModelSpec.clustering(4, 3, 2, lambda2=1)
CL3 = ModelSpec.clustering(4, 3, 3, lambda2=1)
SP2 = ModelSpec.sparse(4, 3, 2, Fraction(1, 2), lambda2=1)
BI22 = ModelSpec.biclustering(4, 3, 2, 2, lambda2=1)

A11 = MultiIndex({(0, 0): 1, (1, 0): 1})


# ---------------------------------------------------------------------------
# moment oracle
# ---------------------------------------------------------------------------

def test_moment_empty_is_mean_of_x():
    assert moment_oracle(CL2, True, MultiIndex({})).coeff == Fraction(1, 2)
    assert moment_oracle(CL2, False, MultiIndex({})).coeff == 1


def test_moment_odd_power_vanishes():
    assert moment_oracle(CL2, False, MultiIndex({(0, 0): 1})).is_zero
    assert moment_oracle(CL2, True, MultiIndex({(2, 1): 3})).is_zero


def test_moment_pair_same_column():
    m = moment_oracle(CL2, False, A11)
    assert m.coeff == Fraction(1, 2) and m.lambda_power == 2


def test_moment_support_guard():
    wide = MultiIndex({(i, 0): 2 for i in range(7)})
    with pytest.raises(ResourceGuardError):
        moment_oracle(CL2, False, wide)


def test_sparse_moment_has_rho_factor():
    # E[X_00^2] = rho * lambda^2 under the sparse prior
    m = moment_oracle(SP2, False, MultiIndex({(0, 0): 2}))
    assert m.coeff == Fraction(1, 2) and m.lambda_power == 2


def test_bicluster_moment_sign_parity():
    assert moment_oracle(BI22, False, MultiIndex({(0, 0): 1, (1, 0): 1})).is_zero
    m = moment_oracle(BI22, False, MultiIndex({(0, 0): 2}))
    assert m.coeff == 1 and m.lambda_power == 2


# ---------------------------------------------------------------------------
# brute-force route
# ---------------------------------------------------------------------------

def test_cum_x_alone():
    assert cumulant_bruteforce(CL2, MultiIndex({})).coeff == Fraction(1, 2)
    assert cumulant_conditioned(CL3, MultiIndex({})).coeff == Fraction(1, 3)


def test_cum_single_entry_vanishes():
    assert cumulant_bruteforce(CL2, MultiIndex({(0, 0): 1})).is_zero


def test_cum_pair_value():
    k = cumulant_bruteforce(CL2, A11)
    assert k.coeff == Fraction(1, 4) and k.lambda_power == 2
    k3 = cumulant_bruteforce(CL3, A11)
    assert k3.coeff == Fraction(1, 3) * (1 - Fraction(1, 3))


def test_brute_guard():
    big = MultiIndex({(0, 0): 9})
    with pytest.raises(ResourceGuardError):
        cumulant_bruteforce(CL2, big)


def test_indicator_triangle():
    assert indicator_cumulant(2, [(0, 1), (1, 2), (2, 0)]) == Fraction(1, 8)


# ---------------------------------------------------------------------------
# conditioned route
# ---------------------------------------------------------------------------

def test_conditioned_odd_mass_zero():
    assert cumulant_conditioned(CL2, MultiIndex({(0, 0): 1, (1, 0): 2})).is_zero


def test_conditioned_matches_brute_small():
    cells_list = [
        {(0, 0): 1, (1, 0): 1},
        {(0, 0): 2, (1, 0): 2},
        {(0, 0): 1, (1, 0): 1, (2, 1): 2},
        {(0, 0): 1, (1, 1): 1, (0, 1): 1, (1, 0): 1},
    ]
    for spec in (CL2, CL3, SP2, BI22):
        for cells in cells_list:
            alpha = MultiIndex(cells)
            b = cumulant_bruteforce(spec, alpha)
            c = cumulant_conditioned(spec, alpha)
            assert b.coeff == c.coeff
            if not b.is_zero:
                assert b.lambda_power == c.lambda_power == alpha.total


def test_conditioned_guard():
    with pytest.raises(ResourceGuardError):
        cumulant_conditioned(CL2, MultiIndex({(0, 0): 10}))


def test_multilinearity_in_lambda():
    alpha = MultiIndex({(0, 0): 2, (1, 0): 2})
    k = cumulant_bruteforce(CL3, alpha)
    c = Fraction(9, 5)
    assert k.evaluate_exact(c) == k.evaluate_exact(Fraction(1)) * c ** (alpha.total // 2)


def test_relabeling_invariance_bypassing_canonical_cache():
    spec = SP2
    eng = CumulantEngine(spec, use_canonical=False)
    alpha = MultiIndex({(0, 0): 1, (1, 0): 1, (2, 1): 2, (3, 1): 2})
    moved = MultiIndex({(0, 2): 1, (1, 2): 1, (3, 0): 2, (2, 0): 2})
    assert eng.cumulant_bruteforce(alpha).coeff == eng.cumulant_bruteforce(moved).coeff


def test_canonical_engine_matches_raw_engine():
    for spec in (CL3, SP2, BI22):
        canon = CumulantEngine(spec)
        raw = CumulantEngine(spec, use_canonical=False)
        rng = np.random.default_rng(7)
        for _ in range(10):
            cells = [(int(rng.integers(0, 4)), int(rng.integers(0, 3)))
                     for _ in range(int(rng.integers(1, 6)))]
            alpha = MultiIndex.from_positions(cells)
            assert canon.cumulant_bruteforce(alpha).coeff == \
                raw.cumulant_bruteforce(alpha).coeff


# ---------------------------------------------------------------------------
# Omega events and probabilities
# ---------------------------------------------------------------------------

def test_omega_event_clustering():
    state = LatentState(k_star=np.array([0, 0, 1, 1]), nu=np.zeros((2, 3)))
    assert omega_event(CL2, A11, state)
    state2 = LatentState(k_star=np.array([0, 1, 1, 1]), nu=np.zeros((2, 3)))
    assert not omega_event(CL2, A11, state2)
    # two columns can never collapse to one theta value for clustering
    two_cols = MultiIndex({(0, 0): 1, (0, 1): 1})
    assert not omega_event(CL2, two_cols, state)


def test_omega_event_sparse_needs_activation():
    state = LatentState(k_star=np.array([0, 0, 1, 1]), nu=np.zeros((2, 3)),
                        eps_row=np.ones(4, dtype=int),
                        z=np.array([0, 1, 1]))
    assert not omega_event(SP2, A11, state)  # column 0 inactive
    state_on = LatentState(k_star=np.array([0, 0, 1, 1]), nu=np.zeros((2, 3)),
                           eps_row=np.ones(4, dtype=int),
                           z=np.array([1, 1, 1]))
    assert omega_event(SP2, A11, state_on)


def test_omega_probability_examples():
    assert omega_probability(CL2, [A11]) == Fraction(1, 2)
    assert omega_probability(CL2, [MultiIndex({(0, 0): 1, (0, 1): 1})]) == 0
    assert omega_probability(SP2, [A11]) == Fraction(1, 4)  # rho / K


def test_omega_probability_matches_component_formula():
    """Clustering enumeration agrees with (1/K)^(#rows - cc) on random pair
    systems (each beta a same-column pair)."""
    rng = np.random.default_rng(11)
    for _ in range(25):
        betas = []
        for _ in range(int(rng.integers(1, 4))):
            i, i2 = rng.integers(0, 4, size=2)
            j = int(rng.integers(0, 3))
            betas.append(MultiIndex.from_positions([(int(i), j), (int(i2), j)]))
        prob = omega_probability(CL3, betas)
        parent = {}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        rows = set()
        for b in betas:
            for i in b.supp_rows:
                rows.add(i)
                parent.setdefault(i, i)
        for b in betas:
            r = b.supp_rows
            ra, rb = find(r[0]), find(r[-1])
            if ra != rb:
                parent[ra] = rb
        cc = len({find(i) for i in rows})
        assert prob == Fraction(1, 3) ** (len(rows) - cc)


# ---------------------------------------------------------------------------
# nullity predicate
# ---------------------------------------------------------------------------

def test_nullity_missing_anchor_rows():
    alpha = MultiIndex({(2, 0): 2, (3, 0): 2})
    assert nullity_predicate("clustering", alpha)
    assert cumulant_bruteforce(CL2, alpha).is_zero


def test_nullity_degree_one_column():
    alpha = MultiIndex({(0, 0): 1, (1, 0): 1, (0, 1): 1, (1, 2): 1})
    assert nullity_predicate("clustering", alpha)
    assert cumulant_bruteforce(CL2, alpha).is_zero


def test_nullity_disconnected():
    alpha = MultiIndex({(0, 0): 2, (1, 0): 2, (2, 1): 2, (3, 1): 2})
    # rows {2,3} with column 1 form a component not linked to {0,1}
    assert nullity_predicate("clustering", alpha)


def test_nullity_not_flagged_for_surviving_pair():
    assert not nullity_predicate("clustering", A11)
    assert not cumulant_bruteforce(CL2, A11).is_zero


def test_nullity_sparse_anchors_need_degree_two():
    assert nullity_predicate("sparse", A11)  # rows 0,1 have degree 1
    assert not nullity_predicate("sparse", MultiIndex({(0, 0): 2, (1, 0): 2}))


def test_nullity_bicluster_rows_and_columns():
    assert nullity_predicate("biclustering", MultiIndex({(0, 0): 2, (1, 0): 1}))
    ok = MultiIndex({(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): 1})
    assert not nullity_predicate("biclustering", ok)


def test_nullity_rejects_zero_alpha():
    with pytest.raises(ParameterError):
        nullity_predicate("clustering", MultiIndex({}))


# ---------------------------------------------------------------------------
# counting bound
# ---------------------------------------------------------------------------

def test_count_admissible_minimal_case():
    count, bound = count_admissible(2, 2, 1, 2, 1)
    assert count == 1  # only [[1],[1]]
    # d^(3(d-r-m+2)) n^(m-2) p^r = 2^3 * 1 * 1
    assert bound == 8
    assert count <= bound


def test_count_admissible_d4():
    count, bound = count_admissible(4, 2, 2, 2, 2)
    assert Fraction(count) <= bound


def test_count_admissible_d_below_2r_is_zero():
    count, _ = count_admissible(4, 2, 3, 4, 3)
    assert count == 0


def test_count_admissible_guard():
    with pytest.raises(ResourceGuardError):
        count_admissible(9, 2, 1, 2, 1)


# ---------------------------------------------------------------------------
# module-level engine cache
# ---------------------------------------------------------------------------

def test_get_engine_is_keyed_by_parameters_not_shape():
    a = get_engine(ModelSpec.clustering(4, 3, 2, lambda2=1))
    b = get_engine(ModelSpec.clustering(2, 1, 2, lambda2=Fraction(1, 9)))
    assert a is b  # kappa depends only on (kind, K, L, rho) and touched cells


def test_alpha_graph_view():
    from ldgap.cumulants import AlphaGraph

    alpha = MultiIndex({(0, 0): 1, (1, 0): 1, (1, 1): 2})
    g = AlphaGraph(alpha)
    assert g.u_nodes == (0, 1) and g.v_nodes == (0, 1)
    assert g.u_degree(1) == 3 and g.v_degree(0) == 2 and g.v_degree(1) == 2
    assert g.connected_with_anchor_edge()
    split = AlphaGraph(MultiIndex({(0, 0): 2, (2, 1): 2}))
    assert not split.connected_with_anchor_edge()
