"""Low-degree lower bounds: hardness parameters, MMSE bounds, the exact
correlation sum, an empirical low-degree MMSE estimate, and threshold curves.

Hardness parameters, with snr = lambda^2 / sigma^2 (all three priors are
scale-invariant in this ratio):

    clustering     zeta  = snr^2 * p * max(D^18, n / K^2)          [D^5 <= p]
    sparse         zeta  = snr^2 * max(D^14, D^7 n, D^7 (rho p)^2 / p,
                                       (rho p)^2 n / (p K^2)) ... see below
    biclustering   zeta  = snr^2 * D^8  * max(p, n, p n / K^2, p n / L^2)
                   zeta' = snr^2 * D^10 * (5 p^2 / L) * max(1, n / K^2)

For the sparse prior the native statement is zeta = (dbar^4 / (rho^2 p^2)) *
max(D^14, D^7 n, D^7 rho^2 p, rho^2 p n / K^2) with dbar^2 = snr * rho * p,
so dbar^4/(rho^2 p^2) = snr^2 and both parameterizations coincide exactly.

The lower bound 1/K - (1/K^2) [1 + zeta/(1-sqrt(zeta))^3] applies to
clustering, sparse, and the first biclustering regime; the second biclustering
regime uses (1 - L exp(-(5p/2L) log 5)) (1/K - (1/K^2) sqrt(z')/(1-sqrt(z'))^2).
Negative values are clamped to 0 and flagged (the bound is vacuous, not wrong).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement
from math import comb
from typing import Optional

import numpy as np

from .cumulants import get_engine, nullity_predicate
from .errors import NumericError, ParameterError, ResourceGuardError
from .exact import MultiIndex
from .models import BICLUSTERING, CLUSTERING, SPARSE, ModelSpec

SW_GUARDS = dict(n=4, p=3, D=4)
EMPIRICAL_FEATURE_GUARD = 5000
EMPIRICAL_TRAIN_FACTOR = 20


@dataclass(frozen=True)
class ZetaValues:
    zeta: float
    zeta_prime: Optional[float]
    degree_condition_ok: bool  # clustering side condition D^5 <= p


def zeta_value(spec: ModelSpec, D: int) -> ZetaValues:
    if D < 1:
        raise ParameterError("degree D must be >= 1")
    snr = float(spec.lambda2 / spec.sigma2)
    n, p, K = spec.n, spec.p, spec.K
    if spec.model_kind == CLUSTERING:
        zeta = snr ** 2 * p * max(float(D) ** 18, n / K ** 2)
        return ZetaValues(zeta, None, D ** 5 <= p)
    if spec.model_kind == SPARSE:
        rp = float(spec.rho) * p  # = s_bar
        zeta = snr ** 2 * max(
            float(D) ** 14,
            float(D) ** 7 * n,
            float(D) ** 7 * rp ** 2 / p,
            rp ** 2 / p * n / K ** 2,
        )
        # native form: (dbar^4 / rho^2 p^2) * max(D^14, D^7 n, D^7 rho^2 p,
        # rho^2 p n / K^2); the rho^2 p = rp^2 / p rewriting above is exact.
        return ZetaValues(zeta, None, True)
    L = spec.L
    zeta = snr ** 2 * float(D) ** 8 * max(p, n, p * n / K ** 2, p * n / L ** 2)
    zeta_p = snr ** 2 * float(D) ** 10 * (5.0 * p * p / L) * max(1.0, n / K ** 2)
    return ZetaValues(zeta, zeta_p, True)


@dataclass
class LdBoundReport:
    D: int
    zeta: float
    mmse_lower: float
    variance_x: float
    zeta_prime: Optional[float] = None
    sw_sum: Optional[float] = None
    clamped: bool = False
    vacuous: bool = False
    regime_flags: tuple = field(default_factory=tuple)


def _main_bound(zeta: float, K: int) -> Optional[float]:
    if zeta >= 1.0:
        return None
    return 1.0 / K - (1.0 / K ** 2) * (1.0 + zeta / (1.0 - math.sqrt(zeta)) ** 3)


def _bicluster_reduction_bound(zeta_p: float, K: int, L: int, p: int) -> Optional[float]:
    if zeta_p >= 1.0:
        return None
    front = 1.0 - L * math.exp(-(5.0 * p / (2.0 * L)) * math.log(5.0))
    return front * (1.0 / K - (1.0 / K ** 2) * math.sqrt(zeta_p) / (1.0 - math.sqrt(zeta_p)) ** 2)


def mmse_lower_bound(spec: ModelSpec, D: int) -> LdBoundReport:
    zv = zeta_value(spec, D)
    flags = []
    if spec.model_kind == CLUSTERING and not zv.degree_condition_ok:
        flags.append("degree-condition-violated")
    candidates = []
    b = _main_bound(zv.zeta, spec.K)
    if b is None:
        flags.append("zeta>=1")
    else:
        candidates.append(b)
    if spec.model_kind == BICLUSTERING:
        b2 = _bicluster_reduction_bound(zv.zeta_prime, spec.K, spec.L, spec.p)
        if b2 is None:
            flags.append("zeta_prime>=1")
        else:
            candidates.append(b2)
            flags.append("reduction-bound-active" if b is None or b2 >= b
                         else "direct-bound-active")
    clamped = False
    vacuous = False
    if not candidates:
        lower = 0.0
        vacuous = True
    else:
        lower = max(candidates)
        if lower < 0.0:
            lower = 0.0
            clamped = True
    return LdBoundReport(
        D=D,
        zeta=zv.zeta,
        zeta_prime=zv.zeta_prime,
        mmse_lower=lower,
        variance_x=float(spec.var_x),
        clamped=clamped,
        vacuous=vacuous,
        regime_flags=tuple(flags),
    )


# ---------------------------------------------------------------------------
# exact degree-D correlation sum
# ---------------------------------------------------------------------------

def sw_correlation_sum_exact(spec: ModelSpec, D: int) -> Fraction:
    """sum_{|alpha| <= D} kappa_{x,alpha}^2 / alpha! at the model's rational
    lambda^2, by full enumeration with nullity pruning first."""
    if spec.n > SW_GUARDS["n"] or spec.p > SW_GUARDS["p"] or D > SW_GUARDS["D"]:
        raise ResourceGuardError(f"sw_correlation_sum guards: {SW_GUARDS}")
    eng = get_engine(spec)
    lam2 = Fraction(spec.lambda2)
    total = Fraction(1, spec.K ** 2)  # alpha = 0 contributes E[x]^2
    cells = [(i, j) for i in range(spec.n) for j in range(spec.p)]
    for d in range(1, D + 1):
        for combo in combinations_with_replacement(cells, d):
            alpha = MultiIndex.from_positions(combo)
            if nullity_predicate(spec.model_kind, alpha):
                continue
            kappa = eng.cumulant_bruteforce(alpha)
            if kappa.is_zero:
                continue
            total += kappa.coeff ** 2 * lam2 ** (kappa.lambda_power) / alpha.factorial()
    return total


def sw_correlation_sum(spec: ModelSpec, D: int) -> float:
    return float(sw_correlation_sum_exact(spec, D))


# ---------------------------------------------------------------------------
# empirical low-degree MMSE
# ---------------------------------------------------------------------------

def _batch_sample(spec: ModelSpec, size: int, rng):
    """Vectorized prior draws: (x, Y_flat) with Y_flat of shape (size, n*p)."""
    n, p, K = spec.n, spec.p, spec.K
    lam = float(spec.lambda2) ** 0.5
    sig = spec.sigma
    k = rng.integers(0, K, size=(size, n))
    if spec.model_kind == CLUSTERING:
        nu = rng.normal(0.0, lam, size=(size, K, p))
        X = np.take_along_axis(nu, k[:, :, None], axis=1)
    elif spec.model_kind == SPARSE:
        z = (rng.random((size, p)) < float(spec.rho)).astype(float)
        eps = 2.0 * rng.integers(0, 2, size=(size, n)) - 1.0
        nu = rng.normal(0.0, lam, size=(size, K, p))
        X = z[:, None, :] * eps[:, :, None] * np.take_along_axis(nu, k[:, :, None], axis=1)
    else:
        L = spec.L
        l = rng.integers(0, L, size=(size, p))
        er = 2.0 * rng.integers(0, 2, size=(size, n)) - 1.0
        ec = 2.0 * rng.integers(0, 2, size=(size, p)) - 1.0
        nu = rng.normal(0.0, lam, size=(size, K, L))
        nu_k = np.take_along_axis(nu, k[:, :, None], axis=1)          # (size, n, L)
        X = np.take_along_axis(nu_k, l[:, None, :], axis=2)           # (size, n, p)
        X = er[:, :, None] * ec[:, None, :] * X
    Y = X + rng.normal(0.0, sig, size=(size, n, p))
    x = (k[:, 0] == k[:, 1]).astype(float)
    return x, Y.reshape(size, n * p)


def _monomial_exponents(n_vars: int, D: int):
    out = [()]
    for d in range(1, D + 1):
        out.extend(combinations_with_replacement(range(n_vars), d))
    return out


def _design_matrix(Yf: np.ndarray, monomials) -> np.ndarray:
    cols = []
    for mono in monomials:
        if not mono:
            cols.append(np.ones(Yf.shape[0]))
        else:
            c = Yf[:, mono[0]].copy()
            for v in mono[1:]:
                c *= Yf[:, v]
            cols.append(c)
    return np.column_stack(cols)


def empirical_lowdeg_mmse(spec: ModelSpec, D: int, train_samples: int,
                          test_samples: int, seed: int):
    """Held-out MSE of the least-squares projection of x onto all monomials of
    degree <= D in the entries of Y, with machine-precision ridge.

    Returns (mse_estimate, std_error).
    """
    n_vars = spec.n * spec.p
    n_feat = comb(n_vars + D, D)
    if n_feat > EMPIRICAL_FEATURE_GUARD:
        raise ResourceGuardError(
            f"feature count {n_feat} exceeds {EMPIRICAL_FEATURE_GUARD}"
        )
    if train_samples < EMPIRICAL_TRAIN_FACTOR * n_feat:
        raise ParameterError(
            f"need train_samples >= {EMPIRICAL_TRAIN_FACTOR} x {n_feat} features"
        )
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    monomials = _monomial_exponents(n_vars, D)

    x_tr, Y_tr = _batch_sample(spec, train_samples, rng)
    phi_tr = _design_matrix(Y_tr, monomials)
    G = phi_tr.T @ phi_tr
    ridge = np.finfo(float).eps * np.linalg.norm(G, "fro")
    try:
        w = np.linalg.solve(G + ridge * np.eye(G.shape[0]), phi_tr.T @ x_tr)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"low-degree fit failed beyond ridge rescue: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericError("low-degree fit produced non-finite coefficients")

    x_te, Y_te = _batch_sample(spec, test_samples, rng)
    pred = _design_matrix(Y_te, monomials) @ w
    sq = (pred - x_te) ** 2
    mse = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(test_samples))
    return mse, se


# ---------------------------------------------------------------------------
# threshold curves (indicative: poly-log factors and absolute constants = 1)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdRow:
    model: str
    n: int
    p: int
    K: int
    L: Optional[int]
    s_bar: Optional[float]
    comp_threshold: float
    stat_threshold: float
    regime: str
    note: str = "indicative: constants and poly-log factors set to 1"


def _clustering_comp(n, p, K):
    return 1.0 + min(math.sqrt(p * K * K / n), math.sqrt(p))


def _clustering_stat(n, p, K):
    return 1.0 + math.sqrt(p * K / n)


def threshold_curve(spec: ModelSpec) -> ThresholdRow:
    n, p, K = spec.n, spec.p, spec.K
    if spec.model_kind == CLUSTERING:
        return ThresholdRow(spec.model_kind, n, p, K, None, None,
                            _clustering_comp(n, p, K), _clustering_stat(n, p, K),
                            regime="clustering")
    if spec.model_kind == SPARSE:
        s = float(spec.s_bar)
        comp_sparse = 1.0 + min(math.sqrt(s), math.sqrt(s * K * K / n)) + math.sqrt(s * s / n)
        comp = min(comp_sparse, _clustering_comp(n, p, K))
        stat_sparse = 1.0 + math.sqrt(s * K / n) + s * math.sqrt(K) / n
        stat = min(stat_sparse, _clustering_stat(n, p, K))
        regime = "column-barrier" if comp_sparse <= _clustering_comp(n, p, K) \
            else "ambient-barrier"
        return ThresholdRow(spec.model_kind, n, p, K, None, s, comp, stat, regime)
    L = spec.L
    delta_c2 = float(spec.lambda2 / spec.sigma2) * n
    column_barrier = 1.0 + min(math.sqrt(n), math.sqrt(n * L * L / p))
    if delta_c2 <= column_barrier:
        comp = _clustering_comp(n, p, K)
        regime = "columns-hard"
    else:
        comp = 1.0 + min(math.sqrt(L), math.sqrt(L * K * K / n))
        regime = "columns-easy"
    stat_plain = 1.0 + math.sqrt(K * p / n)
    if delta_c2 >= 1.0 + math.sqrt(K * L / p):
        stat = min(stat_plain, 1.0 + math.sqrt(K * L / n))
    else:
        stat = stat_plain
    return ThresholdRow(spec.model_kind, n, p, K, L, None, comp, stat, regime)


def threshold_curves(specs) -> list[ThresholdRow]:
    return [threshold_curve(s) for s in specs]
