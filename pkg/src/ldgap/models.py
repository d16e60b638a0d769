"""Latent model parameterizations, prior sampling, and separations.

Three model kinds share one signal template X_ij = delta_ij(Z) * nu_{theta_ij(Z)}:

    clustering     X_ij = nu[k_i, j]                labels k in [K]^n
    sparse         X_ij = z_j * eps_i * nu[k_i, j]  + activations z, row signs
    biclustering   X_ij = eps_r_i * eps_c_j * nu[k_i, l_j]

with nu entries i.i.d. N(0, lambda^2) and observation Y = X + sigma * N(0, 1).

Randomness contract: every draw goes through numpy.random.Generator(PCG64(seed))
in the fixed order (row labels, column labels, row signs, column signs,
activations, means, noise), so a seed pins the draw bit-for-bit for a given
numpy version.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import DegenerateError, ParameterError
from .partitions import Partition, PartitionPair

CLUSTERING = "clustering"
SPARSE = "sparse"
BICLUSTERING = "biclustering"
MODEL_KINDS = (CLUSTERING, SPARSE, BICLUSTERING)


def _frac(x, name: str) -> Fraction:
    try:
        return Fraction(x)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"{name} must be rational-convertible, got {x!r}") from exc


@dataclass(frozen=True)
class ModelSpec:
    """Full parameterization of one latent model instance.

    Exactly-rational fields (lambda2, sigma2, rho, delta_bar2) keep the
    consistency relations checkable to exact equality:

        clustering    lambda2 = delta_bar2 * sigma2 / p
        sparse        lambda2 = delta_bar2 * sigma2 / (rho * p)
        biclustering  lambda2 = delta_bar2 * sigma2 / p   (row-separation target)
    """

    model_kind: str
    n: int
    p: int
    K: int
    L: Optional[int] = None
    rho: Optional[Fraction] = None
    lambda2: Fraction = Fraction(1)
    sigma2: Fraction = Fraction(1)
    delta_bar2: Optional[Fraction] = field(default=None)

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ParameterError(f"unknown model kind {self.model_kind!r}")
        if self.n < 2 or self.p < 1:
            raise ParameterError("need n >= 2 and p >= 1")
        if not (2 <= self.K <= self.n):
            raise ParameterError("need 2 <= K <= n (K = 1 degenerates var(x))")
        if self.model_kind == BICLUSTERING:
            if self.L is None or not (2 <= self.L <= self.p):
                raise ParameterError("biclustering needs 2 <= L <= p")
        elif self.L is not None:
            raise ParameterError("L is only meaningful for biclustering")
        if self.model_kind == SPARSE:
            if self.rho is None:
                raise ParameterError("sparse model needs rho")
            object.__setattr__(self, "rho", _frac(self.rho, "rho"))
            if not (0 <= self.rho <= 1):
                raise ParameterError("rho must lie in [0, 1]")
        elif self.rho is not None:
            raise ParameterError("rho is only meaningful for the sparse model")

        object.__setattr__(self, "sigma2", _frac(self.sigma2, "sigma2"))
        if self.sigma2 <= 0:
            raise ParameterError("sigma2 must be positive")
        object.__setattr__(self, "lambda2", _frac(self.lambda2, "lambda2"))
        if self.lambda2 < 0:
            raise ParameterError("lambda2 must be nonnegative")
        if self.delta_bar2 is not None:
            object.__setattr__(self, "delta_bar2", _frac(self.delta_bar2, "delta_bar2"))
            implied = self._lambda2_from_delta(self.delta_bar2)
            if implied != self.lambda2:
                raise ParameterError(
                    f"lambda2 = {self.lambda2} inconsistent with delta_bar2 = "
                    f"{self.delta_bar2} (implies lambda2 = {implied})"
                )
        else:
            object.__setattr__(self, "delta_bar2", self._delta_from_lambda2())

    def _lambda2_from_delta(self, d2: Fraction) -> Fraction:
        if self.model_kind == SPARSE:
            if self.rho == 0:
                if d2 != 0:
                    raise ParameterError("rho = 0 forces delta_bar2 = 0")
                return Fraction(0)
            return d2 * self.sigma2 / (self.rho * self.p)
        return d2 * self.sigma2 / self.p

    def _delta_from_lambda2(self) -> Fraction:
        if self.model_kind == SPARSE:
            return self.lambda2 * self.rho * self.p / self.sigma2
        return self.lambda2 * self.p / self.sigma2

    # -- convenience constructors ------------------------------------------

    @staticmethod
    def clustering(n, p, K, *, delta_bar2=None, lambda2=None, sigma2=1) -> "ModelSpec":
        lam2 = _resolve_lambda2(delta_bar2, lambda2, Fraction(sigma2) / p)
        return ModelSpec(CLUSTERING, n, p, K, lambda2=lam2, sigma2=sigma2)

    @staticmethod
    def sparse(n, p, K, rho, *, delta_bar2=None, lambda2=None, sigma2=1) -> "ModelSpec":
        rho = _frac(rho, "rho")
        if rho == 0:
            lam2 = _resolve_lambda2(delta_bar2, lambda2, None)
        else:
            lam2 = _resolve_lambda2(delta_bar2, lambda2, Fraction(sigma2) / (rho * p))
        return ModelSpec(SPARSE, n, p, K, rho=rho, lambda2=lam2, sigma2=sigma2)

    @staticmethod
    def biclustering(n, p, K, L, *, delta_bar2=None, lambda2=None, sigma2=1) -> "ModelSpec":
        lam2 = _resolve_lambda2(delta_bar2, lambda2, Fraction(sigma2) / p)
        return ModelSpec(BICLUSTERING, n, p, K, L=L, lambda2=lam2, sigma2=sigma2)

    # -- derived quantities -------------------------------------------------

    @property
    def var_x(self) -> Fraction:
        """var(1{k_1 = k_2}) = 1/K - 1/K^2, the trivial-estimator MMSE."""
        return Fraction(1, self.K) - Fraction(1, self.K ** 2)

    @property
    def s_bar(self) -> Fraction:
        """Expected number of active columns, rho * p (sparse only)."""
        if self.rho is None:
            raise ParameterError("s_bar defined only for the sparse model")
        return self.rho * self.p

    @property
    def s_high(self) -> Fraction:
        """High-probability sparsity level 5 * rho * p."""
        return 5 * self.s_bar

    @property
    def sigma(self) -> float:
        return float(self.sigma2) ** 0.5


def _resolve_lambda2(delta_bar2, lambda2, per_unit) -> Fraction:
    if (delta_bar2 is None) == (lambda2 is None):
        if delta_bar2 is None:
            raise ParameterError("give exactly one of delta_bar2, lambda2")
        lam = _frac(delta_bar2, "delta_bar2") * per_unit
        if lam != _frac(lambda2, "lambda2"):
            raise ParameterError("delta_bar2 and lambda2 both given and inconsistent")
        return lam
    if lambda2 is not None:
        return _frac(lambda2, "lambda2")
    d2 = _frac(delta_bar2, "delta_bar2")
    if per_unit is None:
        if d2 != 0:
            raise ParameterError("rho = 0 forces delta_bar2 = 0")
        return Fraction(0)
    return d2 * per_unit


@dataclass(frozen=True)
class LatentState:
    """One draw of the hidden variables; unused fields are None per kind."""

    k_star: np.ndarray                      # row labels in [0, K)
    nu: np.ndarray                          # (K, p) or (K, L)
    l_star: Optional[np.ndarray] = None     # column labels (biclustering)
    eps_row: Optional[np.ndarray] = None    # row signs (sparse, biclustering)
    eps_col: Optional[np.ndarray] = None    # column signs (biclustering)
    z: Optional[np.ndarray] = None          # activations in {0,1} (sparse)


@dataclass(frozen=True)
class ObservationPair:
    X: np.ndarray
    Y: np.ndarray


def signal(spec: ModelSpec, state: LatentState) -> np.ndarray:
    """Reconstruct X cell-by-cell from the latent state (exact)."""
    if spec.model_kind == CLUSTERING:
        return state.nu[state.k_star, :]
    if spec.model_kind == SPARSE:
        return state.z[None, :] * state.eps_row[:, None] * state.nu[state.k_star, :]
    block = state.nu[state.k_star][:, state.l_star]
    return state.eps_row[:, None] * state.eps_col[None, :] * block


def sample_prior(spec: ModelSpec, seed: int):
    """Draw (LatentState, ObservationPair, PartitionPair) from the model's prior.

    The exposed "true" partition is the (label, sign) refinement: K groups for
    clustering, 2K for sparse, 2K rows x 2L columns for biclustering.  Groups
    left unoccupied by the draw are kept as empty sets.
    """
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    n, p, K = spec.n, spec.p, spec.K
    lam = float(spec.lambda2) ** 0.5
    sig = spec.sigma

    k_star = rng.integers(0, K, size=n)
    if spec.model_kind == CLUSTERING:
        nu = rng.normal(0.0, lam, size=(K, p))
        state = LatentState(k_star=k_star, nu=nu)
        rows = Partition.from_labels(k_star, K)
        pair = PartitionPair(rows=rows)
    elif spec.model_kind == SPARSE:
        z = (rng.random(p) < float(spec.rho)).astype(np.int64)
        eps = 2 * rng.integers(0, 2, size=n) - 1
        nu = rng.normal(0.0, lam, size=(K, p))
        state = LatentState(k_star=k_star, nu=nu, eps_row=eps, z=z)
        refined = k_star + K * (eps < 0)
        pair = PartitionPair(rows=Partition.from_labels(refined, 2 * K))
    else:
        L = spec.L
        l_star = rng.integers(0, L, size=p)
        eps_r = 2 * rng.integers(0, 2, size=n) - 1
        eps_c = 2 * rng.integers(0, 2, size=p) - 1
        nu = rng.normal(0.0, lam, size=(K, L))
        state = LatentState(k_star=k_star, nu=nu, l_star=l_star,
                            eps_row=eps_r, eps_col=eps_c)
        rows = Partition.from_labels(k_star + K * (eps_r < 0), 2 * K)
        cols = Partition.from_labels(l_star + L * (eps_c < 0), 2 * L)
        pair = PartitionPair(rows=rows, cols=cols)

    X = signal(spec, state)
    Y = X + rng.normal(0.0, sig, size=(n, p))
    return state, ObservationPair(X=X, Y=Y), pair


def separation(means: np.ndarray, sigma2: float = 1.0) -> float:
    """Delta^2 = min_{k != l} ||mu_k - mu_l||^2 / (2 sigma^2) over mean rows."""
    means = np.asarray(means, dtype=float)
    if means.ndim != 2 or means.shape[0] < 2:
        raise DegenerateError("separation needs at least 2 mean vectors")
    best = np.inf
    for a in range(means.shape[0]):
        d = means[a + 1:] - means[a]
        if len(d):
            best = min(best, float(np.min(np.sum(d * d, axis=1))))
    return best / (2.0 * float(sigma2))


def bicluster_separations(mu: np.ndarray, n: int, p: int, sigma2: float = 1.0):
    """(Delta_r^2, Delta_c^2) for a K x L block-mean matrix.

    Delta_r^2 = (p/L) min_{k != k'} ||mu_k: - mu_k':||^2 / (2 sigma^2) and the
    column analogue with n/K.
    """
    mu = np.asarray(mu, dtype=float)
    K, L = mu.shape
    if K < 2 or L < 2:
        raise DegenerateError("need at least 2 row and 2 column groups")
    dr = (p / L) * separation(mu, sigma2)
    dc = (n / K) * separation(mu.T, sigma2)
    return dr, dc


def group_means(X: np.ndarray, part: Partition) -> np.ndarray:
    """Mean row per nonempty group; empty groups are skipped."""
    X = np.asarray(X, dtype=float)
    rows = [np.mean(X[list(g)], axis=0) for g in part.groups if g]
    if len(rows) < 2:
        raise DegenerateError("fewer than 2 nonempty groups")
    return np.vstack(rows)


def realized_separation(X: np.ndarray, part: Partition, sigma2: float = 1.0) -> float:
    """Empirical Delta^2 of a draw: separation of the group-mean rows of X."""
    return separation(group_means(X, part), sigma2)


def estimate_sigma2(Y: np.ndarray) -> float:
    """Median-absolute-deviation plug-in for sigma^2 (harness-only fallback;
    the estimators themselves assume sigma^2 known, as in the analysis)."""
    Y = np.asarray(Y, dtype=float)
    med = np.median(Y)
    mad = np.median(np.abs(Y - med))
    return float((mad / 0.6744897501960817) ** 2)
