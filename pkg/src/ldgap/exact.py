"""Exact combinatorial primitives: rational-with-lambda-power scalars, integer
matrices viewed as multisets of cells, set partitions, pairings, Mobius and
Fubini numbers.

Conventions
-----------
A nonnegative integer matrix alpha is identified with the multiset of cells
(i, j) containing alpha_ij copies of cell (i, j).  Derived statistics:

    total(alpha)  = sum of all entries        (the multiset cardinality),
    n_rows(alpha) = number of nonzero rows,
    r_cols(alpha) = number of nonzero columns.

All scalar values produced by the cumulant machinery are exact rationals
multiplied by an integer power of the mean scale lambda, carried symbolically.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial

from .errors import ParameterError, ResourceGuardError

SET_PARTITION_GUARD = 10  # Bell(10) = 115975
PAIRING_GUARD = 12

Cell = tuple[int, int]


@dataclass(frozen=True)
class ExactScalar:
    """An exact rational coefficient times lambda**lambda_power.

    Addition is only defined between scalars of equal power (or with a zero
    side); mixing powers is a hard error rather than a silent coercion.
    """

    coeff: Fraction
    lambda_power: int = 0

    def __post_init__(self):
        if self.lambda_power < 0:
            raise ParameterError("lambda_power must be nonnegative")
        if self.coeff == 0 and self.lambda_power != 0:
            # canonical zero
            object.__setattr__(self, "lambda_power", 0)

    @staticmethod
    def zero() -> "ExactScalar":
        return ExactScalar(Fraction(0), 0)

    @staticmethod
    def of(coeff, lambda_power: int = 0) -> "ExactScalar":
        return ExactScalar(Fraction(coeff), lambda_power)

    @property
    def is_zero(self) -> bool:
        return self.coeff == 0

    def __add__(self, other: "ExactScalar") -> "ExactScalar":
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        if self.lambda_power != other.lambda_power:
            raise ParameterError(
                f"cannot add lambda^{self.lambda_power} to lambda^{other.lambda_power}"
            )
        return ExactScalar(self.coeff + other.coeff, self.lambda_power)

    def __neg__(self) -> "ExactScalar":
        return ExactScalar(-self.coeff, self.lambda_power)

    def __sub__(self, other: "ExactScalar") -> "ExactScalar":
        return self + (-other)

    def __mul__(self, other) -> "ExactScalar":
        if isinstance(other, ExactScalar):
            return ExactScalar(self.coeff * other.coeff, self.lambda_power + other.lambda_power)
        return ExactScalar(self.coeff * Fraction(other), self.lambda_power)

    __rmul__ = __mul__

    def scaled_power(self, extra: int) -> "ExactScalar":
        if self.is_zero:
            return self
        return ExactScalar(self.coeff, self.lambda_power + extra)

    def evaluate(self, lambda2) -> float:
        """Numeric value at lambda = sqrt(lambda2)."""
        lam2 = float(lambda2)
        if lam2 < 0:
            raise ParameterError("lambda2 must be nonnegative")
        if self.is_zero:
            return 0.0
        if self.lambda_power % 2 == 0:
            return float(self.coeff) * lam2 ** (self.lambda_power // 2)
        return float(self.coeff) * lam2 ** (self.lambda_power / 2.0)

    def evaluate_exact(self, lambda2: Fraction) -> Fraction:
        """Exact value at a rational lambda**2 (requires an even power)."""
        if self.is_zero:
            return Fraction(0)
        if self.lambda_power % 2:
            raise ParameterError("odd lambda power has no exact rational value")
        return self.coeff * Fraction(lambda2) ** (self.lambda_power // 2)

    def __repr__(self):
        if self.lambda_power == 0:
            return f"{self.coeff}"
        return f"{self.coeff}·λ^{self.lambda_power}"


class MultiIndex:
    """A nonnegative integer n x p matrix alpha viewed as a multiset of cells."""

    __slots__ = ("cells", "_positions")

    def __init__(self, cells):
        """cells: mapping (i, j) -> count, or iterable of ((i, j), count)."""
        if hasattr(cells, "items"):
            items = cells.items()
        else:
            items = cells
        norm = {}
        for (i, j), c in items:
            c = int(c)
            if c < 0:
                raise ParameterError("multi-index entries must be nonnegative")
            if c:
                norm[(int(i), int(j))] = norm.get((int(i), int(j)), 0) + c
        self.cells: tuple[tuple[Cell, int], ...] = tuple(sorted(norm.items()))
        self._positions = None

    @staticmethod
    def from_array(a) -> "MultiIndex":
        return MultiIndex(
            {(i, j): int(v) for (i, row) in enumerate(a) for (j, v) in enumerate(row) if v}
        )

    @staticmethod
    def from_positions(pos) -> "MultiIndex":
        d = {}
        for ij in pos:
            d[ij] = d.get(ij, 0) + 1
        return MultiIndex(d)

    def to_array(self, n: int, p: int):
        a = [[0] * p for _ in range(n)]
        for (i, j), c in self.cells:
            a[i][j] = c
        return a

    @property
    def total(self) -> int:
        return sum(c for _, c in self.cells)

    @property
    def supp_rows(self) -> tuple[int, ...]:
        return tuple(sorted({i for (i, _), _ in self.cells}))

    @property
    def supp_cols(self) -> tuple[int, ...]:
        return tuple(sorted({j for (_, j), _ in self.cells}))

    @property
    def n_rows(self) -> int:
        """#alpha: number of nonzero rows."""
        return len(self.supp_rows)

    @property
    def r_cols(self) -> int:
        """r_alpha: number of nonzero columns."""
        return len(self.supp_cols)

    def row_mass(self, i: int) -> int:
        return sum(c for (r, _), c in self.cells if r == i)

    def col_mass(self, j: int) -> int:
        return sum(c for (_, cj), c in self.cells if cj == j)

    def factorial(self) -> int:
        """alpha! = prod of entry factorials."""
        out = 1
        for _, c in self.cells:
            out *= factorial(c)
        return out

    def positions(self) -> tuple[Cell, ...]:
        """The multiset as a sorted tuple of cells with repetition."""
        if self._positions is None:
            pos = []
            for ij, c in self.cells:
                pos.extend([ij] * c)
            self._positions = tuple(pos)
        return self._positions

    def __eq__(self, other):
        return isinstance(other, MultiIndex) and self.cells == other.cells

    def __hash__(self):
        return hash(self.cells)

    def __repr__(self):
        if not self.cells:
            return "MultiIndex(0)"
        body = ",".join(f"({i},{j}):{c}" for (i, j), c in self.cells)
        return f"MultiIndex({body})"


SetPartition = tuple[tuple[int, ...], ...]


def _gen_partitions(elements: list[int]):
    if not elements:
        yield []
        return
    first, rest = elements[0], elements[1:]
    for part in _gen_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


@lru_cache(maxsize=None)
def set_partitions(ground_size: int) -> tuple[SetPartition, ...]:
    """All set partitions of {0, ..., ground_size-1}, each once, fixed order."""
    if ground_size < 0:
        raise ParameterError("ground_size must be nonnegative")
    if ground_size > SET_PARTITION_GUARD:
        raise ResourceGuardError(
            f"set-partition enumeration capped at ground size {SET_PARTITION_GUARD}"
        )
    out = []
    for part in _gen_partitions(list(range(ground_size))):
        out.append(tuple(tuple(sorted(b)) for b in sorted(part, key=lambda b: b[0])))
    return tuple(out)


def enumerate_set_partitions(ground_size: int) -> list[SetPartition]:
    return list(set_partitions(ground_size))


def mobius_coefficient(partition_or_size) -> int:
    """m(pi) = (-1)^(|pi|-1) (|pi|-1)! on the partition lattice."""
    k = partition_or_size if isinstance(partition_or_size, int) else len(partition_or_size)
    if k < 1:
        raise ParameterError("partition must have at least one block")
    return (-1) ** (k - 1) * factorial(k - 1)


def bell_number(n: int) -> int:
    return len(set_partitions(n))


def enumerate_pairings(alpha: MultiIndex) -> list[tuple[tuple[Cell, Cell], ...]]:
    """All partitions of the positions of alpha into blocks of size 2.

    Positions of a repeated cell are distinguishable while generating, so a
    decomposition that uses a repeated cell twice appears with the multiplicity
    dictated by the partition lattice (the only quotient taken is over the l!
    orderings of the pairs).  Returns, per pairing, the tuple of pairs, each
    pair sorted and the tuple sorted.  Empty list for odd total mass.
    """
    d = alpha.total
    if d > PAIRING_GUARD:
        raise ResourceGuardError(f"pairing enumeration capped at |alpha| = {PAIRING_GUARD}")
    if d % 2:
        return []
    pos = list(alpha.positions())

    def match(idx: list[int]):
        if not idx:
            yield []
            return
        a = idx[0]
        for t in range(1, len(idx)):
            b = idx[t]
            rest = idx[1:t] + idx[t + 1:]
            for m in match(rest):
                yield [(a, b)] + m

    out = []
    for m in match(list(range(d))):
        pairing = tuple(sorted(tuple(sorted((pos[a], pos[b]))) for a, b in m))
        out.append(pairing)
    return out


def pairing_to_multiindices(pairing) -> list[MultiIndex]:
    """View one pairing as its decomposition beta_1, ..., beta_l with every
    |beta_s| = 2 and sum beta_s recovering the paired multiset."""
    return [MultiIndex.from_positions(pair) for pair in pairing]


@lru_cache(maxsize=None)
def fubini_number(l: int) -> int:
    """Ordered Bell number via the binomial recurrence; checks f_l <= 3 l! 2^l."""
    if l < 0:
        raise ParameterError("l must be nonnegative")
    if l > 12:
        raise ResourceGuardError("fubini_number capped at l = 12")
    if l == 0:
        return 1
    from math import comb

    f = sum(comb(l, k) * fubini_number(l - k) for k in range(1, l + 1))
    assert f <= 3 * factorial(l) * 2 ** l
    return f


def double_factorial(m: int) -> int:
    """(m-1)!! convention: double_factorial(m) = m!! ; used as (m-1)!! by callers."""
    out = 1
    while m > 1:
        out *= m
        m -= 2
    return out


def gaussian_moment_coeff(m: int) -> int:
    """E[nu^m] / lambda^m for nu ~ N(0, lambda^2): (m-1)!! for even m, else 0."""
    if m % 2:
        return 0
    return double_factorial(m - 1)
