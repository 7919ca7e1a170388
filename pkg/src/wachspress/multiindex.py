"""Multi-index arithmetic and the combinatorics behind high-order derivative
expansions.

A multi-index is a plain ``tuple`` of non-negative ints of length ``d``; one
entry per coordinate direction. This module provides the order/factorial/
binomial algebra, the graded-lexicographic strict order ``prec``, subset
enumeration for Leibniz sums, and enumeration of the partition sets that the
multivariate Faa di Bruno formula sums over.

All functions are pure; enumeration order is graded-lexicographic so that
downstream outputs are byte-stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Sequence

MultiIndex = tuple[int, ...]

# Factorials above this total order are refused outright. Experiments never
# exceed |alpha| = 3; the cap just turns silent blow-ups into errors.
MAX_FACTORIAL_ORDER = 20


def as_multi_index(seq: Sequence[int]) -> MultiIndex:
    """Validate and normalize a sequence into a multi-index tuple."""
    idx = tuple(int(c) for c in seq)
    if len(idx) < 1:
        raise ValueError("multi-index must have length >= 1")
    if any(c < 0 for c in idx):
        raise ValueError(f"multi-index components must be >= 0, got {idx}")
    return idx


def order(alpha: MultiIndex) -> int:
    """Total order |alpha| = sum of components."""
    return sum(alpha)


def factorial(alpha: MultiIndex) -> int:
    """Componentwise factorial product alpha! = alpha_1! ... alpha_d!."""
    if order(alpha) > MAX_FACTORIAL_ORDER:
        raise OverflowError(
            f"multi-index factorial capped at total order {MAX_FACTORIAL_ORDER}, "
            f"got |alpha| = {order(alpha)}"
        )
    out = 1
    for c in alpha:
        out *= math.factorial(c)
    return out


def leq(beta: MultiIndex, alpha: MultiIndex) -> bool:
    """Componentwise beta <= alpha."""
    if len(beta) != len(alpha):
        raise ValueError("multi-indices must have equal length")
    return all(b <= a for b, a in zip(beta, alpha))


def sub(alpha: MultiIndex, beta: MultiIndex) -> MultiIndex:
    """Componentwise alpha - beta (requires beta <= alpha)."""
    if not leq(beta, alpha):
        raise ValueError(f"{beta} is not componentwise <= {alpha}")
    return tuple(a - b for a, b in zip(alpha, beta))


def binomial(alpha: MultiIndex, beta: MultiIndex) -> int:
    """Product of componentwise binomial coefficients C(alpha_i, beta_i)."""
    if not leq(beta, alpha):
        raise ValueError(f"binomial requires beta <= alpha, got {beta} vs {alpha}")
    out = 1
    for a, b in zip(alpha, beta):
        out *= math.comb(a, b)
    return out


def prec(beta: MultiIndex, alpha: MultiIndex) -> bool:
    """Strict graded-lexicographic order: smaller total order first, ties
    broken by the first differing component."""
    if len(beta) != len(alpha):
        raise ValueError("multi-indices must have equal length")
    return (order(beta), beta) < (order(alpha), alpha)


def enumerate_le(alpha: MultiIndex) -> list[MultiIndex]:
    """All beta with 0 <= beta <= alpha, in graded-lexicographic order.

    The count is prod(alpha_i + 1).
    """
    betas = product(*(range(a + 1) for a in alpha))
    return sorted(betas, key=lambda b: (order(b), b))


def graded_indices(d: int, max_order: int) -> list[MultiIndex]:
    """All multi-indices of length d with total order <= max_order, in
    graded-lexicographic order."""
    if d < 1 or max_order < 0:
        raise ValueError("need d >= 1 and max_order >= 0")
    out = [idx for idx in product(range(max_order + 1), repeat=d) if sum(idx) <= max_order]
    return sorted(out, key=lambda b: (order(b), b))


def unit(d: int, i: int) -> MultiIndex:
    """The i-th coordinate multi-index e_i."""
    return tuple(1 if j == i else 0 for j in range(d))


@dataclass(frozen=True)
class FdBTerm:
    """One term of a Faa di Bruno partition set: multiplicities k_1..k_s and
    strictly increasing (in ``prec``) non-zero indices l_1..l_s."""

    multiplicities: tuple[int, ...]
    indices: tuple[MultiIndex, ...]

    def __post_init__(self) -> None:
        k, ls = self.multiplicities, self.indices
        if len(k) != len(ls) or len(k) < 1:
            raise ValueError("need s >= 1 with one multiplicity per index")
        if any(ki < 1 for ki in k):
            raise ValueError("multiplicities must be >= 1")
        if any(order(l) == 0 for l in ls):
            raise ValueError("indices must be non-zero")
        for a, b in zip(ls, ls[1:]):
            if not prec(a, b):
                raise ValueError("indices must be strictly increasing in prec")

    @property
    def s(self) -> int:
        return len(self.multiplicities)

    @property
    def total_multiplicity(self) -> int:
        """sum k_i (the lambda this term was enumerated for)."""
        return sum(self.multiplicities)

    def weighted_index_sum(self) -> MultiIndex:
        """sum k_i * l_i (the beta this term was enumerated for)."""
        d = len(self.indices[0])
        acc = [0] * d
        for k, l in zip(self.multiplicities, self.indices):
            for j in range(d):
                acc[j] += k * l[j]
        return tuple(acc)


@lru_cache(maxsize=None)
def fdb_partitions(beta: MultiIndex, lam: int) -> tuple[FdBTerm, ...]:
    """Enumerate the partition set p(beta, lam): all (k_1..k_s; l_1..l_s)
    with 0 < l_1 < ... < l_s strictly increasing in ``prec``, sum k_i = lam and
    sum k_i l_i = beta, unioned over s = 1..|beta|.

    Enumeration is a recursive descent over candidate indices in ``prec``
    order; terms come out sorted by their index sequence, so the result is
    deterministic.
    """
    if order(beta) == 0:
        raise ValueError("beta must be non-zero")
    if not 1 <= lam <= order(beta):
        raise ValueError(f"need 1 <= lam <= |beta|, got lam={lam}, |beta|={order(beta)}")

    candidates = [l for l in enumerate_le(beta) if order(l) > 0]
    terms: list[FdBTerm] = []

    def extend(start: int, rem: tuple[int, ...], rem_lam: int,
               ks: tuple[int, ...], ls: tuple[MultiIndex, ...]) -> None:
        if rem_lam == 0:
            if all(r == 0 for r in rem):
                terms.append(FdBTerm(ks, ls))
            return
        for pos in range(start, len(candidates)):
            l = candidates[pos]
            if not all(li <= ri for li, ri in zip(l, rem)):
                continue
            k = 1
            nxt = tuple(r - li for r, li in zip(rem, l))
            while k <= rem_lam:
                extend(pos + 1, nxt, rem_lam - k, ks + (k,), ls + (l,))
                if not all(n >= li for n, li in zip(nxt, l)):
                    break
                nxt = tuple(n - li for n, li in zip(nxt, l))
                k += 1

    extend(0, beta, lam, (), ())
    return tuple(terms)
