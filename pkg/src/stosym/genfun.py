"""Generating-function coefficient series for stochastic Hamiltonian systems.

For a system with Hamiltonians H_0 (drift) and H_1..H_m (noise), the type-one
generating function of its stochastic flow expands as a series over iterated
Stratonovich integrals,

    S(P, q, t) = sum_alpha G_alpha(P, q) * J_alpha(t),

and the coefficients satisfy a recursion over splittings of the index with the
final entry removed: for alpha = (i_1, ..., i_{l-1}, r) with l >= 2,

    G_alpha = sum_{i=1}^{l-1} (1/i!) sum_{k_1..k_i}
              d^i H_r / dq_{k_1}..dq_{k_i} *
              sum_{splits} dG_{alpha_1}/dp_{k_1} ... dG_{alpha_i}/dp_{k_i},

where the split sum runs over ordered assignments of the l-1 leading entries
to i non-empty subwords (preserving relative order), which is the same as
counting each subword tuple with the multiplicity of the full prefix in their
interleaving multiset.  The base case is G_(r) = H_r.

A weak scheme of order k keeps, after rewriting in iterated Ito integrals,
exactly the terms with index length <= k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterator, Literal, Mapping, Sequence

from .multiindex import MultiIndex, mi
from .symexpr import (
    Const,
    Expr,
    ExprError,
    diff,
    free_symbols,
    render,
    simplify,
    zero_check,
)

MAX_SERIES_LEN = 4


class DerivationError(Exception):
    pass


@dataclass(frozen=True)
class HamiltonianSystem:
    """Phase dimension d per variable, m driving noises, Hamiltonians H_0..H_m."""

    d: int
    m: int
    hamiltonians: tuple[Expr, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("phase dimension d must be >= 1")
        if self.m < 0:
            raise ValueError("noise count m must be >= 0")
        if len(self.hamiltonians) != self.m + 1:
            raise ValueError(
                f"expected {self.m + 1} Hamiltonians (drift plus {self.m} noises), "
                f"got {len(self.hamiltonians)}"
            )
        allowed = set(self.p_names) | set(self.q_names) | set(self.params)
        for j, h in enumerate(self.hamiltonians):
            extra = free_symbols(h) - allowed
            if extra:
                raise ValueError(
                    f"H_{j} uses undeclared symbols {sorted(extra)}; "
                    f"declare them as parameters or phase variables"
                )

    @property
    def p_names(self) -> tuple[str, ...]:
        if self.d == 1:
            return ("p",)
        return tuple(f"p{k+1}" for k in range(self.d))

    @property
    def q_names(self) -> tuple[str, ...]:
        if self.d == 1:
            return ("q",)
        return tuple(f"q{k+1}" for k in range(self.d))

    def index(self, entries: Sequence[int]) -> MultiIndex:
        return mi(entries, self.m)


def all_indices(m: int, max_len: int, min_len: int = 1) -> Iterator[MultiIndex]:
    """All words over {0..m} with min_len <= length <= max_len, in order."""
    for length in range(min_len, max_len + 1):
        for entries in product(range(m + 1), repeat=length):
            yield mi(entries, m)


def _ordered_splits(entries: tuple[int, ...], blocks: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Ordered assignments of positions to `blocks` non-empty subwords.

    Positions keep their relative order inside each block, which makes
    duplicate entries distinguishable exactly as if they had been relabelled.
    """
    n = len(entries)
    for assignment in product(range(blocks), repeat=n):
        if len(set(assignment)) != blocks:
            continue
        words = tuple(
            tuple(entries[i] for i in range(n) if assignment[i] == b)
            for b in range(blocks)
        )
        yield words


def duplicate_split(alpha: MultiIndex) -> tuple[str, ...]:
    """Relabelling plan for repeated entries, e.g. (1,1,0) -> ('1a','1b','0').

    Entries occurring once keep their bare name; duplicates get letter
    suffixes in order of appearance.  The split enumeration works on
    positions, which realizes this relabelling implicitly; the labels only
    appear in derivation reports.
    """
    seen: dict[int, int] = {}
    total = {e: alpha.entries.count(e) for e in alpha.entries}
    labels = []
    for e in alpha.entries:
        if total[e] == 1:
            labels.append(str(e))
        else:
            suffix = chr(ord("a") + seen.get(e, 0))
            seen[e] = seen.get(e, 0) + 1
            labels.append(f"{e}{suffix}")
    return tuple(labels)


class _Derivation:
    """Memoized coefficient computation for one system."""

    def __init__(self, sys: HamiltonianSystem):
        self.sys = sys
        self._g: dict[tuple[int, ...], Expr] = {}
        self._h_deriv: dict[tuple[int, tuple[int, ...]], Expr] = {}
        self._g_dp: dict[tuple[tuple[int, ...], int], Expr] = {}

    def h_deriv(self, r: int, qs: tuple[int, ...]) -> Expr:
        """d^i H_r / dq_{k_1}..dq_{k_i} with qs the sorted slot tuple."""
        key = (r, qs)
        if key not in self._h_deriv:
            e = self.sys.hamiltonians[r]
            for k in qs:
                e = diff(e, self.sys.q_names[k])
            self._h_deriv[key] = e
        return self._h_deriv[key]

    def g(self, alpha: MultiIndex) -> Expr:
        key = alpha.entries
        if key in self._g:
            return self._g[key]
        if len(alpha) == 0:
            raise DerivationError("coefficients are indexed by non-empty words")
        if len(alpha) == 1:
            out = simplify(self.sys.hamiltonians[alpha.entries[0]])
        else:
            r = alpha.last
            rest = alpha.drop_last().entries
            d = self.sys.d
            total: Expr = Const(0.0)
            for i in range(1, len(rest) + 1):
                weight = Const(1.0 / math.factorial(i))
                for words in _ordered_splits(rest, i):
                    for ks in product(range(d), repeat=i):
                        term: Expr = self.h_deriv(r, tuple(sorted(ks)))
                        for word, k in zip(words, ks):
                            term = term * self.g_dp(mi(word, self.sys.m), k)
                        total = total + weight * term
            out = simplify(total)
        self._g[key] = out
        return out

    def g_dp(self, alpha: MultiIndex, k: int) -> Expr:
        key = (alpha.entries, k)
        if key not in self._g_dp:
            self._g_dp[key] = diff(self.g(alpha), self.sys.p_names[k])
        return self._g_dp[key]


def g_coefficient(sys: HamiltonianSystem, alpha: MultiIndex) -> Expr:
    """Series coefficient for one index, simplified."""
    if len(alpha) < 1:
        raise DerivationError("coefficients are indexed by non-empty words")
    if alpha.m != sys.m:
        raise DerivationError(f"index over alphabet 0..{alpha.m} but system has m={sys.m}")
    return _Derivation(sys).g(alpha)


Basis = Literal["stratonovich", "ito"]


@dataclass(frozen=True)
class GenFunSeries:
    """Truncated coefficient series in one integral basis.

    ``terms`` maps every retained index to its coefficient; vanishing
    coefficients are kept (flagged by :meth:`zero_flags`) so reports list the
    full table.
    """

    system: HamiltonianSystem
    basis: Basis
    terms: Mapping[MultiIndex, Expr]
    truncation: str
    max_len: int

    def zero_flags(self) -> dict[MultiIndex, bool]:
        return {a: zero_check(e).zero for a, e in self.terms.items()}

    def indices(self) -> list[MultiIndex]:
        return sorted(self.terms, key=lambda a: (len(a), a.entries))


def series(sys: HamiltonianSystem, max_len: int) -> GenFunSeries:
    """Stratonovich-basis series with every index of length <= max_len."""
    if max_len < 1:
        raise DerivationError("max_len must be >= 1")
    if max_len > MAX_SERIES_LEN:
        raise DerivationError(
            f"max_len {max_len} exceeds cap {MAX_SERIES_LEN}; the split enumeration "
            "grows factorially and nothing downstream needs longer indices"
        )
    deriv = _Derivation(sys)
    terms = {alpha: deriv.g(alpha) for alpha in all_indices(sys.m, max_len)}
    return GenFunSeries(
        system=sys,
        basis="stratonovich",
        terms=terms,
        truncation=f"all indices of length <= {max_len}",
        max_len=max_len,
    )


def stratonovich_to_ito(alpha: MultiIndex) -> dict[MultiIndex, Fraction]:
    """Expand one iterated Stratonovich integral over iterated Ito integrals.

    Recursion on the last letter: J_alpha equals the Ito integral of J with
    the last letter appended, plus, when the two trailing letters are equal
    and nonzero, half the time-integral of J with both removed.
    """
    if len(alpha) <= 1:
        return {alpha: Fraction(1)}
    head = alpha.drop_last()
    out: dict[MultiIndex, Fraction] = {}
    for idx, c in stratonovich_to_ito(head).items():
        idx2 = idx.append(alpha.last)
        out[idx2] = out.get(idx2, Fraction(0)) + c
    if alpha.last == alpha.entries[-2] and alpha.last != 0:
        for idx, c in stratonovich_to_ito(head.drop_last()).items():
            idx2 = idx.append(0)
            out[idx2] = out.get(idx2, Fraction(0)) + c / 2
    return out


def to_ito_truncation(s: GenFunSeries, weak_order: int) -> GenFunSeries:
    """Ito-basis series truncated for a weak scheme of the given order.

    Every Stratonovich term is rewritten in the Ito basis and contributions
    to indices of length <= weak_order are kept.  The source series must
    extend at least one length beyond the target order so that the repeated
    noise-pair corrections fold down (for order 1 that is the half of each
    G_(r,r) landing on the time index); supplying length 2*weak_order makes
    the fold-down exhaustive.
    """
    if weak_order not in (1, 2):
        raise DerivationError("weak order must be 1 or 2")
    if s.basis != "stratonovich":
        raise DerivationError(f"expected a stratonovich-basis series, got {s.basis}")
    if s.max_len < weak_order + 1:
        raise DerivationError(
            f"source series of max length {s.max_len} cannot fold corrections "
            f"into a weak order {weak_order} truncation; need at least {weak_order + 1}"
        )
    acc: dict[MultiIndex, Expr] = {
        alpha: Const(0.0) for alpha in all_indices(s.system.m, weak_order)
    }
    for alpha, g in s.terms.items():
        for idx, c in stratonovich_to_ito(alpha).items():
            if len(idx) <= weak_order:
                acc[idx] = acc[idx] + Const(float(c)) * g
    terms = {idx: simplify(e) for idx, e in acc.items()}
    return GenFunSeries(
        system=s.system,
        basis="ito",
        terms=terms,
        truncation=f"weak order {weak_order}: ito indices of length <= {weak_order}",
        max_len=weak_order,
    )


def weak_scheme_series(sys: HamiltonianSystem, weak_order: int) -> GenFunSeries:
    """Stratonovich derivation plus Ito truncation in one call."""
    return to_ito_truncation(series(sys, min(2 * weak_order, MAX_SERIES_LEN)), weak_order)


def derivation_report(s: GenFunSeries) -> str:
    """One line per index: ``alpha; basis; coefficient; is_zero``."""
    lines = []
    for alpha in s.indices():
        e = s.terms[alpha]
        z = zero_check(e)
        lines.append(f"{alpha}; {s.basis}; {render(e)}; {'zero' if z.zero else 'nonzero'}")
    return "\n".join(lines) + "\n"
