"""Multi-indices of iterated stochastic integrals and their shuffle sets.

A multi-index is a finite word over the alphabet {0, ..., m}, where entry 0
labels integration against time and entries 1..m label the driving Wiener
processes.  Products of iterated integrals obey the shuffle relation: the
product over a family of indices expands as a sum over all interleavings of
the words, so the interleaving multisets (with multiplicity) are the basic
combinatorial object of the scheme-derivation machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Iterator, Mapping, Sequence

SHUFFLE_ORACLE_CAP = 10


@dataclass(frozen=True, order=True)
class MultiIndex:
    """Immutable word over {0, ..., m}; ordering is lexicographic on entries."""

    entries: tuple[int, ...]
    m: int = field(compare=False)

    def __post_init__(self):
        if self.m < 0:
            raise ValueError(f"noise count m must be >= 0, got {self.m}")
        for e in self.entries:
            if not (0 <= e <= self.m):
                raise ValueError(
                    f"index entry {e} outside alphabet 0..{self.m} in {self.entries}"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def __str__(self) -> str:
        return "(" + ",".join(str(e) for e in self.entries) + ")"

    @property
    def last(self) -> int:
        if not self.entries:
            raise ValueError("empty index has no last entry")
        return self.entries[-1]

    def drop_last(self) -> "MultiIndex":
        """The word with its final entry removed."""
        if not self.entries:
            raise ValueError("empty index has no last entry to drop")
        return MultiIndex(self.entries[:-1], self.m)

    def concat(self, other: "MultiIndex") -> "MultiIndex":
        if self.m != other.m:
            raise ValueError(f"cannot concatenate indices with m={self.m} and m={other.m}")
        return MultiIndex(self.entries + other.entries, self.m)

    def append(self, entry: int) -> "MultiIndex":
        return MultiIndex(self.entries + (entry,), self.m)


def mi(entries: Sequence[int], m: int) -> MultiIndex:
    return MultiIndex(tuple(entries), m)


def zero_run(k: int, m: int) -> MultiIndex:
    """The word consisting of k zeros."""
    return MultiIndex((0,) * k, m)


def length(a: MultiIndex) -> int:
    return len(a)


def drop_last(a: MultiIndex) -> MultiIndex:
    return a.drop_last()


def concat(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return a.concat(b)


class IndexMultiset:
    """Bag of multi-indices with positive integer multiplicities."""

    __slots__ = ("_counts",)

    def __init__(self, items: Iterable[MultiIndex] | Mapping[MultiIndex, int] = ()):
        counts: dict[MultiIndex, int] = {}
        if isinstance(items, Mapping):
            for idx, n in items.items():
                if n <= 0:
                    raise ValueError("multiplicities must be positive")
                counts[idx] = counts.get(idx, 0) + n
        else:
            for idx in items:
                counts[idx] = counts.get(idx, 0) + 1
        self._counts = counts

    def multiplicity(self, idx: MultiIndex) -> int:
        return self._counts.get(idx, 0)

    def total(self) -> int:
        return sum(self._counts.values())

    def support(self) -> list[MultiIndex]:
        return sorted(self._counts)

    def items(self) -> Iterator[tuple[MultiIndex, int]]:
        return iter(sorted(self._counts.items()))

    def add(self, idx: MultiIndex, n: int = 1) -> None:
        if n <= 0:
            raise ValueError("multiplicities must be positive")
        self._counts[idx] = self._counts.get(idx, 0) + n

    def update(self, other: "IndexMultiset", weight: int = 1) -> None:
        for idx, n in other._counts.items():
            self.add(idx, n * weight)

    def appended(self, entry: int) -> "IndexMultiset":
        """Concatenate a single letter onto every element, keeping multiplicities."""
        return IndexMultiset({idx.append(entry): n for idx, n in self._counts.items()})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndexMultiset):
            return NotImplemented
        return self._counts == other._counts

    def __len__(self) -> int:
        return len(self._counts)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.support())

    def __repr__(self) -> str:
        inner = ", ".join(f"{idx}: {n}" for idx, n in self.items())
        return "{" + inner + "}"


def lambda_pair(a1: MultiIndex, a2: MultiIndex) -> IndexMultiset:
    """Interleaving multiset of two words, by the four-case last-letter recursion.

    Base case for two single letters is the pair of both orderings; otherwise
    the last letter of either word is peeled off and appended to the
    interleavings of the remainder.  Multiplicities count the distinct
    derivations, e.g. two identical single letters interleave two ways.
    """
    if len(a1) == 0 or len(a2) == 0:
        raise ValueError("interleaving requires non-empty operands")
    if a1.m != a2.m:
        raise ValueError("operands must share the same noise count m")
    l1, l2 = len(a1), len(a2)
    if l1 == 1 and l2 == 1:
        return IndexMultiset([a1.concat(a2), a2.concat(a1)])
    if l1 == 1:
        out = lambda_pair(a1, a2.drop_last()).appended(a2.last)
        out.add(a2.concat(a1))
        return out
    if l2 == 1:
        out = lambda_pair(a1.drop_last(), a2).appended(a1.last)
        out.add(a1.concat(a2))
        return out
    out = lambda_pair(a1.drop_last(), a2).appended(a1.last)
    out.update(lambda_pair(a1, a2.drop_last()).appended(a2.last))
    return out


def lambda_multi(indices: Sequence[MultiIndex]) -> IndexMultiset:
    """Interleaving multiset of k >= 2 words, folded pairwise left to right."""
    if len(indices) < 2:
        raise ValueError("need at least two operands")
    acc = lambda_pair(indices[0], indices[1])
    for nxt in indices[2:]:
        folded = IndexMultiset()
        for beta, n in acc.items():
            folded.update(lambda_pair(beta, nxt), weight=n)
        acc = folded
    return acc


def tau_count(beta: MultiIndex, k: int, alpha: MultiIndex) -> int:
    """Multiplicity of beta among the interleavings of k zeros with alpha.

    For k = 0 the zero word is empty and the multiset is {alpha} itself.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return 1 if beta == alpha else 0
    return lambda_pair(zero_run(k, alpha.m), alpha).multiplicity(beta)


def zero_deletions(beta: MultiIndex, k: int) -> dict[MultiIndex, int]:
    """All words obtained from beta by deleting k zero entries, with counts.

    The count of each surviving word alpha equals tau_count(beta, k, alpha);
    used when assembling coefficient series over all source indices at once.
    """
    if k == 0:
        return {beta: 1}
    zero_pos = [i for i, e in enumerate(beta.entries) if e == 0]
    if k > len(zero_pos) or k >= len(beta):
        return {}
    out: dict[MultiIndex, int] = {}
    for chosen in combinations(zero_pos, k):
        kept = tuple(e for i, e in enumerate(beta.entries) if i not in chosen)
        alpha = MultiIndex(kept, beta.m)
        out[alpha] = out.get(alpha, 0) + 1
    return out


def shuffle_oracle(indices: Sequence[MultiIndex]) -> IndexMultiset:
    """Brute-force interleaving enumeration, independent of the recursion above.

    Enumerates every way of merging the words while preserving each word's
    internal order.  Guarded by a total-length cap of 10.
    """
    if len(indices) < 2:
        raise ValueError("need at least two operands")
    total = sum(len(a) for a in indices)
    if total > SHUFFLE_ORACLE_CAP:
        raise ValueError(f"total length {total} exceeds oracle cap {SHUFFLE_ORACLE_CAP}")
    ms = {a.m for a in indices}
    if len(ms) != 1:
        raise ValueError("operands must share the same noise count m")
    m = ms.pop()

    def merge(words: tuple[tuple[int, ...], ...]) -> Iterator[tuple[int, ...]]:
        if all(len(w) == 0 for w in words):
            yield ()
            return
        for i, w in enumerate(words):
            if w:
                rest = words[:i] + (w[1:],) + words[i + 1 :]
                for tail in merge(rest):
                    yield (w[0],) + tail

    out = IndexMultiset()
    for word in merge(tuple(a.entries for a in indices)):
        out.add(MultiIndex(word, m))
    return out


def shuffle_total(a1: MultiIndex, a2: MultiIndex) -> int:
    """Expected interleaving count: binomial(l1 + l2, l1)."""
    return math.comb(len(a1) + len(a2), len(a1))
