import math
from itertools import permutations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stosym.multiindex import (
    IndexMultiset,
    MultiIndex,
    lambda_multi,
    lambda_pair,
    mi,
    shuffle_oracle,
    shuffle_total,
    tau_count,
    zero_deletions,
    zero_run,
)

M = 2


def w(*entries, m=M):
    return mi(entries, m)


def test_length():
    assert len(w(0, 1)) == 2
    assert len(w(1)) == 1
    assert len(w(1, 1, 1, 1, m=1)) == 4


def test_entry_validation():
    with pytest.raises(ValueError):
        mi((3,), 2)
    with pytest.raises(ValueError):
        mi((0, -1), 2)


def test_drop_last():
    assert w(0, 1).drop_last() == w(0)
    assert w(1, 1, 0).drop_last() == w(1, 1)
    assert w(2).drop_last() == mi((), M)
    with pytest.raises(ValueError):
        mi((), M).drop_last()


def test_concat():
    assert w(1).concat(w(2)) == w(1, 2)
    assert w(0, 1).concat(w(0)) == w(0, 1, 0)
    assert mi((), M).concat(w(1)) == w(1)
    with pytest.raises(ValueError):
        w(1).concat(mi((1,), 1))


def test_rendering():
    assert str(w(0, 1, 1)) == "(0,1,1)"
    assert str(mi((), M)) == "()"


def test_lambda_pair_singletons():
    assert lambda_pair(w(1), w(2)) == IndexMultiset([w(1, 2), w(2, 1)])


def test_lambda_pair_identical_letters():
    out = lambda_pair(w(0), w(0))
    assert out == IndexMultiset({w(0, 0): 2})


def test_lambda_pair_one_against_two():
    out = lambda_pair(w(0), w(1, 1))
    assert out == IndexMultiset([w(0, 1, 1), w(1, 0, 1), w(1, 1, 0)])


def test_lambda_pair_rejects_empty():
    with pytest.raises(ValueError):
        lambda_pair(mi((), M), w(1))


def test_lambda_multi_repeat():
    assert lambda_multi([w(1), w(1)]) == IndexMultiset({w(1, 1): 2})


def test_lambda_multi_three_letters():
    out = lambda_multi([w(0), w(1), w(2)])
    expected = IndexMultiset(mi(p, M) for p in permutations((0, 1, 2)))
    assert out == expected


def test_lambda_multi_two_is_pair():
    assert lambda_multi([w(1), w(2)]) == lambda_pair(w(1), w(2))
    with pytest.raises(ValueError):
        lambda_multi([w(1)])


def test_tau_count_base_cases():
    assert tau_count(w(0, 1), 1, w(1)) == 1
    assert tau_count(w(1, 0), 1, w(1)) == 1
    assert tau_count(w(1, 1), 1, w(1)) == 0
    assert tau_count(w(1), 0, w(1)) == 1
    assert tau_count(w(0), 0, w(1)) == 0


def test_tau_count_two_zeros():
    # the zeros come from a single word, so each placement of the 1 arises once
    assert tau_count(w(0, 0, 1), 2, w(1)) == 1
    assert tau_count(w(0, 1, 0), 2, w(1)) == 1
    assert tau_count(w(1, 0, 0), 2, w(1)) == 1


def test_zero_deletions_match_tau():
    for beta in [w(0, 0), w(0, 1), w(1, 1, 0), w(0, 1, 0, 2)]:
        for k in range(len(beta)):
            table = zero_deletions(beta, k)
            for alpha, count in table.items():
                assert count == tau_count(beta, k, alpha)
            assert sum(table.values()) == math.comb(beta.entries.count(0), k)


def test_shuffle_oracle_examples():
    assert shuffle_oracle([w(1), w(2)]) == IndexMultiset([w(1, 2), w(2, 1)])
    assert shuffle_oracle([w(0), w(0)]) == IndexMultiset({w(0, 0): 2})
    assert shuffle_oracle([w(1, 2), w(0)]) == IndexMultiset(
        [w(0, 1, 2), w(1, 0, 2), w(1, 2, 0)]
    )


def test_shuffle_oracle_cap():
    with pytest.raises(ValueError):
        shuffle_oracle([mi((1,) * 6, 1), mi((1,) * 6, 1)])


words = st.lists(st.integers(min_value=0, max_value=M), min_size=1, max_size=4).map(
    lambda es: mi(es, M)
)


@settings(max_examples=200, deadline=None)
@given(words, words)
def test_lambda_pair_matches_oracle(a1, a2):
    assert lambda_pair(a1, a2) == shuffle_oracle([a1, a2])


@settings(max_examples=200, deadline=None)
@given(words, words)
def test_lambda_pair_total_is_binomial(a1, a2):
    assert lambda_pair(a1, a2).total() == shuffle_total(a1, a2)


@settings(max_examples=200, deadline=None)
@given(words, words)
def test_lambda_pair_conserves_letters(a1, a2):
    pooled = sorted(a1.entries + a2.entries)
    n = len(a1) + len(a2)
    for beta, _ in lambda_pair(a1, a2).items():
        assert len(beta) == n
        assert sorted(beta.entries) == pooled


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(min_value=0, max_value=M), min_size=1, max_size=2), min_size=2, max_size=3))
def test_lambda_multi_argument_order_invariant(raw):
    ws = [mi(es, M) for es in raw]
    base = lambda_multi(ws)
    for perm in permutations(ws):
        assert lambda_multi(list(perm)) == base


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(min_value=0, max_value=M), min_size=1, max_size=2), min_size=2, max_size=3))
def test_lambda_multi_matches_oracle(raw):
    ws = [mi(es, M) for es in raw]
    assert lambda_multi(ws) == shuffle_oracle(ws)


def test_multiset_equality_independent_of_insertion_order():
    a = IndexMultiset([w(1, 2), w(2, 1), w(1, 2)])
    b = IndexMultiset({w(2, 1): 1, w(1, 2): 2})
    assert a == b
    assert a.support() == [w(1, 2), w(2, 1)]


def test_zero_run():
    assert zero_run(3, M) == w(0, 0, 0)
    assert zero_run(0, M) == mi((), M)
