import numpy as np
import pytest

from stosym.genfun import (
    DerivationError,
    derivation_report,
    duplicate_split,
    g_coefficient,
    series,
    stratonovich_to_ito,
    to_ito_truncation,
    weak_scheme_series,
)
from stosym.multiindex import mi
from stosym.symexpr import Const, is_zero, parse, simplify
from stosym.systems import oscillator, synchrotron


def S(text):
    return simplify(parse(text))


@pytest.fixture(scope="module")
def osc():
    return oscillator(sigma=0.5)


@pytest.fixture(scope="module")
def synch():
    return synchrotron()


def test_base_case_returns_noise_hamiltonian(osc, synch):
    for sys in (osc, synch):
        for r in range(sys.m + 1):
            assert g_coefficient(sys, sys.index([r])) == simplify(sys.hamiltonians[r])


OSC_GOLDEN = {
    (0,): "(P^2+q^2)/2",
    (1,): "-sigma*q",
    (1, 1): "0",
    (0, 1): "-sigma*P",
    (1, 0): "0",
    (1, 1, 1): "0",
    (0, 0): "P*q",
}


def test_oscillator_golden_set(osc):
    for entries, expected in OSC_GOLDEN.items():
        got = g_coefficient(osc, osc.index(entries))
        assert got == S(expected), f"index {entries}: got {got}"


def test_synchrotron_golden_set(synch):
    assert g_coefficient(synch, synch.index([0])) == S("-omega^2*cos(q) + p^2/2")
    assert g_coefficient(synch, synch.index([1])) == S("sigma1*sin(q)")
    assert g_coefficient(synch, synch.index([2])) == S("-sigma2*cos(q)")
    assert g_coefficient(synch, synch.index([1, 1])) == Const(0.0)
    assert g_coefficient(synch, synch.index([2, 2])) == Const(0.0)


def test_synchrotron_vanishing_longer_coefficients(synch):
    # every order-zero coefficient listed as vanishing in the worked tables
    zero_indices = [
        (1, 2), (2, 1),
        (1, 1, 1), (1, 1, 2), (1, 2, 1), (1, 2, 2),
        (2, 1, 1), (2, 1, 2), (2, 2, 1), (2, 2, 2),
        (1, 1, 0), (2, 2, 0), (1, 2, 0), (2, 1, 0),
    ]
    for entries in zero_indices:
        assert is_zero(g_coefficient(synch, synch.index(entries))), entries
    for entries in [(0, 1), (0, 2), (0, 1, 1), (0, 2, 2)]:
        assert not is_zero(g_coefficient(synch, synch.index(entries))), entries


def test_synchrotron_length_three_values(synch):
    assert g_coefficient(synch, synch.index([0, 1, 1])) == S("sigma1^2*cos(q)^2")
    # hand-derived: the second split contributes nothing because dG_2/dp = 0
    assert g_coefficient(synch, synch.index([0, 2, 2])) == S("sigma2^2*sin(q)^2")


def test_quartic_coefficient_vanishes(osc):
    assert is_zero(g_coefficient(osc, osc.index([1, 1, 1, 1])))


def test_empty_index_rejected(osc):
    with pytest.raises(DerivationError):
        g_coefficient(osc, osc.index([]))


def test_series_contents(osc, synch):
    s = series(osc, 2)
    assert len(s.terms) == 6
    assert s.terms[osc.index([0, 1])] == S("-sigma*P")
    flags = s.zero_flags()
    assert flags[osc.index([1, 0])] and not flags[osc.index([0, 0])]

    s1 = series(synch, 1)
    assert set(s1.terms) == {synch.index([r]) for r in range(3)}


def test_series_cap():
    with pytest.raises(DerivationError):
        series(oscillator(), 5)
    with pytest.raises(DerivationError):
        series(oscillator(), 0)


def test_duplicate_split():
    assert duplicate_split(mi((1, 1, 0), 1)) == ("1a", "1b", "0")
    assert duplicate_split(mi((0, 1), 1)) == ("0", "1")
    assert duplicate_split(mi((1, 1, 1, 1), 1)) == ("1a", "1b", "1c", "1d")


def test_stratonovich_to_ito_pairs():
    conv = stratonovich_to_ito(mi((1, 1), 1))
    assert conv == {mi((1, 1), 1): 1, mi((0,), 1): 0.5}
    conv = stratonovich_to_ito(mi((0, 1), 1))
    assert conv == {mi((0, 1), 1): 1}
    conv = stratonovich_to_ito(mi((1, 1, 1), 1))
    assert conv == {mi((1, 1, 1), 1): 1, mi((0, 1), 1): 0.5, mi((1, 0), 1): 0.5}


def test_ito_truncation_oscillator(osc):
    s = to_ito_truncation(series(osc, 2), 1)
    assert s.basis == "ito"
    # time coefficient picks up half of each repeated-noise pair
    g0 = g_coefficient(osc, osc.index([0]))
    g11 = g_coefficient(osc, osc.index([1, 1]))
    assert s.terms[osc.index([0])] == simplify(g0 + Const(0.5) * g11)
    assert s.terms[osc.index([1])] == S("-sigma*q")


def test_ito_truncation_synchrotron(synch):
    s = to_ito_truncation(series(synch, 2), 1)
    g0 = g_coefficient(synch, synch.index([0]))
    g11 = g_coefficient(synch, synch.index([1, 1]))
    g22 = g_coefficient(synch, synch.index([2, 2]))
    expected = simplify(g0 + Const(0.5) * g11 + Const(0.5) * g22)
    assert s.terms[synch.index([0])] == expected
    assert s.terms[synch.index([1])] == S("sigma1*sin(q)")
    assert s.terms[synch.index([2])] == S("-sigma2*cos(q)")


def test_ito_truncation_no_repeated_pairs(synch):
    # repeated-noise pairs vanish here, so the time coefficient is untouched
    s = to_ito_truncation(series(synch, 2), 1)
    assert s.terms[synch.index([0])] == g_coefficient(synch, synch.index([0]))


def test_ito_truncation_preconditions(osc):
    with pytest.raises(DerivationError):
        to_ito_truncation(series(osc, 1), 1)
    s = to_ito_truncation(series(osc, 2), 1)
    with pytest.raises(DerivationError):
        to_ito_truncation(s, 1)


def test_weak_scheme_series_shortcut(osc):
    s = weak_scheme_series(osc, 1)
    assert s.basis == "ito" and s.max_len == 1
    assert s.terms[osc.index([1])] == S("-sigma*q")


def test_report_format(osc):
    text = derivation_report(series(osc, 2))
    lines = text.strip().splitlines()
    assert len(lines) == 6
    assert lines[0].startswith("(0); stratonovich; ")
    assert lines[0].endswith("nonzero")
    assert any(line.startswith("(1,0); stratonovich; 0; zero") for line in lines)
