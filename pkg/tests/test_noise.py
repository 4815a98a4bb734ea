import math

import numpy as np
import pytest

from stosym.multiindex import mi
from stosym.noise import (
    GAUSSIAN_EXACT,
    WEAK2_DISCRETE,
    NoiseError,
    RngStream,
    integral_ensemble,
    moment_oracle,
    sample,
    sample_arrays,
    values_from_increments,
)


def idx(*entries, m=1):
    return mi(entries, m)


def test_time_index_is_exact():
    s = sample(0.3, 1, [idx(0)], rng=RngStream(1))
    assert s.values[idx(0)] == 0.3


def test_gaussian_increment_moments():
    h = 0.04
    n = 1_000_000
    vals = sample_arrays(h, 1, [idx(1)], GAUSSIAN_EXACT, RngStream(2).generator, n)[idx(1)]
    se_mean = math.sqrt(h / n)
    assert abs(vals.mean()) <= 3 * se_mean
    se_var = math.sqrt(2) * h / math.sqrt(n)
    assert abs((vals**2).mean() - h) <= 3 * se_var


def test_weak2_increment_moments():
    h = 0.04
    n = 1_000_000
    vals = sample_arrays(h, 1, [idx(1)], WEAK2_DISCRETE, RngStream(3).generator, n)[idx(1)]
    assert set(np.round(np.unique(vals), 12)) <= {0.0, round(math.sqrt(3 * h), 12), round(-math.sqrt(3 * h), 12)}
    assert abs(vals.mean()) <= 3 * math.sqrt(h / n)
    assert abs((vals**2).mean() - h) <= 3 * math.sqrt(2) * h / math.sqrt(n)
    assert abs((vals**4).mean() - 3 * h * h) <= 4 * 3 * h * h / math.sqrt(n) + 1e-12


def test_repeated_pair_identity_with_stub_increment():
    h = 0.25
    values = values_from_increments(h, 1, [idx(1, 1)], np.array([math.sqrt(h)]))
    assert values[idx(1, 1)] == 0.0


def test_fill_formulas():
    h = 0.1
    dw = np.array([0.3, -0.2])
    xi = {(1, 2): h, (2, 1): -h}
    needed = [idx(0, m=2), idx(0, 0, m=2), idx(1, m=2), idx(0, 1, m=2), idx(1, 0, m=2),
              idx(1, 2, m=2), idx(2, 1, m=2)]
    v = values_from_increments(h, 2, needed, dw, xi)
    assert v[idx(0, m=2)] == h
    assert v[idx(0, 0, m=2)] == h * h / 2
    assert v[idx(1, m=2)] == 0.3
    assert v[idx(0, 1, m=2)] == pytest.approx(0.5 * h * 0.3)
    assert v[idx(1, 0, m=2)] == pytest.approx(0.5 * h * 0.3)
    assert v[idx(1, 2, m=2)] == pytest.approx(0.5 * (0.3 * -0.2 - h))
    assert v[idx(2, 1, m=2)] == pytest.approx(0.5 * (-0.2 * 0.3 + h))
    # mixed pair values recombine to the pathwise product identity
    assert v[idx(1, 2, m=2)] + v[idx(2, 1, m=2)] == pytest.approx(0.3 * -0.2)


def test_sample_validation():
    with pytest.raises(NoiseError):
        sample(-0.1, 1, [idx(0)], rng=RngStream(1))
    with pytest.raises(NoiseError):
        sample(0.1, 1, [mi((1, 1, 1), 1)], rng=RngStream(1))


def test_reproducible_streams():
    a = [sample(0.1, 2, [idx(1, m=2), idx(1, 2, m=2)], rng=RngStream(7, 3)) for _ in range(1)]
    stream1 = RngStream(7, 3)
    stream2 = RngStream(7, 3)
    seq1 = [sample(0.1, 2, [idx(1, m=2), idx(1, 2, m=2)], rng=stream1).values for _ in range(5)]
    seq2 = [sample(0.1, 2, [idx(1, m=2), idx(1, 2, m=2)], rng=stream2).values for _ in range(5)]
    assert seq1 == seq2
    assert RngStream(7, 4).generator.normal() != RngStream(7, 3).generator.normal()
    del a


def test_oracle_time_integral_is_deterministic():
    est = moment_oracle([idx(0)], [1], h=0.01, substeps=200, samples=200, rng=RngStream(5))
    assert est.value == pytest.approx(0.01, rel=1e-12)
    assert est.stderr <= 1e-15


def test_oracle_variance_of_increment():
    est = moment_oracle([idx(1)], [2], h=0.01, substeps=200, samples=100_000, rng=RngStream(6))
    assert est.within(0.01)


def test_oracle_repeated_stratonovich_pair():
    est = moment_oracle([idx(1, 1)], [1], h=0.01, substeps=200, samples=100_000, rng=RngStream(8))
    assert est.within(0.005)


def test_oracle_odd_moments_vanish():
    for entries in [(1,), (0, 1), (1, 1, 1)]:
        est = moment_oracle([mi(entries, 1)], [1], h=0.01, substeps=150, samples=50_000,
                            rng=RngStream(hash(entries) % 2**32))
        assert est.within(0.0), entries


def test_oracle_caps():
    with pytest.raises(NoiseError):
        moment_oracle([idx(1)], [1], h=0.01, substeps=50, samples=100, rng=RngStream(1))
    with pytest.raises(NoiseError):
        moment_oracle([mi((1, 0, 1, 0, 1), 1)], [1], h=0.01, substeps=100, samples=100, rng=RngStream(1))
    with pytest.raises(NoiseError):
        moment_oracle([idx(1)], [1], h=0.01, substeps=10_000, samples=10_000_000, rng=RngStream(1))


def test_product_rule_identity():
    # products of iterated integrals expand over interleavings of the indices
    h, n = 0.01, 100_000
    gen = RngStream(11).generator
    ids = [idx(0), idx(1), idx(0, 1), idx(1, 0)]
    vals = integral_ensemble(ids, h, substeps=200, samples=n, gen=gen)
    for psi in [np.ones(n), vals[idx(1)]]:
        lhs = vals[idx(0)] * vals[idx(1)] * psi
        rhs = (vals[idx(0, 1)] + vals[idx(1, 0)]) * psi
        diff = lhs - rhs
        se = diff.std(ddof=1) / math.sqrt(n)
        assert abs(diff.mean()) <= max(3 * se, 1e-12)


def test_stratonovich_ito_conversion_identity():
    # the repeated Stratonovich pair equals the Ito pair plus half the time index
    h, n = 0.01, 100_000
    strat = integral_ensemble([idx(1, 1)], h, 200, n, RngStream(12).generator, stratonovich=True)
    ito = integral_ensemble([idx(1, 1), idx(0)], h, 200, n, RngStream(12).generator, stratonovich=False)
    lhs = strat[idx(1, 1)].mean()
    rhs = (ito[idx(1, 1)] + 0.5 * ito[idx(0)]).mean()
    se = math.hypot(strat[idx(1, 1)].std(ddof=1), ito[idx(1, 1)].std(ddof=1)) / math.sqrt(n)
    assert abs(lhs - rhs) <= 3 * se + 1e-12


def test_ensemble_batching_consistency():
    small = integral_ensemble([idx(1), idx(1, 1)], 0.04, 120, 500, RngStream(13).generator, batch=100)
    big = integral_ensemble([idx(1), idx(1, 1)], 0.04, 120, 500, RngStream(13).generator, batch=500)
    for k in small:
        np.testing.assert_allclose(small[k], big[k])
