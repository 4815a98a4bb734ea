import math

import numpy as np
import pytest

from stosym.integrator import (
    EulerMaruyamaControl,
    NumericalError,
    PhasePoint,
    SchemeMap,
    simulate,
    step,
    step_detailed,
    symplecticity_defect,
    weak_scheme,
)
from stosym.noise import RngStream, sample
from stosym.systems import kubo, oscillator, synchrotron


def noise_values(scheme, **by_entries):
    sys = scheme.system
    return {sys.index([int(c) for c in k]): v for k, v in by_entries.items()}


@pytest.fixture(scope="module")
def osc_scheme():
    return weak_scheme(oscillator(sigma=0.5), 1)


@pytest.fixture(scope="module")
def synch_scheme():
    return weak_scheme(synchrotron(omega=1.2, sigma1=0.3, sigma2=0.4), 1)


def test_oscillator_scheme_is_symplectic_euler(osc_scheme):
    h, dw, sigma = 0.05, 0.13, 0.5
    x = PhasePoint([0.2], [0.9])
    w = noise_values(osc_scheme, **{"0": h, "1": dw})
    out = step(osc_scheme, x, w)
    p1 = 0.2 - h * 0.9 + sigma * dw
    q1 = 0.9 + h * p1
    assert out.p[0] == pytest.approx(p1, abs=1e-14)
    assert out.q[0] == pytest.approx(q1, abs=1e-14)


def test_oscillator_scheme_is_explicit(osc_scheme):
    x = PhasePoint([0.2], [0.9])
    w = noise_values(osc_scheme, **{"0": 0.05, "1": 0.1})
    result = step_detailed(osc_scheme, x, w)
    assert osc_scheme.explicit
    assert result.iterations == 0


def test_synchrotron_scheme_matches_closed_form(synch_scheme):
    h, dw1, dw2 = 0.02, 0.07, -0.11
    omega, s1, s2 = 1.2, 0.3, 0.4
    p0, q0 = 0.4, 0.8
    w = noise_values(synch_scheme, **{"0": h, "1": dw1, "2": dw2})
    out = step(synch_scheme, PhasePoint([p0], [q0]), w)
    p1 = p0 - (h * omega**2 * math.sin(q0) + dw1 * s1 * math.cos(q0) + dw2 * s2 * math.sin(q0))
    q1 = q0 + h * p1
    assert out.p[0] == pytest.approx(p1, abs=1e-14)
    assert out.q[0] == pytest.approx(q1, abs=1e-14)


def test_zero_noise_gives_identity(osc_scheme):
    x = PhasePoint([0.3], [-1.1])
    w = noise_values(osc_scheme, **{"0": 0.0, "1": 0.0})
    out = step(osc_scheme, x, w)
    np.testing.assert_allclose(out.p, x.p)
    np.testing.assert_allclose(out.q, x.q)


def test_missing_noise_index_rejected(osc_scheme):
    with pytest.raises(ValueError):
        step(osc_scheme, PhasePoint([0.0], [1.0]), noise_values(osc_scheme, **{"0": 0.1}))


def test_implicit_solve_kubo():
    scheme = weak_scheme(kubo(a=1.0, sigma=0.5), 1)
    assert not scheme.explicit
    x = PhasePoint([0.4], [0.7])
    w = noise_values(scheme, **{"0": 0.01, "1": 0.05})
    result = step_detailed(scheme, x, w)
    assert result.iterations > 0
    assert result.residual <= scheme.tolerance * (1 + abs(x.p[0]))
    # accepted momentum satisfies the implicit relation
    P = result.point.p
    lhs = P
    rhs = x.p - scheme.s_grad_q(P, x.q, w)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_newton_fallback_on_noncontractive_step():
    scheme = weak_scheme(kubo(a=1.0, sigma=1.0), 1)
    x = PhasePoint([0.4], [1.0])
    w = noise_values(scheme, **{"0": 5.0, "1": 0.3})
    result = step_detailed(scheme, x, w)
    assert result.iterations > scheme.max_fixed_point
    assert result.residual <= scheme.tolerance * (1 + abs(x.p[0]))


def test_nan_detection(osc_scheme):
    x = PhasePoint([0.1], [1.0])
    w = noise_values(osc_scheme, **{"0": 1e300, "1": 1e300})
    with pytest.raises(NumericalError):
        step(osc_scheme, x, w)


def test_simulate_requires_steps(osc_scheme):
    with pytest.raises(ValueError):
        simulate(osc_scheme, PhasePoint([0.0], [1.0]), 0.01, 0, RngStream(1))


def test_simulate_deterministic_under_seed(osc_scheme):
    x0 = PhasePoint([0.0], [1.0])
    path1 = simulate(osc_scheme, x0, 0.01, 50, RngStream(42, 7))
    path2 = simulate(osc_scheme, x0, 0.01, 50, RngStream(42, 7))
    for a, b in zip(path1, path2):
        assert np.array_equal(a.p, b.p) and np.array_equal(a.q, b.q)


def test_deterministic_oscillator_near_periodicity():
    scheme = weak_scheme(oscillator(sigma=0.0), 1)
    h = 1e-3
    n = round(2 * math.pi / h)
    path = simulate(scheme, PhasePoint([0.0], [1.0]), h, n, RngStream(3))
    final = path[-1]
    err = math.hypot(final.p[0] - 0.0, final.q[0] - 1.0)
    # exact solution returns to (0, 1) after one period; the drift left after
    # n steps is the scheme's own bias plus the h*n - 2*pi remainder
    assert err <= 2e-3


def test_symplecticity_of_generated_schemes(osc_scheme, synch_scheme):
    rng = np.random.default_rng(17)
    for scheme in (osc_scheme, synch_scheme):
        for _ in range(20):
            x = PhasePoint(rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1))
            h = 10 ** rng.uniform(-3, -1)
            w = sample(h, scheme.system.m, scheme.noise_requirements(), rng=rng)
            assert symplecticity_defect(scheme, x, w) <= 1e-6


def test_symplecticity_of_implicit_scheme():
    scheme = weak_scheme(kubo(), 1)
    rng = np.random.default_rng(23)
    for _ in range(10):
        x = PhasePoint(rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1))
        w = sample(0.02, 1, scheme.noise_requirements(), rng=rng)
        assert symplecticity_defect(scheme, x, w) <= 1e-6


def test_euler_maruyama_control_defect():
    control = EulerMaruyamaControl(oscillator(sigma=0.5))
    rng = np.random.default_rng(5)
    x = PhasePoint([0.3], [0.8])
    w = sample(0.1, 1, control.noise_requirements(), rng=rng)
    defect = symplecticity_defect(control, x, w)
    assert defect > 1e-3
    assert defect == pytest.approx(0.1**2, rel=1e-3)


def test_euler_maruyama_step_values():
    control = EulerMaruyamaControl(oscillator(sigma=0.5))
    h, dw = 0.1, 0.2
    w = {control.system.index([0]): h, control.system.index([1]): dw}
    out = control.step(PhasePoint([0.3], [0.8]), w)
    assert out.p[0] == pytest.approx(0.3 - h * 0.8 + 0.5 * dw)
    assert out.q[0] == pytest.approx(0.8 + h * 0.3)


def test_phase_point_validation():
    with pytest.raises(ValueError):
        PhasePoint([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        PhasePoint([float("nan")], [1.0])
