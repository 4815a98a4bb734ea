"""Monte Carlo weak-error estimation and convergence-order fitting.

Weak order is certified by comparing expectations of polynomial observables
of the numerical solution at a fixed horizon against a reference: an
analytic moment oracle, a fine-step midpoint integration of a Stratonovich
system, or the step-size-frozen modified system.  Errors come with standard
errors from the path ensemble; the order fit uses only rows that clear the
noise floor.

Path ensembles run in fixed-size chunks, one reproducible stream per chunk,
and the partial results are reduced in chunk order, so the numbers do not
depend on how many worker threads ran the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Literal, Mapping, Sequence

import numpy as np

from .genfun import HamiltonianSystem
from .integrator import EulerMaruyamaControl, PhasePoint, SchemeMap, SolverError, weak_scheme
from .modified import ModifiedSystem, modified_sde
from .multiindex import MultiIndex
from .noise import GAUSSIAN_EXACT, Mode, RngStream, sample_arrays
from .symexpr import (
    Const,
    Div,
    Expr,
    Fun,
    Neg,
    Pow,
    _Binary,
    compile_exprs,
    diff,
    is_zero,
    parse,
    simplify,
)

DEFAULT_CHUNK = 25_000
MIN_WEAK_SAMPLES = 10_000
FINE_STEP_RATIO = 50


class WeakLabError(Exception):
    pass


# ---------------------------------------------------------------------------
# observables

def _assert_polynomial(e: Expr) -> None:
    if isinstance(e, (Fun,)):
        raise WeakLabError("observables must be polynomial in the phase variables")
    if isinstance(e, Div):
        raise WeakLabError("observables must be polynomial; division is not")
    if isinstance(e, Pow) and e.exponent < 0:
        raise WeakLabError("observables must be polynomial; negative powers are not")
    if isinstance(e, Neg):
        _assert_polynomial(e.arg)
    elif isinstance(e, _Binary):
        _assert_polynomial(e.lhs)
        _assert_polynomial(e.rhs)
    elif isinstance(e, Pow):
        _assert_polynomial(e.base)


@dataclass(frozen=True)
class WeakObservable:
    name: str
    expr: Expr

    def __post_init__(self):
        _assert_polynomial(self.expr)

    @classmethod
    def of(cls, text: str) -> "WeakObservable":
        return cls(name=text, expr=parse(text))


def standard_observables() -> list[WeakObservable]:
    return [WeakObservable.of(t) for t in ("p", "q", "p^2+q^2", "p*q")]


# ---------------------------------------------------------------------------
# analytic oscillator moments

@dataclass(frozen=True)
class OscillatorMoments:
    """First and selected second moments started from (p, q) = (0, 1)."""

    mean_p: float
    mean_q: float
    energy: float
    cross: float

    def observable(self, name: str) -> float:
        table = {"p": self.mean_p, "q": self.mean_q, "p^2+q^2": self.energy, "p*q": self.cross}
        if name not in table:
            raise WeakLabError(f"no analytic moment for observable {name!r}")
        return table[name]


def oscillator_oracle(t: float, sigma: float) -> OscillatorMoments:
    """Closed-form moments of the additive-noise linear oscillator.

    Means solve the rotation ODE; the energy grows linearly because the
    quadratic variation feeds sigma^2 per unit time; the cross moment solves
    the closed second-moment system (w'' + 4w = sigma^2 with w(0) = 0,
    w'(0) = -1).  All three were cross-checked against fine-step simulation.
    """
    if t < 0:
        raise WeakLabError("time must be nonnegative")
    s2 = sigma * sigma
    return OscillatorMoments(
        mean_p=-math.sin(t),
        mean_q=math.cos(t),
        energy=1.0 + s2 * t,
        cross=s2 / 4.0 * (1.0 - math.cos(2 * t)) - math.sin(2 * t) / 2.0,
    )


def assert_oscillator(sys: HamiltonianSystem) -> float:
    """Validate the analytic-oracle shape and return its noise amplitude."""
    if sys.d != 1 or sys.m != 1 or "sigma" not in sys.params:
        raise WeakLabError("analytic oracle covers the bundled oscillator only")
    if not is_zero(simplify(sys.hamiltonians[0] - parse("(p^2+q^2)/2"))):
        raise WeakLabError("analytic oracle needs drift Hamiltonian (p^2+q^2)/2")
    if not is_zero(simplify(sys.hamiltonians[1] - parse("-sigma*q"))):
        raise WeakLabError("analytic oracle needs noise Hamiltonian -sigma*q")
    return float(sys.params["sigma"])


# ---------------------------------------------------------------------------
# vectorized steppers

class VectorScheme:
    """Ensemble stepping for a generated scheme; state arrays have shape (d, n)."""

    def __init__(self, scheme: SchemeMap, tol: float = 1e-12, max_iter: int = 60):
        self.scheme = scheme
        self.system = scheme.system
        self.tol = tol
        self.max_iter = max_iter

    def step(self, p: np.ndarray, q: np.ndarray, w: Mapping[MultiIndex, np.ndarray]):
        scheme = self.scheme
        if scheme.explicit:
            P = p - scheme.s_grad_q(p, q, w)
        else:
            P = p
            scale = 1.0 + float(np.max(np.abs(p)))
            for _ in range(self.max_iter):
                P_next = p - scheme.s_grad_q(P, q, w)
                delta = float(np.max(np.abs(P_next - P)))
                P = P_next
                if delta <= self.tol * scale:
                    break
            else:
                raise SolverError("vectorized fixed-point solve did not converge")
        Q = q + scheme.s_grad_p(P, q, w)
        return P, Q


class VectorEuler:
    """Ensemble version of the explicit Euler control map."""

    def __init__(self, control: EulerMaruyamaControl):
        self.control = control
        self.system = control.system

    def step(self, p: np.ndarray, q: np.ndarray, w: Mapping[MultiIndex, np.ndarray]):
        sys = self.system
        d = sys.d
        grads = self.control._fn(*p, *q)
        h = w[sys.index([0])]
        p_new = p.copy()
        q_new = q.copy()
        for j in range(sys.m + 1):
            dwj = h if j == 0 else w[sys.index([j])]
            for k in range(d):
                p_new[k] = p_new[k] - grads[2 * d * j + k] * dwj
                q_new[k] = q_new[k] + grads[2 * d * j + d + k] * dwj
        return p_new, q_new


class SdeField:
    """Compiled Hamiltonian vector fields of a Stratonovich system.

    Calling with per-component state arrays returns, for j = 0..m, the pair
    (dp-rate, dq-rate) stacked as a flat tuple of 2*(m+1)*d arrays.
    """

    def __init__(self, sys: HamiltonianSystem):
        self.system = sys
        args = list(sys.p_names) + list(sys.q_names)
        exprs: list[Expr] = []
        for hj in sys.hamiltonians:
            exprs.extend(simplify(Const(-1.0) * diff(hj, qn)) for qn in sys.q_names)
            exprs.extend(simplify(diff(hj, pn)) for pn in sys.p_names)
        self._fn = compile_exprs(exprs, args, sys.params)
        self.d = sys.d
        self.m = sys.m

    def rates(self, p: np.ndarray, q: np.ndarray):
        return self._fn(*p, *q)


def midpoint_step(field: SdeField, p, q, dt: float, dw, tol: float = 1e-13, max_iter: int = 12):
    """One implicit-midpoint step; converges to the Stratonovich solution."""
    d, m = field.d, field.m
    P, Q = p, q
    scale = 1.0 + float(max(np.max(np.abs(p)), np.max(np.abs(q))))
    for _ in range(max_iter):
        pm = 0.5 * (p + P)
        qm = 0.5 * (q + Q)
        rates = field.rates(pm, qm)
        P_next = p.copy()
        Q_next = q.copy()
        for j in range(m + 1):
            w = dt if j == 0 else dw[j - 1]
            for k in range(d):
                P_next[k] = P_next[k] + rates[2 * d * j + k] * w
                Q_next[k] = Q_next[k] + rates[2 * d * j + d + k] * w
        delta = max(float(np.max(np.abs(P_next - P))), float(np.max(np.abs(Q_next - Q))))
        P, Q = P_next, Q_next
        if delta <= tol * scale:
            break
    return P, Q


# ---------------------------------------------------------------------------
# chunked ensembles with deterministic reduction

def _chunk_plan(samples: int, chunk: int) -> list[tuple[int, int]]:
    plan = []
    start = 0
    while start < samples:
        size = min(chunk, samples - start)
        plan.append((start, size))
        start += size
    return plan


class _MeanAccumulator:
    def __init__(self, k: int):
        self.n = 0
        self.total = np.zeros(k)
        self.total_sq = np.zeros(k)

    def add(self, values: np.ndarray) -> None:
        self.n += values.shape[1]
        self.total += values.sum(axis=1)
        self.total_sq += (values**2).sum(axis=1)

    def mean(self) -> np.ndarray:
        return self.total / self.n

    def stderr(self) -> np.ndarray:
        mean = self.mean()
        var = np.maximum(self.total_sq / self.n - mean**2, 0.0) * self.n / max(self.n - 1, 1)
        return np.sqrt(var / self.n)


def _reduce_chunks(run_chunk: Callable, samples: int, chunk: int, threads: int, k: int):
    plan = _chunk_plan(samples, chunk)
    acc = _MeanAccumulator(k)
    if threads <= 1:
        for start, size in plan:
            acc.add(run_chunk(start, size))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for values in pool.map(lambda sc: run_chunk(*sc), plan):
                acc.add(values)
    return acc


def _compile_observables(sys: HamiltonianSystem, phis: Sequence[WeakObservable]):
    args = list(sys.p_names) + list(sys.q_names)
    return compile_exprs([simplify(phi.expr) for phi in phis], args, sys.params)


def _initial_arrays(x0: PhasePoint, size: int):
    p = np.repeat(x0.p[:, None], size, axis=1)
    q = np.repeat(x0.q[:, None], size, axis=1)
    return p, q


def scheme_ensemble_mean(
    scheme: SchemeMap,
    phis: Sequence[WeakObservable],
    x0: PhasePoint,
    T: float,
    h: float,
    samples: int,
    rng: RngStream,
    mode: Mode = GAUSSIAN_EXACT,
    chunk: int = DEFAULT_CHUNK,
    threads: int = 1,
    stream_base: int = 0,
):
    """Means and standard errors of the observables at the horizon."""
    n_steps = _steps_for(T, h)
    stepper = VectorScheme(scheme)
    needed = scheme.noise_requirements()
    phi_fn = _compile_observables(scheme.system, phis)
    m = scheme.system.m

    def run_chunk(start: int, size: int) -> np.ndarray:
        gen = rng.child(stream_base + start).generator
        p, q = _initial_arrays(x0, size)
        for _ in range(n_steps):
            w = sample_arrays(h, m, needed, mode, gen, size)
            p, q = stepper.step(p, q, w)
        return np.stack(phi_fn(*p, *q))

    acc = _reduce_chunks(run_chunk, samples, chunk, threads, len(phis))
    return acc.mean(), acc.stderr()


def sde_ensemble_mean(
    sys: HamiltonianSystem,
    phis: Sequence[WeakObservable],
    x0: PhasePoint,
    T: float,
    h_ref: float,
    samples: int,
    rng: RngStream,
    chunk: int = DEFAULT_CHUNK,
    threads: int = 1,
    stream_base: int = 1_000_000,
):
    """Fine-step implicit-midpoint reference for a Stratonovich system."""
    n_steps = _steps_for(T, h_ref)
    field = SdeField(sys)
    phi_fn = _compile_observables(sys, phis)
    sqrt_dt = math.sqrt(h_ref)

    def run_chunk(start: int, size: int) -> np.ndarray:
        gen = rng.child(stream_base + start).generator
        p, q = _initial_arrays(x0, size)
        for _ in range(n_steps):
            dw = gen.normal(0.0, sqrt_dt, size=(sys.m, size)) if sys.m else np.zeros((0, size))
            p, q = midpoint_step(field, p, q, h_ref, dw)
        return np.stack(phi_fn(*p, *q))

    acc = _reduce_chunks(run_chunk, samples, chunk, threads, len(phis))
    return acc.mean(), acc.stderr()


def coupled_difference_mean(
    scheme: SchemeMap,
    ref_sys: HamiltonianSystem,
    phis: Sequence[WeakObservable],
    x0: PhasePoint,
    T: float,
    h: float,
    h_ref: float,
    samples: int,
    rng: RngStream,
    chunk: int = DEFAULT_CHUNK,
    threads: int = 1,
    stream_base: int = 2_000_000,
):
    """Common-random-numbers estimate of E[phi(scheme)] - E[phi(reference)].

    Scheme and fine midpoint reference are driven by the same Wiener paths:
    the coarse increments are the sums of the fine ones.  The difference of
    means is unchanged by the coupling while its variance collapses.
    """
    if scheme.series.max_len != 1:
        raise WeakLabError("common-random-numbers coupling supports weak order 1 schemes")
    n_coarse = _steps_for(T, h)
    n_sub = max(1, round(h / h_ref))
    dt = h / n_sub
    field = SdeField(ref_sys)
    stepper = VectorScheme(scheme)
    needed = scheme.noise_requirements()
    sysm = scheme.system
    phi_fn = _compile_observables(sysm, phis)
    sqrt_dt = math.sqrt(dt)
    zero_idx = sysm.index([0])
    noise_idx = [sysm.index([r]) for r in range(1, sysm.m + 1)]

    def run_chunk(start: int, size: int) -> np.ndarray:
        gen = rng.child(stream_base + start).generator
        ps, qs = _initial_arrays(x0, size)
        pf, qf = _initial_arrays(x0, size)
        for _ in range(n_coarse):
            dw_sum = np.zeros((sysm.m, size))
            for _ in range(n_sub):
                dw = gen.normal(0.0, sqrt_dt, size=(sysm.m, size))
                pf, qf = midpoint_step(field, pf, qf, dt, dw)
                dw_sum += dw
            w: dict[MultiIndex, np.ndarray] = {zero_idx: np.full(size, h)}
            for r, idx in enumerate(noise_idx):
                w[idx] = dw_sum[r]
            missing = [a for a in needed if a not in w]
            if missing:
                raise WeakLabError(f"coupled mode cannot fill indices {missing}")
            ps, qs = stepper.step(ps, qs, w)
        return np.stack(phi_fn(*ps, *qs)) - np.stack(phi_fn(*pf, *qf))

    acc = _reduce_chunks(run_chunk, samples, chunk, threads, len(phis))
    return acc.mean(), acc.stderr()


def _steps_for(T: float, h: float) -> int:
    n = round(T / h)
    if n < 1 or abs(n * h - T) > 1e-9 * max(1.0, T):
        raise WeakLabError(f"horizon {T} is not an integer multiple of step {h}")
    return n


# ---------------------------------------------------------------------------
# order fitting

@dataclass(frozen=True)
class OrderFit:
    slope: float
    ci_low: float
    ci_high: float
    rows_used: int


@dataclass(frozen=True)
class WeakErrorRow:
    h: float
    error: float
    stderr: float
    samples: int


ReferenceKind = Literal["oracle", "self-sde", "modified-sde"]


@dataclass(frozen=True)
class WeakErrorReport:
    observable: str
    reference: ReferenceKind
    rows: tuple[WeakErrorRow, ...]
    fit: OrderFit | None
    fit_error: str = ""

    def usable_rows(self) -> list[WeakErrorRow]:
        return [r for r in self.rows if r.error > 3 * r.stderr]


def fit_order(rows: Sequence[WeakErrorRow]) -> OrderFit:
    """Least-squares slope of log error against log step with a 95% band."""
    usable = [r for r in rows if r.error > 3 * r.stderr and r.error > 0]
    if len(usable) < 3:
        raise WeakLabError(
            f"order fit needs at least 3 rows above the noise floor, got {len(usable)}"
        )
    x = np.log([r.h for r in usable])
    y = np.log([r.error for r in usable])
    n = len(usable)
    xbar = x.mean()
    sxx = float(((x - xbar) ** 2).sum())
    slope = float(((x - xbar) * (y - y.mean())).sum() / sxx)
    intercept = float(y.mean() - slope * xbar)
    resid = y - (intercept + slope * x)
    dof = max(n - 2, 1)
    slope_se = math.sqrt(float((resid**2).sum()) / dof / sxx)
    half = 1.96 * slope_se
    return OrderFit(slope=slope, ci_low=slope - half, ci_high=slope + half, rows_used=n)


# ---------------------------------------------------------------------------
# weak-error studies

def weak_error(
    sys: HamiltonianSystem,
    phis: Sequence[WeakObservable],
    T: float,
    hs: Sequence[float],
    samples: int,
    rng: RngStream,
    reference: ReferenceKind = "oracle",
    x0: PhasePoint | None = None,
    weak_order: int = 1,
    msys: ModifiedSystem | None = None,
    crn: bool = False,
    mode: Mode = GAUSSIAN_EXACT,
    fine_ratio: int = FINE_STEP_RATIO,
    chunk: int = DEFAULT_CHUNK,
    threads: int = 1,
) -> dict[str, WeakErrorReport]:
    """Weak errors of the generated scheme against the chosen reference.

    ``oracle``: analytic oscillator moments.  ``self-sde``: fine midpoint
    integration of the same system.  ``modified-sde``: fine midpoint
    integration of the step-frozen modified system per row (the
    modified-equation closeness study); with ``crn`` both solutions share the
    driving paths, which the difference estimator is insensitive to in mean.
    """
    if samples < MIN_WEAK_SAMPLES:
        raise WeakLabError(f"weak studies need at least {MIN_WEAK_SAMPLES} samples")
    if x0 is None:
        x0 = PhasePoint(np.zeros(sys.d), np.ones(sys.d))
    scheme = weak_scheme(sys, weak_order)
    h_ref = min(hs) / fine_ratio
    errors: dict[str, list[WeakErrorRow]] = {phi.name: [] for phi in phis}

    ref_means = ref_ses = None
    if reference == "oracle":
        sigma = assert_oscillator(sys)
        if not (np.allclose(x0.p, 0.0) and np.allclose(x0.q, 1.0)):
            raise WeakLabError("analytic oracle moments start from (p, q) = (0, 1)")
        oracle = oscillator_oracle(T, sigma)
        targets = np.array([oracle.observable(phi.name) for phi in phis])
    elif reference == "self-sde":
        ref_means, ref_ses = sde_ensemble_mean(
            sys, phis, x0, T, h_ref, samples, rng, chunk=chunk, threads=threads
        )
    elif reference == "modified-sde":
        if msys is None:
            raise WeakLabError("modified-sde reference needs a ModifiedSystem")
    else:
        raise WeakLabError(f"unknown reference kind {reference!r}")

    for i, h in enumerate(sorted(hs, reverse=True)):
        if reference == "modified-sde":
            ref = modified_sde(msys, h)
            if crn:
                diff_means, diff_ses = coupled_difference_mean(
                    scheme, ref, phis, x0, T, h, h_ref, samples, rng,
                    chunk=chunk, threads=threads, stream_base=2_000_000 + 10_000_000 * i,
                )
                for j, phi in enumerate(phis):
                    errors[phi.name].append(
                        WeakErrorRow(h, abs(float(diff_means[j])), float(diff_ses[j]), samples)
                    )
                continue
            ref_means, ref_ses = sde_ensemble_mean(
                ref, phis, x0, T, h_ref, samples, rng,
                chunk=chunk, threads=threads, stream_base=1_000_000 + 10_000_000 * i,
            )
        means, ses = scheme_ensemble_mean(
            scheme, phis, x0, T, h, samples, rng, mode=mode,
            chunk=chunk, threads=threads, stream_base=10_000_000 * i,
        )
        for j, phi in enumerate(phis):
            if reference == "oracle":
                err = abs(float(means[j]) - float(targets[j]))
                se = float(ses[j])
            else:
                err = abs(float(means[j]) - float(ref_means[j]))
                se = math.hypot(float(ses[j]), float(ref_ses[j]))
            errors[phi.name].append(WeakErrorRow(h, err, se, samples))

    reports = {}
    for phi in phis:
        rows = tuple(errors[phi.name])
        try:
            fit = fit_order(rows)
            fit_err = ""
        except WeakLabError as exc:
            fit = None
            fit_err = str(exc)
        reports[phi.name] = WeakErrorReport(
            observable=phi.name, reference=reference, rows=rows, fit=fit, fit_error=fit_err
        )
    return reports


def report_csv(reports: Mapping[str, WeakErrorReport]) -> str:
    lines = ["phi,reference,h,error,stderr,samples"]
    for name, rep in reports.items():
        for r in rep.rows:
            lines.append(f"{name},{rep.reference},{r.h},{r.error:.10e},{r.stderr:.10e},{r.samples}")
    for name, rep in reports.items():
        if rep.fit is not None:
            lines.append(
                f"fitted_order,{name},{rep.fit.slope:.4f},{rep.fit.ci_low:.4f},{rep.fit.ci_high:.4f}"
            )
        else:
            lines.append(f"fitted_order,{name},nan,nan,nan")
    return "\n".join(lines) + "\n"


def energy_tracking(
    sys: HamiltonianSystem,
    T: float,
    h: float,
    samples: int,
    rng: RngStream,
    x0: PhasePoint | None = None,
    control: bool = False,
    chunk: int = DEFAULT_CHUNK,
    threads: int = 1,
):
    """Sample mean of p^2 + q^2 at the horizon for the scheme or the control."""
    if x0 is None:
        x0 = PhasePoint(np.zeros(sys.d), np.ones(sys.d))
    phi = [WeakObservable.of("p^2+q^2")]
    n_steps = _steps_for(T, h)
    if control:
        stepper = VectorEuler(EulerMaruyamaControl(sys))
        needed = stepper.control.noise_requirements()
    else:
        stepper = VectorScheme(weak_scheme(sys, 1))
        needed = stepper.scheme.noise_requirements()
    phi_fn = _compile_observables(sys, phi)

    def run_chunk(start: int, size: int) -> np.ndarray:
        gen = rng.child(start).generator
        p, q = _initial_arrays(x0, size)
        for _ in range(n_steps):
            w = sample_arrays(h, sys.m, needed, GAUSSIAN_EXACT, gen, size)
            p, q = stepper.step(p, q, w)
        return np.stack(phi_fn(*p, *q))

    acc = _reduce_chunks(run_chunk, samples, chunk, threads, 1)
    return float(acc.mean()[0]), float(acc.stderr()[0])
