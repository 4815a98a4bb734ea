"""One-step maps generated by truncated series, path simulation, audits.

A truncated generating function S(P, q) = sum_alpha c_alpha(P, q) w_alpha,
with w_alpha the per-step integral values, defines the update

    P = p - dS/dq (P, q),    Q = q + dS/dP (P, q),

implicit in P.  When no dS/dq coefficient depends on the momentum the first
relation is explicit and the solve is skipped; otherwise fixed-point
iteration (a contraction for small steps) runs first, with a Newton fallback
on the finite-difference Jacobian.

Symplecticity is audited at the Jacobian level: for frozen per-step noise
the map x -> step(x) must satisfy M^T J M = J up to finite-difference error,
which is the differential-form statement that the phase area is preserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .genfun import GenFunSeries, HamiltonianSystem, weak_scheme_series
from .multiindex import MultiIndex
from .noise import GAUSSIAN_EXACT, Mode, NoiseSample, RngStream, sample
from .symexpr import Expr, compile_exprs, diff, free_symbols, simplify


class SolverError(Exception):
    pass


class NumericalError(Exception):
    pass


@dataclass(frozen=True)
class PhasePoint:
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        if self.p.shape != self.q.shape or self.p.ndim != 1:
            raise ValueError("p and q must be vectors of equal length")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.q))):
            raise ValueError("phase point entries must be finite")

    @property
    def d(self) -> int:
        return self.p.size


@dataclass(frozen=True)
class StepResult:
    point: PhasePoint
    iterations: int
    residual: float


class SchemeMap:
    """Executable one-step map for an Ito-basis truncated series."""

    def __init__(
        self,
        series: GenFunSeries,
        tolerance: float = 1e-12,
        max_fixed_point: int = 50,
        max_newton: int = 25,
    ):
        if series.basis != "ito":
            raise ValueError("schemes are generated from ito-basis truncations")
        self.series = series
        self.system = series.system
        self.tolerance = tolerance
        self.max_fixed_point = max_fixed_point
        self.max_newton = max_newton

        sys = self.system
        self.indices: list[MultiIndex] = series.indices()
        self.grad_q: dict[MultiIndex, list[Expr]] = {}
        self.grad_p: dict[MultiIndex, list[Expr]] = {}
        p_syms = set(sys.p_names)
        explicit = True
        for alpha in self.indices:
            c = series.terms[alpha]
            self.grad_q[alpha] = [simplify(diff(c, qn)) for qn in sys.q_names]
            self.grad_p[alpha] = [simplify(diff(c, pn)) for pn in sys.p_names]
            if any(free_symbols(e) & p_syms for e in self.grad_q[alpha]):
                explicit = False
        self.explicit = explicit

        args = list(sys.p_names) + list(sys.q_names)
        flat_q = [e for alpha in self.indices for e in self.grad_q[alpha]]
        flat_p = [e for alpha in self.indices for e in self.grad_p[alpha]]
        self._fq = compile_exprs(flat_q, args, sys.params)
        self._fp = compile_exprs(flat_p, args, sys.params)

    def _grad(self, compiled, p, q, w) -> np.ndarray:
        values = compiled(*p, *q)
        d = self.system.d
        out = np.zeros(d) if np.isscalar(values[0]) or np.ndim(values[0]) == 0 else np.zeros((d,) + np.shape(values[0]))
        for i, alpha in enumerate(self.indices):
            wa = w[alpha]
            for k in range(d):
                out[k] = out[k] + values[i * d + k] * wa
        return out

    def s_grad_q(self, p, q, w) -> np.ndarray:
        """dS/dq at (P, q) for noise values w; vectorized over trailing axes."""
        return self._grad(self._fq, p, q, w)

    def s_grad_p(self, p, q, w) -> np.ndarray:
        return self._grad(self._fp, p, q, w)

    def noise_requirements(self) -> list[MultiIndex]:
        return list(self.indices)


def _solve_momentum(scheme: SchemeMap, p: np.ndarray, q: np.ndarray, w) -> tuple[np.ndarray, int, float]:
    if scheme.explicit:
        P = p - scheme.s_grad_q(p, q, w)
        return P, 0, 0.0

    def residual(P):
        return P - p + scheme.s_grad_q(P, q, w)

    scale = 1.0 + float(np.max(np.abs(p)))
    P = p.copy()
    for it in range(1, scheme.max_fixed_point + 1):
        P_next = p - scheme.s_grad_q(P, q, w)
        if not np.all(np.isfinite(P_next)):
            break
        delta = float(np.max(np.abs(P_next - P)))
        P = P_next
        if delta <= scheme.tolerance * scale:
            res = float(np.max(np.abs(residual(P))))
            if res <= scheme.tolerance * scale:
                return P, it, res
        if delta > 1e6 * scale:
            break

    if not np.all(np.isfinite(P)):
        P = p.copy()
    d = p.size
    eps = 1e-6
    for it in range(1, scheme.max_newton + 1):
        f = residual(P)
        res = float(np.max(np.abs(f)))
        if res <= scheme.tolerance * scale:
            return P, scheme.max_fixed_point + it, res
        jac = np.empty((d, d))
        for j in range(d):
            dP = np.zeros(d)
            dP[j] = eps
            jac[:, j] = (residual(P + dP) - residual(P - dP)) / (2 * eps)
        try:
            P = P - np.linalg.solve(jac, f)
        except np.linalg.LinAlgError as err:
            raise SolverError(f"singular Jacobian in Newton fallback: {err}") from None
    res = float(np.max(np.abs(residual(P))))
    raise SolverError(
        f"implicit momentum solve did not converge: residual {res:.3e} "
        f"after {scheme.max_fixed_point} fixed-point and {scheme.max_newton} Newton iterations"
    )


def step_detailed(scheme: SchemeMap, x: PhasePoint, w: NoiseSample | dict) -> StepResult:
    values = w.values if isinstance(w, NoiseSample) else w
    missing = [a for a in scheme.indices if a not in values]
    if missing:
        raise ValueError(f"noise sample missing indices {[str(a) for a in missing]}")
    P, iterations, residual = _solve_momentum(scheme, x.p, x.q, values)
    Q = x.q + scheme.s_grad_p(P, x.q, values)
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q))):
        raise NumericalError("step produced non-finite phase values")
    return StepResult(point=PhasePoint(P, Q), iterations=iterations, residual=residual)


def step(scheme: SchemeMap, x: PhasePoint, w: NoiseSample | dict) -> PhasePoint:
    """Advance one step; solves the implicit momentum relation to tolerance."""
    return step_detailed(scheme, x, w).point


def simulate(
    scheme: SchemeMap,
    x0: PhasePoint,
    h: float,
    n_steps: int,
    rng: RngStream,
    mode: Mode = GAUSSIAN_EXACT,
) -> list[PhasePoint]:
    """Iterate the map with fresh per-step noise, recording every state."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    needed = scheme.noise_requirements()
    path = [x0]
    x = x0
    for _ in range(n_steps):
        w = sample(h, scheme.system.m, needed, mode, rng)
        x = step(scheme, x, w)
        path.append(x)
    return path


def weak_scheme(sys: HamiltonianSystem, weak_order: int = 1, **solver_kwargs) -> SchemeMap:
    """Generated weak scheme of the requested order for a system."""
    return SchemeMap(weak_scheme_series(sys, weak_order), **solver_kwargs)


# ---------------------------------------------------------------------------
# symplecticity audit

def _standard_j(d: int) -> np.ndarray:
    j = np.zeros((2 * d, 2 * d))
    j[:d, d:] = np.eye(d)
    j[d:, :d] = -np.eye(d)
    return j


def symplecticity_defect(scheme, x: PhasePoint, w, eps: float = 1e-6) -> float:
    """max |M^T J M - J| for the frozen-noise Jacobian M of the step map.

    Works for any object with a ``step``-compatible call, so non-symplectic
    control maps can be audited with the same code.
    """
    d = x.d
    stepper = scheme.step if hasattr(scheme, "step") else None

    def apply(vec: np.ndarray) -> np.ndarray:
        point = PhasePoint(vec[:d], vec[d:])
        out = stepper(point, w) if stepper else step(scheme, point, w)
        return np.concatenate([out.p, out.q])

    x_vec = np.concatenate([x.p, x.q])
    mat = np.empty((2 * d, 2 * d))
    for j in range(2 * d):
        dv = np.zeros(2 * d)
        dv[j] = eps
        mat[:, j] = (apply(x_vec + dv) - apply(x_vec - dv)) / (2 * eps)
    jmat = _standard_j(d)
    return float(np.max(np.abs(mat.T @ jmat @ mat - jmat)))


# ---------------------------------------------------------------------------
# non-symplectic control

class EulerMaruyamaControl:
    """Explicit Euler step on the Hamiltonian vector field, as a control.

    Evaluates drift and diffusion at the left endpoint; for additive noise
    this is the classical Euler-Maruyama method.  Deliberately not
    symplectic: the energy audit and defect tests use it as the foil.
    """

    def __init__(self, sys: HamiltonianSystem):
        self.system = sys
        args = list(sys.p_names) + list(sys.q_names)
        exprs: list[Expr] = []
        for hj in sys.hamiltonians:
            exprs.extend(simplify(diff(hj, qn)) for qn in sys.q_names)
            exprs.extend(simplify(diff(hj, pn)) for pn in sys.p_names)
        self._fn = compile_exprs(exprs, args, sys.params)
        self._indices = [sys.index([0])] + [sys.index([r]) for r in range(1, sys.m + 1)]

    def noise_requirements(self) -> list[MultiIndex]:
        return list(self._indices)

    def step(self, x: PhasePoint, w: NoiseSample | dict) -> PhasePoint:
        values = w.values if isinstance(w, NoiseSample) else w
        sys = self.system
        d = sys.d
        grads = self._fn(*x.p, *x.q)
        h = values[sys.index([0])]
        p_new = x.p.astype(float).copy()
        q_new = x.q.astype(float).copy()
        for j in range(sys.m + 1):
            dwj = h if j == 0 else values[sys.index([j])]
            hq = np.array(grads[2 * d * j : 2 * d * j + d])
            hp = np.array(grads[2 * d * j + d : 2 * d * j + 2 * d])
            p_new = p_new - hq * dwj
            q_new = q_new + hp * dwj
        return PhasePoint(p_new, q_new)
