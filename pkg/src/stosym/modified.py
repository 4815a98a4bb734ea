"""First-order modified stochastic Hamiltonian systems for weak-1 schemes.

The generated weak scheme of order 1 is itself the flow, to second weak
order, of a perturbed Hamiltonian system: each Hamiltonian gains a
correction series in the step size,

    H~_j(h) = H_j + h * H_j^[1] + h^2 * H_j^[2] + ...,

and matching the expectations of products of generating-function gradients
order by order in h determines the corrections.  For drift Hamiltonians
splitting into kinetic plus potential parts and noise Hamiltonians that
depend on the position only, the first-order corrections close as

    H_j^[1] = -1/2 * sum_k dH_0/dp_k * dH_j/dq_k,       j = 0..m.

This closed form is a derived generalization of the two worked models; the
moment-matching residual machinery below is the check that certifies it (a
correct first-order correction leaves residuals of third order in h, a
missing one leaves second order).

When a noise Hamiltonian depends on both p and q no correction of this shape
exists: matching the second-order coefficients becomes inconsistent, so such
systems are rejected rather than silently mis-corrected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Literal, Mapping, Sequence

import numpy as np

from .genfun import (
    MAX_SERIES_LEN,
    DerivationError,
    HamiltonianSystem,
    _ordered_splits,
    all_indices,
    weak_scheme_series,
)
from .multiindex import MultiIndex, zero_deletions
from .noise import RngStream, integral_ensemble
from .symexpr import (
    Const,
    Expr,
    Opaque,
    Sym,
    contains_opaque,
    diff,
    evaluate,
    is_zero,
    render,
    simplify,
)

ADDITIVE: "NoiseClass" = "additive"
HALF_MULTIPLICATIVE: "NoiseClass" = "half-multiplicative"
FULLY_MULTIPLICATIVE: "NoiseClass" = "fully-multiplicative"
NoiseClass = Literal["additive", "half-multiplicative", "fully-multiplicative"]


class ModifiedError(Exception):
    pass


class UnsupportedNoiseError(ModifiedError):
    def __init__(self, message: str, classification: NoiseClass):
        super().__init__(message)
        self.classification = classification


def classify_noise(sys: HamiltonianSystem) -> NoiseClass:
    """Additive: constant-gradient noise Hamiltonians; half-multiplicative:
    each depends on the positions only or the momenta only; fully
    multiplicative otherwise."""
    additive = True
    half = True
    names = list(sys.p_names) + list(sys.q_names)
    for r in range(1, sys.m + 1):
        h = sys.hamiltonians[r]
        grads = {n: diff(h, n) for n in names}
        if any(not is_zero(diff(g, n2)) for g in grads.values() for n2 in names):
            additive = False
        p_free = all(is_zero(grads[n]) for n in sys.p_names)
        q_free = all(is_zero(grads[n]) for n in sys.q_names)
        if not (p_free or q_free):
            half = False
    if additive:
        return ADDITIVE
    if half:
        return HALF_MULTIPLICATIVE
    return FULLY_MULTIPLICATIVE


@dataclass(frozen=True)
class ModifiedSystem:
    """Base system plus per-Hamiltonian correction coefficients.

    ``corrections[j][i-1]`` is the order-i correction of Hamiltonian j; at
    h = 0 the perturbed Hamiltonians reduce to the base ones by construction.
    """

    base: HamiltonianSystem
    corrections: tuple[tuple[Expr, ...], ...]

    def __post_init__(self):
        if len(self.corrections) != self.base.m + 1:
            raise ValueError("need one correction sequence per Hamiltonian")
        orders = {len(c) for c in self.corrections}
        if len(orders) != 1:
            raise ValueError("all Hamiltonians must carry the same correction order")

    @property
    def order(self) -> int:
        return len(self.corrections[0])

    def correction(self, j: int, i: int) -> Expr:
        """H_j^[i]; order 0 is the base Hamiltonian, unpopulated orders are 0."""
        if i == 0:
            return self.base.hamiltonians[j]
        if i <= self.order:
            return self.corrections[j][i - 1]
        return Const(0.0)

    def hamiltonian_polynomials(self, hname: str = "h") -> tuple[Expr, ...]:
        """H~_j as polynomials in a symbolic step size."""
        hsym = Sym(hname)
        out = []
        for j in range(self.base.m + 1):
            e: Expr = self.base.hamiltonians[j]
            for i in range(1, self.order + 1):
                e = e + Pow_int(hsym, i) * self.corrections[j][i - 1]
            out.append(simplify(e))
        return tuple(out)

    @classmethod
    def abstract(cls, sys: HamiltonianSystem, order: int = 1) -> "ModifiedSystem":
        """Corrections left as opaque placeholders H{j}c{i} (d = 1 only)."""
        if sys.d != 1:
            raise ModifiedError("abstract corrections support d = 1 only")
        corr = tuple(
            tuple(Opaque(f"H{j}c{i}") for i in range(1, order + 1))
            for j in range(sys.m + 1)
        )
        return cls(base=sys, corrections=corr)

    @classmethod
    def zero(cls, sys: HamiltonianSystem, order: int = 1) -> "ModifiedSystem":
        """All corrections zero; the perturbed system equals the base system."""
        corr = tuple(tuple(Const(0.0) for _ in range(order)) for _ in range(sys.m + 1))
        return cls(base=sys, corrections=corr)


def Pow_int(base: Expr, n: int) -> Expr:
    out: Expr = Const(1.0)
    for _ in range(n):
        out = out * base
    return out


def first_order_modified(sys: HamiltonianSystem) -> ModifiedSystem:
    """Populate the order-1 corrections for the supported noise classes.

    Requires a separable drift Hamiltonian T(p) + V(q) and position-only
    noise Hamiltonians; rejects fully multiplicative systems outright.
    """
    classification = classify_noise(sys)
    if classification == FULLY_MULTIPLICATIVE:
        raise UnsupportedNoiseError(
            "fully multiplicative noise: a noise Hamiltonian depends on both the "
            "momenta and the positions, and no second-weak-order modified equation "
            "exists with deterministic drift/diffusion perturbations of this form",
            classification,
        )
    for k, pn in enumerate(sys.p_names):
        for qn in sys.q_names:
            if not is_zero(diff(diff(sys.hamiltonians[0], pn), qn)):
                raise ModifiedError(
                    "drift Hamiltonian must split as T(p) + V(q); "
                    f"mixed second derivative in ({pn}, {qn}) does not vanish"
                )
    for r in range(1, sys.m + 1):
        for pn in sys.p_names:
            if not is_zero(diff(sys.hamiltonians[r], pn)):
                raise ModifiedError(
                    f"unsupported shape ({classification}): noise Hamiltonian {r} "
                    f"depends on momentum {pn}; corrections are derived for "
                    "position-only noise Hamiltonians"
                )
    corrections = []
    for j in range(sys.m + 1):
        total: Expr = Const(0.0)
        for pn, qn in zip(sys.p_names, sys.q_names):
            total = total + diff(sys.hamiltonians[0], pn) * diff(sys.hamiltonians[j], qn)
        corrections.append((simplify(Const(-0.5) * total),))
    return ModifiedSystem(base=sys, corrections=tuple(corrections))


def modified_sde(msys: ModifiedSystem, h: float) -> HamiltonianSystem:
    """The perturbed system with the step size frozen to a number."""
    if h < 0:
        raise ModifiedError(f"step size must be >= 0, got {h}")
    if msys.order < 1:
        raise ModifiedError("no corrections populated")
    hams = []
    for j in range(msys.base.m + 1):
        e: Expr = msys.base.hamiltonians[j]
        for i in range(1, msys.order + 1):
            e = e + Const(float(h) ** i) * msys.corrections[j][i - 1]
        hams.append(simplify(e))
    return HamiltonianSystem(
        d=msys.base.d,
        m=msys.base.m,
        hamiltonians=tuple(hams),
        params=msys.base.params,
        name=f"{msys.base.name}-modified" if msys.base.name else "modified",
    )


# ---------------------------------------------------------------------------
# coefficient series of the perturbed system, organized by integral index

class _ModifiedDerivation:
    """Order-k coefficient recursion with the step-size budget split across
    the correction orders of the outer Hamiltonian and the inner factors."""

    def __init__(self, msys: ModifiedSystem):
        self.msys = msys
        self.sys = msys.base
        self._gk: dict[tuple[tuple[int, ...], int], Expr] = {}
        self._h_deriv: dict[tuple[int, int, tuple[int, ...]], Expr] = {}

    def h_deriv(self, r: int, j: int, qs: tuple[int, ...]) -> Expr:
        key = (r, j, qs)
        if key not in self._h_deriv:
            e = self.msys.correction(r, j)
            for k in qs:
                e = diff(e, self.sys.q_names[k])
            self._h_deriv[key] = e
        return self._h_deriv[key]

    def g_k(self, alpha: MultiIndex, k: int) -> Expr:
        key = (alpha.entries, k)
        if key in self._gk:
            return self._gk[key]
        if len(alpha) == 0:
            raise DerivationError("coefficients are indexed by non-empty words")
        if len(alpha) == 1:
            out = simplify(self.msys.correction(alpha.entries[0], k))
        else:
            r = alpha.last
            rest = alpha.drop_last().entries
            d = self.sys.d
            total: Expr = Const(0.0)
            for i in range(1, len(rest) + 1):
                weight = Const(1.0 / math.factorial(i))
                for words in _ordered_splits(rest, i):
                    for ks in product(range(d), repeat=i):
                        for budget in _compositions(k, i + 1):
                            term: Expr = self.h_deriv(r, budget[0], tuple(sorted(ks)))
                            for word, kslot, j_t in zip(words, ks, budget[1:]):
                                inner = self.g_k(MultiIndex(word, self.sys.m), j_t)
                                term = term * diff(inner, self.sys.p_names[kslot])
                            total = total + weight * term
            out = simplify(total)
        self._gk[key] = out
        return out


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class GbarSeries:
    """Coefficients of the perturbed generating function over integral indices.

    ``parts[beta][k]`` collects the order-k contributions (already weighted by
    k! times the zero-interleaving multiplicity); ``terms[beta]`` is their sum.
    The k = 0 part of every index equals the base-system coefficient.
    """

    msys: ModifiedSystem
    terms: Mapping[MultiIndex, Expr]
    parts: Mapping[MultiIndex, tuple[Expr, ...]]
    max_len: int

    def indices(self) -> list[MultiIndex]:
        return sorted(self.terms, key=lambda a: (len(a), a.entries))


def gbar_series(msys: ModifiedSystem, max_len: int = MAX_SERIES_LEN) -> GbarSeries:
    """Assemble the perturbed series coefficients for all indices up to max_len.

    Each index beta receives, for k = 0..len(beta)-1, the order-k coefficient
    of every word alpha obtained by deleting k zeros from beta, weighted by
    k! times the number of deletions that produce alpha.
    """
    if max_len > MAX_SERIES_LEN:
        raise DerivationError(f"max_len {max_len} exceeds cap {MAX_SERIES_LEN}")
    deriv = _ModifiedDerivation(msys)
    terms: dict[MultiIndex, Expr] = {}
    parts: dict[MultiIndex, tuple[Expr, ...]] = {}
    for beta in all_indices(msys.base.m, max_len):
        per_k: list[Expr] = []
        for k in range(len(beta)):
            contrib: Expr = Const(0.0)
            for alpha, tau in zero_deletions(beta, k).items():
                contrib = contrib + Const(float(math.factorial(k) * tau)) * deriv.g_k(alpha, k)
            per_k.append(simplify(contrib))
        total: Expr = Const(0.0)
        for e in per_k:
            total = total + e
        terms[beta] = simplify(total)
        parts[beta] = tuple(per_k)
    return GbarSeries(msys=msys, terms=terms, parts=parts, max_len=max_len)


# ---------------------------------------------------------------------------
# moment-matching residuals

PAIRS_ORDER_1: tuple[tuple[int, int], ...] = ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
PAIRS_ORDER_2: tuple[tuple[int, int], ...] = PAIRS_ORDER_1 + (
    (3, 0), (2, 1), (1, 2), (0, 3),
    (4, 0), (3, 1), (2, 2), (1, 3), (0, 4),
)


def pair_name(powers: tuple[int, int]) -> str:
    a, b = powers
    return f"Sq^{a}*SP^{b}" if a and b else (f"Sq^{a}" if a else f"SP^{b}")


@dataclass(frozen=True)
class ResidualRow:
    pair: tuple[int, int]
    point: tuple[float, float]
    scheme_value: float
    modified_value: float
    stderr: float

    @property
    def difference(self) -> float:
        return abs(self.scheme_value - self.modified_value)


@dataclass(frozen=True)
class MatchingReport:
    k: int
    h: float
    samples: int
    rows: tuple[ResidualRow, ...]

    def max_difference(self, pair: tuple[int, int]) -> float:
        return max(r.difference for r in self.rows if r.pair == pair)

    def max_stderr(self, pair: tuple[int, int]) -> float:
        return max(r.stderr for r in self.rows if r.pair == pair)

    def pairs(self) -> list[tuple[int, int]]:
        return sorted({r.pair for r in self.rows})


def _series_gradient_tables(sys: HamiltonianSystem, terms: Mapping[MultiIndex, Expr]):
    gq = {a: simplify(diff(e, sys.q_names[0])) for a, e in terms.items()}
    gp = {a: simplify(diff(e, sys.p_names[0])) for a, e in terms.items()}
    return gq, gp


def _combine(coeffs: Mapping[MultiIndex, float], ensemble: Mapping[MultiIndex, np.ndarray], n: int):
    out = np.zeros(n)
    for a, c in coeffs.items():
        if c != 0.0:
            out = out + c * ensemble[a]
    return out


def matching_residuals(
    sys: HamiltonianSystem,
    msys: ModifiedSystem,
    k: int,
    h: float,
    points: int = 60_000,
    rng: RngStream | None = None,
    n_phase_points: int = 3,
    substeps: int = 200,
    scheme_terms: Mapping[MultiIndex, Expr] | None = None,
    modified_terms: Mapping[MultiIndex, Expr] | None = None,
    phase_points: Sequence[tuple[float, float]] | None = None,
) -> MatchingReport:
    """Estimate the matching residuals of every order-k pair at random points.

    Both sides are evaluated on one common ensemble of simulated integrals so
    the reported difference is a pathwise mean with its own standard error;
    ``points`` is the Monte Carlo sample count.  A correct order-k modified
    system leaves differences of order h^(k+1), checked by halving h and
    fitting the decay (see :func:`matching_order`).
    """
    if k not in (1, 2):
        raise ModifiedError("matching order k must be 1 or 2")
    if sys.d != 1:
        raise ModifiedError(
            "matching pairs are implemented for d = 1; the multi-component pair "
            "list is not pinned down and stays unverified"
        )
    if rng is None:
        rng = RngStream(0)
    pairs = PAIRS_ORDER_1 if k == 1 else PAIRS_ORDER_2
    if scheme_terms is None:
        scheme_terms = weak_scheme_series(sys, 1).terms
    if modified_terms is None:
        modified_terms = gbar_series(msys, MAX_SERIES_LEN).terms
    if any(contains_opaque(e) for e in modified_terms.values()):
        raise ModifiedError("matching needs concrete corrections, not placeholders")

    s_gq, s_gp = _series_gradient_tables(sys, scheme_terms)
    m_gq, m_gp = _series_gradient_tables(sys, modified_terms)
    all_needed = sorted(set(scheme_terms) | set(modified_terms), key=lambda a: (len(a), a.entries))
    ensemble = integral_ensemble(all_needed, h, substeps, points, rng.generator)

    if phase_points is None:
        point_gen = rng.child(10_000 + rng.stream).generator
        phase_points = [
            (float(point_gen.uniform(-1, 1)), float(point_gen.uniform(-1, 1)))
            for _ in range(n_phase_points)
        ]
    rows: list[ResidualRow] = []
    for pt in phase_points:
        binding = dict(sys.params)
        binding.update({sys.p_names[0]: pt[0], sys.q_names[0]: pt[1]})
        sq = _combine({a: float(evaluate(e, binding)) for a, e in s_gq.items()}, ensemble, points)
        sp = _combine({a: float(evaluate(e, binding)) for a, e in s_gp.items()}, ensemble, points)
        tq = _combine({a: float(evaluate(e, binding)) for a, e in m_gq.items()}, ensemble, points)
        tp = _combine({a: float(evaluate(e, binding)) for a, e in m_gp.items()}, ensemble, points)
        for a, b in pairs:
            u = sq**a * sp**b
            v = tq**a * tp**b
            diff_path = u - v
            se = float(diff_path.std(ddof=1) / math.sqrt(points))
            rows.append(
                ResidualRow(
                    pair=(a, b),
                    point=pt,
                    scheme_value=float(u.mean()),
                    modified_value=float(v.mean()),
                    stderr=se,
                )
            )
    return MatchingReport(k=k, h=h, samples=points, rows=tuple(rows))


def matching_order(
    sys: HamiltonianSystem,
    msys: ModifiedSystem,
    k: int,
    h: float,
    points: int = 60_000,
    rng: RngStream | None = None,
    **kwargs,
) -> dict[tuple[int, int], float]:
    """Observed decay rate per pair between step sizes h and h/2.

    Pairs whose residual is washed out by Monte Carlo noise on either grid
    are reported as infinity (no resolvable mismatch at this sample size).
    """
    if rng is None:
        rng = RngStream(0)
    n_pts = kwargs.pop("n_phase_points", 3)
    point_gen = rng.child(10_000 + rng.stream).generator
    pts = [
        (float(point_gen.uniform(-1, 1)), float(point_gen.uniform(-1, 1)))
        for _ in range(n_pts)
    ]
    coarse = matching_residuals(sys, msys, k, h, points, rng.child(1), phase_points=pts, **kwargs)
    fine = matching_residuals(sys, msys, k, h / 2, points, rng.child(2), phase_points=pts, **kwargs)
    out: dict[tuple[int, int], float] = {}
    for pair in coarse.pairs():
        e1, s1 = coarse.max_difference(pair), coarse.max_stderr(pair)
        e2, s2 = fine.max_difference(pair), fine.max_stderr(pair)
        if e1 <= 3 * s1 or e2 <= 3 * s2:
            out[pair] = float("inf")
        else:
            out[pair] = math.log2(e1 / e2)
    return out


def matching_report_csv(report: MatchingReport) -> str:
    lines = ["pair,h,p,q,scheme,modified,abs_diff,stderr"]
    for r in report.rows:
        lines.append(
            f"{pair_name(r.pair)},{report.h},{r.point[0]:.6f},{r.point[1]:.6f},"
            f"{r.scheme_value:.12e},{r.modified_value:.12e},{r.difference:.12e},{r.stderr:.12e}"
        )
    return "\n".join(lines) + "\n"


def modified_report(msys: ModifiedSystem, h: float | None = None) -> str:
    """Rendered perturbed Hamiltonians and, at a concrete h, the SDE form."""
    lines = []
    polys = msys.hamiltonian_polynomials()
    for j, e in enumerate(polys):
        lines.append(f"H~_{j} = {render(e)}")
    if h is not None:
        inst = modified_sde(msys, h)
        lines.append(f"# instantiated at h = {h}")
        for comp, qn in enumerate(inst.q_names):
            drift = render(simplify(Const(-1.0) * diff(inst.hamiltonians[0], qn)))
            noise = [
                render(simplify(Const(-1.0) * diff(inst.hamiltonians[r], qn)))
                for r in range(1, inst.m + 1)
            ]
            lines.append(f"dp{comp+1} = ({drift}) dt " + " ".join(f"+ ({g}) dW{r+1}" for r, g in enumerate(noise)))
        for comp, pn in enumerate(inst.p_names):
            drift = render(simplify(diff(inst.hamiltonians[0], pn)))
            noise = [
                render(simplify(diff(inst.hamiltonians[r], pn)))
                for r in range(1, inst.m + 1)
            ]
            lines.append(f"dq{comp+1} = ({drift}) dt " + " ".join(f"+ ({g}) dW{r+1}" for r, g in enumerate(noise)))
    return "\n".join(lines) + "\n"
