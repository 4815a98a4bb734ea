"""Per-step random integrals for truncated schemes and a Monte Carlo oracle.

Schemes of weak order <= 2 need iterated integrals with index length <= 2
per step.  These are filled from the Wiener increments by moment-correct
substitutes: the repeated-noise pair uses the exact quadratic identity, the
mixed pair uses an antisymmetric two-point auxiliary, and the mixed
time-noise pairs use half the step times the increment.

The oracle, independent of all of that, simulates iterated Stratonovich (or
Ito) integrals on a substep grid: trapezoidal (resp. left-point) updates of
the nested integrals converge to the Stratonovich (resp. Ito) values, so
expectations of products can be estimated with standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from .multiindex import MultiIndex

GAUSSIAN_EXACT: "Mode" = "gaussian-exact"
WEAK2_DISCRETE: "Mode" = "weak2-discrete"
Mode = Literal["gaussian-exact", "weak2-discrete"]

ORACLE_MIN_SUBSTEPS = 100
ORACLE_MAX_INDEX_LEN = 4
ORACLE_WORK_CAP = 4e10


class NoiseError(Exception):
    pass


class RngStream:
    """Reproducible random stream: identical (seed, stream) gives identical draws.

    Stream ids separate parallel workers; for per-path simulation the stream
    id is simply the path index.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._gen: np.random.Generator | None = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
            self._gen = np.random.default_rng(ss)
        return self._gen

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, stream)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"


@dataclass
class NoiseSample:
    """Values of the per-step integrals, Ito basis, keyed by index."""

    h: float
    values: dict[MultiIndex, float]
    mode: Mode = GAUSSIAN_EXACT

    def __getitem__(self, idx: MultiIndex) -> float:
        return self.values[idx]


def _validate_needed(h: float, m: int, needed: Sequence[MultiIndex]) -> None:
    if h <= 0:
        raise NoiseError(f"step size must be positive, got {h}")
    for idx in needed:
        if len(idx) == 0 or len(idx) > 2:
            raise NoiseError(f"per-step sampling covers index lengths 1..2, got {idx}")
        if idx.m != m or any(e > m for e in idx.entries):
            raise NoiseError(f"index {idx} incompatible with m={m}")


def draw_increments(h: float, m: int, mode: Mode, gen: np.random.Generator, size: int | None = None):
    """Wiener increments dW (shape (..., m)) and antisymmetric pair auxiliary xi.

    xi[(r, s)] = -xi[(s, r)] takes values +-h with equal probability; it is
    drawn for every unordered pair so the stream layout does not depend on
    which indices a scheme happens to need.
    """
    if h <= 0:
        raise NoiseError(f"step size must be positive, got {h}")
    shape = (m,) if size is None else (size, m)
    if mode == GAUSSIAN_EXACT:
        dw = gen.normal(0.0, math.sqrt(h), size=shape)
    elif mode == WEAK2_DISCRETE:
        u = gen.uniform(0.0, 1.0, size=shape)
        dw = np.where(u < 1 / 6, math.sqrt(3 * h), np.where(u < 2 / 6, -math.sqrt(3 * h), 0.0))
    else:
        raise NoiseError(f"unknown sampling mode {mode!r}")
    xi: dict[tuple[int, int], np.ndarray | float] = {}
    for r in range(1, m + 1):
        for s in range(r + 1, m + 1):
            signs = gen.integers(0, 2, size=() if size is None else (size,)) * 2 - 1
            xi[(r, s)] = h * signs
            xi[(s, r)] = -h * signs
    return dw, xi


def values_from_increments(
    h: float,
    m: int,
    needed: Sequence[MultiIndex],
    dw,
    xi: Mapping[tuple[int, int], float] | None = None,
):
    """Fill the per-step integral values from given increments (pure)."""
    _validate_needed(h, m, needed)
    dw = np.asarray(dw, dtype=float)
    values = {}
    for idx in needed:
        e = idx.entries
        if e == (0,):
            v = h
        elif len(e) == 1:
            v = dw[..., e[0] - 1]
        elif e == (0, 0):
            v = h * h / 2
        elif e[0] == 0:
            v = 0.5 * h * dw[..., e[1] - 1]
        elif e[1] == 0:
            v = 0.5 * h * dw[..., e[0] - 1]
        elif e[0] == e[1]:
            v = 0.5 * (dw[..., e[0] - 1] ** 2 - h)
        else:
            if xi is None:
                raise NoiseError(f"mixed index {idx} needs the pair auxiliary xi")
            v = 0.5 * (dw[..., e[0] - 1] * dw[..., e[1] - 1] - xi[(e[0], e[1])])
        values[idx] = v
    return values


def sample(
    h: float,
    m: int,
    needed: Sequence[MultiIndex],
    mode: Mode = GAUSSIAN_EXACT,
    rng: RngStream | np.random.Generator | None = None,
) -> NoiseSample:
    """Draw one step's worth of integral values."""
    gen = rng.generator if isinstance(rng, RngStream) else rng
    if gen is None:
        raise NoiseError("an RngStream or numpy Generator is required")
    dw, xi = draw_increments(h, m, mode, gen)
    values = values_from_increments(h, m, needed, dw, xi)
    return NoiseSample(h=h, values={k: float(v) for k, v in values.items()}, mode=mode)


def sample_arrays(
    h: float,
    m: int,
    needed: Sequence[MultiIndex],
    mode: Mode,
    gen: np.random.Generator,
    size: int,
) -> dict[MultiIndex, np.ndarray]:
    """Vectorized variant of :func:`sample`: each value is an array of length size."""
    dw, xi = draw_increments(h, m, mode, gen, size=size)
    values = values_from_increments(h, m, needed, dw, xi)
    return {k: np.broadcast_to(np.asarray(v, dtype=float), (size,)) for k, v in values.items()}


# ---------------------------------------------------------------------------
# substep-grid oracle

def _prefix_children(indices: Sequence[MultiIndex]) -> dict[tuple[int, ...], list[int]]:
    children: dict[tuple[int, ...], set[int]] = {(): set()}
    for idx in indices:
        prefix: tuple[int, ...] = ()
        for letter in idx.entries:
            children.setdefault(prefix, set()).add(letter)
            prefix = prefix + (letter,)
        children.setdefault(prefix, set())
    return {k: sorted(v) for k, v in children.items()}


def integral_ensemble(
    indices: Sequence[MultiIndex],
    h: float,
    substeps: int,
    samples: int,
    gen: np.random.Generator,
    stratonovich: bool = True,
    batch: int = 2048,
) -> dict[MultiIndex, np.ndarray]:
    """Simulate iterated integrals over [0, h] for many independent paths.

    Nested integrals are advanced on a uniform grid; the integrand is the
    running value of the inner integral, taken at the trapezoidal midpoint
    for Stratonovich or at the left endpoint for Ito.  Shared prefixes are
    computed once per path batch.
    """
    if not indices:
        return {}
    if h <= 0:
        raise NoiseError(f"step size must be positive, got {h}")
    ms = {idx.m for idx in indices}
    if len(ms) != 1:
        raise NoiseError("all indices must share the same noise count m")
    m = ms.pop()
    if any(len(idx) == 0 for idx in indices):
        raise NoiseError("integral indices must be non-empty")
    children = _prefix_children(indices)
    needed = {idx.entries for idx in indices}
    out = {idx: np.empty(samples) for idx in indices}
    by_entries = {idx.entries: idx for idx in indices}
    dt = h / substeps

    done = 0
    while done < samples:
        b = min(batch, samples - done)
        dw = gen.normal(0.0, math.sqrt(dt), size=(b, substeps, m)) if m else None

        def descend(prefix: tuple[int, ...], level: np.ndarray) -> None:
            if prefix in needed:
                out[by_entries[prefix]][done : done + b] = level[:, -1]
            for letter in children.get(prefix, ()):
                integrand = 0.5 * (level[:, :-1] + level[:, 1:]) if stratonovich else level[:, :-1]
                delta = dt if letter == 0 else dw[:, :, letter - 1]
                stepped = np.cumsum(integrand * delta, axis=1)
                child = np.empty((b, substeps + 1))
                child[:, 0] = 0.0
                child[:, 1:] = stepped
                descend(prefix + (letter,), child)

        descend((), np.ones((b, substeps + 1)))
        done += b
    return out


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    stderr: float
    samples: int

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.value - target) <= k * self.stderr


def moment_oracle(
    alphas: Sequence[MultiIndex],
    powers: Sequence[int],
    h: float,
    substeps: int = 1000,
    samples: int = 100_000,
    rng: RngStream | np.random.Generator | None = None,
    stratonovich: bool = True,
) -> OracleEstimate:
    """Monte Carlo estimate of E[prod_i J_{alpha_i}^{power_i}] with its SE."""
    if len(alphas) != len(powers):
        raise NoiseError("alphas and powers must have equal length")
    if substeps < ORACLE_MIN_SUBSTEPS:
        raise NoiseError(f"oracle needs at least {ORACLE_MIN_SUBSTEPS} substeps")
    for a in alphas:
        if len(a) > ORACLE_MAX_INDEX_LEN:
            raise NoiseError(f"oracle index length capped at {ORACLE_MAX_INDEX_LEN}, got {a}")
    work = float(samples) * substeps * max(len(alphas), 1)
    if work > ORACLE_WORK_CAP:
        raise NoiseError("resource caps exceeded: reduce samples or substeps")
    gen = rng.generator if isinstance(rng, RngStream) else rng
    if gen is None:
        raise NoiseError("an RngStream or numpy Generator is required")
    values = integral_ensemble(list(dict.fromkeys(alphas)), h, substeps, samples, gen,
                               stratonovich=stratonovich)
    prod = np.ones(samples)
    for a, k in zip(alphas, powers):
        prod = prod * values[a] ** k
    mean = float(np.mean(prod))
    stderr = float(np.std(prod, ddof=1) / math.sqrt(samples)) if samples > 1 else float("inf")
    return OracleEstimate(value=mean, stderr=stderr, samples=samples)
