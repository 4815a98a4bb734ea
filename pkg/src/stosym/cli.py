"""Command-line front end: derivations, simulation, audits and weak-order studies.

A system lives in a sectioned key-value config file (expressions quoted, no
code execution)::

    [system]
    name = oscillator
    d = 1
    m = 1

    [parameters]
    sigma = 0.5

    [hamiltonians]
    H0 = "(p^2+q^2)/2"
    H1 = "-sigma*q"

    [initial]
    p = 0.0
    q = 1.0

    [defaults]
    h = 0.05
    T = 1.0
    samples = 100000
    seed = 42

Exit codes: 0 success, 1 usage, 2 config, 3 numeric failure, 4 unsupported
noise class.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .genfun import (
    DerivationError,
    HamiltonianSystem,
    derivation_report,
    series,
    to_ito_truncation,
)
from .integrator import (
    EulerMaruyamaControl,
    NumericalError,
    PhasePoint,
    SolverError,
    simulate,
    symplecticity_defect,
    weak_scheme,
)
from .modified import (
    ModifiedError,
    UnsupportedNoiseError,
    first_order_modified,
    matching_report_csv,
    matching_residuals,
    modified_report,
)
from .noise import GAUSSIAN_EXACT, WEAK2_DISCRETE, NoiseError, RngStream, sample
from .symexpr import ExprError, parse, render
from .weaklab import (
    WeakLabError,
    WeakObservable,
    report_csv,
    weak_error,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_UNSUPPORTED = 4


class ConfigError(Exception):
    pass


class UsageError(Exception):
    pass


@dataclass
class SystemConfig:
    name: str
    d: int
    m: int
    params: dict[str, float]
    hamiltonian_sources: tuple[str, ...]
    initial_p: tuple[float, ...]
    initial_q: tuple[float, ...]
    defaults: dict[str, float] = field(default_factory=dict)

    def system(self) -> HamiltonianSystem:
        try:
            hams = tuple(parse(src) for src in self.hamiltonian_sources)
        except ExprError as err:
            raise ConfigError(f"bad Hamiltonian expression: {err}") from None
        try:
            return HamiltonianSystem(
                d=self.d, m=self.m, hamiltonians=hams, params=self.params, name=self.name
            )
        except ValueError as err:
            raise ConfigError(str(err)) from None

    def initial_point(self) -> PhasePoint:
        return PhasePoint(np.array(self.initial_p), np.array(self.initial_q))

    def default(self, key: str, fallback: float) -> float:
        return self.defaults.get(key, fallback)


def _unquote(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return text


def load_config(path: str | Path) -> SystemConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as err:
        raise ConfigError(f"cannot parse config: {err}") from None
    try:
        sysec = cp["system"]
        name = sysec.get("name", path.stem)
        d = sysec.getint("d")
        m = sysec.getint("m")
        params = {k: float(_unquote(v)) for k, v in cp.items("parameters")} if cp.has_section("parameters") else {}
        ham_sec = cp["hamiltonians"]
        sources = []
        for j in range(m + 1):
            key = f"h{j}"
            if key not in ham_sec:
                raise ConfigError(f"missing Hamiltonian H{j} in [hamiltonians]")
            sources.append(_unquote(ham_sec[key]))
        init = cp["initial"]
        if d == 1:
            p0 = (float(_unquote(init["p"])),)
            q0 = (float(_unquote(init["q"])),)
        else:
            p0 = tuple(float(_unquote(init[f"p{k+1}"])) for k in range(d))
            q0 = tuple(float(_unquote(init[f"q{k+1}"])) for k in range(d))
        defaults = (
            {k: float(_unquote(v)) for k, v in cp.items("defaults")}
            if cp.has_section("defaults")
            else {}
        )
    except (KeyError, ValueError, configparser.Error) as err:
        raise ConfigError(f"invalid config {path}: {err}") from None
    cfg = SystemConfig(
        name=name, d=d, m=m, params=params, hamiltonian_sources=tuple(sources),
        initial_p=p0, initial_q=q0, defaults=defaults,
    )
    cfg.system()  # validate now so every command fails early with exit 2
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stosym", description="stochastic symplectic scheme toolkit")
    parser.add_argument("--config", required=True, help="system definition file")
    parser.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for path ensembles")
    parser.add_argument("--out-dir", default=".", help="directory for output files")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive-genfun", help="coefficient tables in both integral bases")
    p.add_argument("--max-len", type=int, default=2)
    p.add_argument("--weak-order", type=int, default=1)

    p = sub.add_parser("simulate", help="sample one path of the generated scheme")
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--weak-order", type=int, default=1)
    p.add_argument("--mode", choices=["gaussian", "weak2"], default="gaussian")

    p = sub.add_parser("symplecticity", help="Jacobian defect audit plus Euler control")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--weak-order", type=int, default=1)

    p = sub.add_parser("derive-modified", help="first-order modified system report")
    p.add_argument("--h", type=float, default=None)

    p = sub.add_parser("match", help="moment-matching residuals of the modified system")
    p.add_argument("--k", type=int, default=2, choices=[1, 2])
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--points", type=int, default=60_000)

    p = sub.add_parser("weak-order", help="weak convergence study")
    p.add_argument("--phi", action="append", default=None, help="observable (repeatable)")
    p.add_argument("--hs", default="0.2,0.1,0.05,0.025")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--reference", choices=["oracle", "self-sde", "modified-sde"], default="oracle")
    p.add_argument("--crn", action="store_true", help="couple target and reference paths")
    return parser


def _write(out_dir: str, filename: str, text: str) -> Path:
    path = Path(out_dir) / filename
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    print(path)
    return path


def cmd_derive_genfun(cfg: SystemConfig, args) -> int:
    sys_ = cfg.system()
    strat = series(sys_, args.max_len)
    text = f"# system: {cfg.name}\n# stratonovich basis ({strat.truncation})\n"
    text += derivation_report(strat)
    source_len = max(args.max_len, 2 * args.weak_order)
    source = strat if strat.max_len >= source_len else series(sys_, source_len)
    ito = to_ito_truncation(source, args.weak_order)
    text += f"# ito basis ({ito.truncation})\n"
    text += derivation_report(ito)
    _write(args.out_dir, f"{cfg.name}_genfun.txt", text)
    return EXIT_OK


def cmd_simulate(cfg: SystemConfig, args) -> int:
    sys_ = cfg.system()
    h = args.h if args.h is not None else cfg.default("h", 0.01)
    T = args.T if args.T is not None else cfg.default("t", 1.0)
    n_steps = max(1, round(T / h))
    seed = args.seed if args.seed is not None else int(cfg.default("seed", 0))
    scheme = weak_scheme(sys_, args.weak_order)
    mode = GAUSSIAN_EXACT if args.mode == "gaussian" else WEAK2_DISCRETE
    path = simulate(scheme, cfg.initial_point(), h, n_steps, RngStream(seed, 0), mode)
    d = sys_.d
    header = "step,time," + ",".join(f"p{k+1}" for k in range(d)) + "," + ",".join(
        f"q{k+1}" for k in range(d)
    )
    lines = [header]
    for n, x in enumerate(path):
        cols = [str(n), f"{n * h:.10g}"]
        cols += [f"{v:.12e}" for v in x.p] + [f"{v:.12e}" for v in x.q]
        lines.append(",".join(cols))
    _write(args.out_dir, f"{cfg.name}_path.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_symplecticity(cfg: SystemConfig, args) -> int:
    sys_ = cfg.system()
    seed = args.seed if args.seed is not None else int(cfg.default("seed", 0))
    scheme = weak_scheme(sys_, args.weak_order)
    control = EulerMaruyamaControl(sys_)
    gen = RngStream(seed, 1).generator
    lines = ["kind,trial,h,defect"]
    worst = 0.0
    for trial in range(args.trials):
        x = PhasePoint(gen.uniform(-1, 1, sys_.d), gen.uniform(-1, 1, sys_.d))
        h = float(10 ** gen.uniform(-3, -1))
        w = sample(h, sys_.m, scheme.noise_requirements(), rng=gen)
        defect = symplecticity_defect(scheme, x, w)
        worst = max(worst, defect)
        lines.append(f"scheme,{trial},{h:.6e},{defect:.6e}")
    x = PhasePoint(np.zeros(sys_.d), np.ones(sys_.d))
    w = sample(0.1, sys_.m, control.noise_requirements(), rng=gen)
    control_defect = symplecticity_defect(control, x, w)
    lines.append(f"euler-control,0,1.000000e-01,{control_defect:.6e}")
    lines.append(f"summary,max_scheme_defect,,{worst:.6e}")
    _write(args.out_dir, f"{cfg.name}_symplecticity.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_derive_modified(cfg: SystemConfig, args) -> int:
    sys_ = cfg.system()
    msys = first_order_modified(sys_)
    h = args.h if args.h is not None else cfg.default("h", 0.01)
    text = f"# system: {cfg.name}\n" + modified_report(msys, h)
    text += "# machine-readable corrections\n"
    for j in range(sys_.m + 1):
        text += f"H{j}[1] = {render(msys.corrections[j][0])}\n"
    _write(args.out_dir, f"{cfg.name}_modified.txt", text)
    return EXIT_OK


def cmd_match(cfg: SystemConfig, args) -> int:
    sys_ = cfg.system()
    msys = first_order_modified(sys_)
    h = args.h if args.h is not None else cfg.default("h", 0.02)
    seed = args.seed if args.seed is not None else int(cfg.default("seed", 0))
    report = matching_residuals(sys_, msys, k=args.k, h=h, points=args.points, rng=RngStream(seed))
    _write(args.out_dir, f"{cfg.name}_match.csv", matching_report_csv(report))
    return EXIT_OK


def cmd_weak_order(cfg: SystemConfig, args) -> int:
    sys_ = cfg.system()
    T = args.T if args.T is not None else cfg.default("t", 1.0)
    samples = args.samples if args.samples is not None else int(cfg.default("samples", 100_000))
    seed = args.seed if args.seed is not None else int(cfg.default("seed", 0))
    hs = [float(tok) for tok in args.hs.split(",") if tok]
    phis = [WeakObservable.of(t) for t in (args.phi or ["p", "q", "p^2+q^2", "p*q"])]
    msys = None
    if args.reference == "modified-sde":
        msys = first_order_modified(sys_)
    reports = weak_error(
        sys_, phis, T=T, hs=hs, samples=samples, rng=RngStream(seed),
        reference=args.reference, x0=cfg.initial_point(), msys=msys,
        crn=args.crn, threads=args.threads,
    )
    _write(args.out_dir, f"{cfg.name}_weak_order.csv", report_csv(reports))
    return EXIT_OK


_COMMANDS = {
    "derive-genfun": cmd_derive_genfun,
    "simulate": cmd_simulate,
    "symplecticity": cmd_symplecticity,
    "derive-modified": cmd_derive_modified,
    "match": cmd_match,
    "weak-order": cmd_weak_order,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except UnsupportedNoiseError as err:
        print(f"unsupported noise class ({err.classification}): {err}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (DerivationError, ModifiedError, ExprError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, NumericalError, NoiseError, WeakLabError) as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
