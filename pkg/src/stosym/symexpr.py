"""Minimal symbolic scalar expressions: parse, differentiate, simplify, evaluate.

Supports exactly what Hamiltonians and generating-function coefficients need:
real constants, named symbols (phase variables and parameters), sin/cos/exp,
the four arithmetic operations, and integer powers.  Uppercase momentum names
(``P``, ``P1``, ...) alias the corresponding lowercase ones, since the
new-momentum argument of a generating function occupies the same slot as the
momentum variable it replaces.

Grammar accepted by :func:`parse` (documented in the README)::

    expr     := term (('+' | '-') term)*
    term     := unary (('*' | '/') unary)*
    unary    := '-' unary | power
    power    := atom ['^' exponent]          # exponent: integer, or (-integer)
    atom     := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Simplification rewrites an expression into an expanded sum of coefficient
weighted monomials over atomic factors (symbols, function applications and
opaque placeholders), so two expressions that are polynomially identical
simplify to structurally equal trees.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

_FUNCTIONS: dict[str, Callable] = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_MOMENTUM_ALIAS = re.compile(r"^P(\d*)$")


class ExprError(Exception):
    """Base class for expression failures."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalError(ExprError):
    pass


def _canonical_name(name: str) -> str:
    match = _MOMENTUM_ALIAS.match(name)
    if match:
        return "p" + match.group(1)
    return name


class Expr:
    """Base node; subclasses are immutable and hashable by structure."""

    __slots__ = ()

    def key(self) -> tuple:
        raise NotImplementedError

    def __eq__(self, other) -> bool:
        return isinstance(other, Expr) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"{type(self).__name__}({render(self)!r})"

    def __str__(self) -> str:
        return render(self)

    def _coerce(self, other) -> "Expr":
        if isinstance(other, Expr):
            return other
        if isinstance(other, (int, float)):
            return Const(float(other))
        return NotImplemented

    def __add__(self, other):
        return Add(self, self._coerce(other))

    def __radd__(self, other):
        return Add(self._coerce(other), self)

    def __sub__(self, other):
        return Sub(self, self._coerce(other))

    def __rsub__(self, other):
        return Sub(self._coerce(other), self)

    def __mul__(self, other):
        return Mul(self, self._coerce(other))

    def __rmul__(self, other):
        return Mul(self._coerce(other), self)

    def __truediv__(self, other):
        return Div(self, self._coerce(other))

    def __rtruediv__(self, other):
        return Div(self._coerce(other), self)

    def __pow__(self, exponent: int):
        return Pow(self, exponent)

    def __neg__(self):
        return Neg(self)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        object.__setattr__(self, "value", float(value))

    def key(self):
        return ("const", self.value)


class Sym(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", _canonical_name(name))

    def key(self):
        return ("sym", self.name)


class Opaque(Expr):
    """Named placeholder for an unknown smooth function of (p, q), d = 1 only.

    ``dp`` and ``dq`` record how many momentum/position derivatives have been
    applied; differentiation just increments the counters.  Opaque atoms
    cannot be numerically evaluated.
    """

    __slots__ = ("name", "dp", "dq")

    def __init__(self, name: str, dp: int = 0, dq: int = 0):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "dp", int(dp))
        object.__setattr__(self, "dq", int(dq))

    def key(self):
        return ("opaque", self.name, self.dp, self.dq)


class Neg(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        object.__setattr__(self, "arg", arg)

    def key(self):
        return ("neg", self.arg.key())


class _Binary(Expr):
    __slots__ = ("lhs", "rhs")
    tag = ""

    def __init__(self, lhs: Expr, rhs: Expr):
        object.__setattr__(self, "lhs", lhs)
        object.__setattr__(self, "rhs", rhs)

    def key(self):
        return (self.tag, self.lhs.key(), self.rhs.key())


class Add(_Binary):
    __slots__ = ()
    tag = "add"


class Sub(_Binary):
    __slots__ = ()
    tag = "sub"


class Mul(_Binary):
    __slots__ = ()
    tag = "mul"


class Div(_Binary):
    __slots__ = ()
    tag = "div"


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base: Expr, exponent: int):
        if not isinstance(exponent, int):
            raise ExprError(f"power exponent must be an integer, got {exponent!r}")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", exponent)

    def key(self):
        return ("pow", self.base.key(), self.exponent)


class Fun(Expr):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Expr):
        if name not in _FUNCTIONS:
            raise ExprError(f"unknown function {name!r}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "arg", arg)

    def key(self):
        return ("fun", self.name, self.arg.key())


ZERO = Const(0.0)
ONE = Const(1.0)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        match = _TOKEN.match(src, pos)
        if match is None:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}", pos)
        if match.lastgroup is not None:
            tokens.append((match.lastgroup, match.group(match.lastgroup), match.start(match.lastgroup)))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.src))

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, value, pos = self.next()
        if kind != "op" or value != op:
            raise ParseError(f"expected {op!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, pos = self.peek()
        if kind is not None:
            raise ParseError(f"unexpected token {value!r}", pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.next()
                rhs = self.term()
                e = Add(e, rhs) if value == "+" else Sub(e, rhs)
            else:
                return e

    def term(self) -> Expr:
        e = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.next()
                rhs = self.unary()
                e = Mul(e, rhs) if value == "*" else Div(e, rhs)
            else:
                return e

    def unary(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.next()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.next()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        kind, value, pos = self.next()
        if kind == "num":
            if "." in value:
                raise ParseError("power exponent must be an integer", pos)
            return int(value)
        if kind == "op" and value == "(":
            sign = 1
            kind, value, pos = self.next()
            if kind == "op" and value == "-":
                sign = -1
                kind, value, pos = self.next()
            if kind != "num" or "." in value:
                raise ParseError("power exponent must be an integer", pos)
            self.expect_op(")")
            return sign * int(value)
        raise ParseError("power exponent must be an integer", pos)

    def atom(self) -> Expr:
        kind, value, pos = self.next()
        if kind == "num":
            return Const(float(value))
        if kind == "name":
            nxt_kind, nxt_value, _ = self.peek()
            if nxt_kind == "op" and nxt_value == "(":
                if value not in _FUNCTIONS:
                    raise ParseError(f"unknown function {value!r}", pos)
                self.next()
                arg = self.expr()
                self.expect_op(")")
                return Fun(value, arg)
            return Sym(value)
        if kind == "op" and value == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ParseError(f"expected a value, got {value!r}", pos)


def parse(src: str) -> Expr:
    """Parse an infix expression string into a tree."""
    return _Parser(src).parse()


# ---------------------------------------------------------------------------
# structural queries

def free_symbols(e: Expr) -> set[str]:
    out: set[str] = set()

    def walk(node: Expr):
        if isinstance(node, Sym):
            out.add(node.name)
        elif isinstance(node, Neg):
            walk(node.arg)
        elif isinstance(node, _Binary):
            walk(node.lhs)
            walk(node.rhs)
        elif isinstance(node, Pow):
            walk(node.base)
        elif isinstance(node, Fun):
            walk(node.arg)

    walk(e)
    return out


def contains_opaque(e: Expr) -> bool:
    if isinstance(e, Opaque):
        return True
    if isinstance(e, Neg):
        return contains_opaque(e.arg)
    if isinstance(e, _Binary):
        return contains_opaque(e.lhs) or contains_opaque(e.rhs)
    if isinstance(e, Pow):
        return contains_opaque(e.base)
    if isinstance(e, Fun):
        return contains_opaque(e.arg)
    return False


# ---------------------------------------------------------------------------
# differentiation

def diff(e: Expr, v: str, declared: Iterable[str] | None = None) -> Expr:
    """Exact partial derivative of ``e`` with respect to the symbol ``v``."""
    v = _canonical_name(v)
    if declared is not None and v not in {_canonical_name(n) for n in declared}:
        raise ExprError(f"cannot differentiate with respect to undeclared variable {v!r}")
    return simplify(_diff(e, v))


def _diff(e: Expr, v: str) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Sym):
        return ONE if e.name == v else ZERO
    if isinstance(e, Opaque):
        if v == "p":
            return Opaque(e.name, e.dp + 1, e.dq)
        if v == "q":
            return Opaque(e.name, e.dp, e.dq + 1)
        return ZERO
    if isinstance(e, Neg):
        return Neg(_diff(e.arg, v))
    if isinstance(e, Add):
        return Add(_diff(e.lhs, v), _diff(e.rhs, v))
    if isinstance(e, Sub):
        return Sub(_diff(e.lhs, v), _diff(e.rhs, v))
    if isinstance(e, Mul):
        return Add(Mul(_diff(e.lhs, v), e.rhs), Mul(e.lhs, _diff(e.rhs, v)))
    if isinstance(e, Div):
        num = Sub(Mul(_diff(e.lhs, v), e.rhs), Mul(e.lhs, _diff(e.rhs, v)))
        return Div(num, Pow(e.rhs, 2))
    if isinstance(e, Pow):
        if e.exponent == 0:
            return ZERO
        inner = _diff(e.base, v)
        return Mul(Mul(Const(e.exponent), Pow(e.base, e.exponent - 1)), inner)
    if isinstance(e, Fun):
        inner = _diff(e.arg, v)
        if e.name == "sin":
            outer: Expr = Fun("cos", e.arg)
        elif e.name == "cos":
            outer = Neg(Fun("sin", e.arg))
        else:
            outer = Fun("exp", e.arg)
        return Mul(outer, inner)
    raise ExprError(f"cannot differentiate node {type(e).__name__}")


# ---------------------------------------------------------------------------
# simplification: expand into sum of coefficient-weighted monomials

# A term is (coeff, factors) with factors a tuple of (atom, exponent) sorted
# by the atom's structural key; atoms are Sym, Opaque, Fun or a rebuilt sum
# appearing as the base of a negative power.

_Term = tuple[float, tuple[tuple[Expr, int], ...]]


def _merge_terms(terms: Iterable[_Term]) -> list[_Term]:
    acc: dict[tuple, tuple[float, tuple[tuple[Expr, int], ...]]] = {}
    for coeff, factors in terms:
        k = tuple((atom.key(), exp) for atom, exp in factors)
        if k in acc:
            acc[k] = (acc[k][0] + coeff, factors)
        else:
            acc[k] = (coeff, factors)
    out = [(c, f) for c, f in acc.values() if c != 0.0]
    out.sort(key=lambda t: (tuple((a.key(), x) for a, x in t[1]), t[0]))
    return out


def _mul_terms(a: list[_Term], b: list[_Term]) -> list[_Term]:
    prods = []
    for ca, fa in a:
        for cb, fb in b:
            powers: dict[tuple, tuple[Expr, int]] = {}
            for atom, exp in fa + fb:
                k = atom.key()
                if k in powers:
                    powers[k] = (atom, powers[k][1] + exp)
                else:
                    powers[k] = (atom, exp)
            factors = tuple(
                sorted(((atom, exp) for atom, exp in powers.values() if exp != 0),
                       key=lambda fe: (fe[0].key(), fe[1]))
            )
            prods.append((ca * cb, factors))
    return _merge_terms(prods)


def _pow_terms(base: list[_Term], n: int) -> list[_Term]:
    out: list[_Term] = [(1.0, ())]
    for _ in range(n):
        out = _mul_terms(out, base)
    return out


def _invert_terms(terms: list[_Term]) -> list[_Term]:
    if not terms:
        raise EvalError("division by zero expression")
    if len(terms) == 1:
        coeff, factors = terms[0]
        if coeff == 0.0:
            raise EvalError("division by zero expression")
        inverted = tuple((atom, -exp) for atom, exp in factors)
        return [(1.0 / coeff, inverted)]
    atom = _rebuild(terms)
    return [(1.0, ((atom, -1),))]


def _atom_term(atom: Expr) -> list[_Term]:
    return [(1.0, ((atom, 1),))]


def _expand(e: Expr) -> list[_Term]:
    if isinstance(e, Const):
        return [(e.value, ())] if e.value != 0.0 else []
    if isinstance(e, (Sym, Opaque)):
        return _atom_term(e)
    if isinstance(e, Fun):
        arg = simplify(e.arg)
        if isinstance(arg, Const):
            return [(float(_FUNCTIONS[e.name](arg.value)), ())]
        return _atom_term(Fun(e.name, arg))
    if isinstance(e, Neg):
        return [(-c, f) for c, f in _expand(e.arg)]
    if isinstance(e, Add):
        return _merge_terms(_expand(e.lhs) + _expand(e.rhs))
    if isinstance(e, Sub):
        return _merge_terms(_expand(e.lhs) + [(-c, f) for c, f in _expand(e.rhs)])
    if isinstance(e, Mul):
        return _mul_terms(_expand(e.lhs), _expand(e.rhs))
    if isinstance(e, Div):
        return _mul_terms(_expand(e.lhs), _invert_terms(_expand(e.rhs)))
    if isinstance(e, Pow):
        n = e.exponent
        if n == 0:
            return [(1.0, ())]
        if n > 0:
            return _pow_terms(_expand(e.base), n)
        return _invert_terms(_pow_terms(_expand(e.base), -n))
    raise ExprError(f"cannot simplify node {type(e).__name__}")


def _rebuild(terms: list[_Term]) -> Expr:
    if not terms:
        return ZERO

    def build_term(coeff: float, factors: tuple[tuple[Expr, int], ...]) -> Expr:
        parts: list[Expr] = []
        for atom, exp in factors:
            parts.append(atom if exp == 1 else Pow(atom, exp))
        if not parts:
            return Const(coeff)
        prod = parts[0]
        for p in parts[1:]:
            prod = Mul(prod, p)
        if coeff == 1.0:
            return prod
        return Mul(Const(coeff), prod)

    out = build_term(*terms[0])
    for coeff, factors in terms[1:]:
        out = Add(out, build_term(coeff, factors))
    return out


def simplify(e: Expr) -> Expr:
    """Expand and collect; evaluates identically to the input everywhere."""
    return _rebuild(_expand(e))


def is_const(e: Expr, value: float | None = None) -> bool:
    if not isinstance(e, Const):
        return False
    return True if value is None else e.value == value


# ---------------------------------------------------------------------------
# rendering

_PREC_ADD, _PREC_MUL, _PREC_UNARY, _PREC_POW = 1, 2, 3, 4


def render(e: Expr) -> str:
    """Canonical text form; reparses to a structurally equal simplified tree."""

    def negated(node: Expr):
        """The positive counterpart of a term with a negative leading constant."""
        if isinstance(node, Const) and node.value < 0:
            return Const(-node.value)
        if isinstance(node, Mul) and isinstance(node.lhs, Const) and node.lhs.value < 0:
            if node.lhs.value == -1.0:
                return node.rhs
            return Mul(Const(-node.lhs.value), node.rhs)
        return None

    def go(node: Expr, prec: int) -> str:
        if isinstance(node, Const):
            v = node.value
            text = str(int(v)) if v == int(v) and abs(v) < 1e15 else repr(v)
            if v < 0 and prec > _PREC_ADD:
                return f"({text})"
            return text
        if isinstance(node, Sym):
            return node.name
        if isinstance(node, Opaque):
            return node.name + ("_p" * node.dp) + ("_q" * node.dq)
        if isinstance(node, Fun):
            return f"{node.name}({go(node.arg, 0)})"
        if isinstance(node, Neg):
            text = f"-{go(node.arg, _PREC_UNARY)}"
            return f"({text})" if prec > _PREC_MUL else text
        if isinstance(node, Add):
            pos = negated(node.rhs)
            if pos is not None:
                text = f"{go(node.lhs, _PREC_ADD)} - {go(pos, _PREC_MUL)}"
            else:
                text = f"{go(node.lhs, _PREC_ADD)} + {go(node.rhs, _PREC_ADD)}"
            return f"({text})" if prec > _PREC_ADD else text
        if isinstance(node, Sub):
            text = f"{go(node.lhs, _PREC_ADD)} - {go(node.rhs, _PREC_MUL)}"
            return f"({text})" if prec > _PREC_ADD else text
        if isinstance(node, Mul):
            pos = negated(node)
            if pos is not None and pos is not node:
                text = f"-{go(pos, _PREC_MUL)}"
                return f"({text})" if prec > _PREC_MUL else text
            text = f"{go(node.lhs, _PREC_MUL)}*{go(node.rhs, _PREC_MUL)}"
            return f"({text})" if prec > _PREC_MUL else text
        if isinstance(node, Div):
            text = f"{go(node.lhs, _PREC_MUL)}/{go(node.rhs, _PREC_POW)}"
            return f"({text})" if prec > _PREC_MUL else text
        if isinstance(node, Pow):
            exp = str(node.exponent) if node.exponent >= 0 else f"({node.exponent})"
            return f"{go(node.base, _PREC_POW)}^{exp}"
        raise ExprError(f"cannot render node {type(node).__name__}")

    return go(e, 0)


# ---------------------------------------------------------------------------
# evaluation

Binding = Mapping[str, float]


def evaluate(e: Expr, binding: Binding):
    """Evaluate the tree; values may be floats or numpy arrays."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Sym):
        try:
            return binding[e.name]
        except KeyError:
            raise EvalError(f"unbound symbol {e.name!r}") from None
    if isinstance(e, Opaque):
        raise EvalError(f"cannot evaluate abstract placeholder {e.name!r}")
    if isinstance(e, Neg):
        return -evaluate(e.arg, binding)
    if isinstance(e, Add):
        return evaluate(e.lhs, binding) + evaluate(e.rhs, binding)
    if isinstance(e, Sub):
        return evaluate(e.lhs, binding) - evaluate(e.rhs, binding)
    if isinstance(e, Mul):
        return evaluate(e.lhs, binding) * evaluate(e.rhs, binding)
    if isinstance(e, Div):
        den = evaluate(e.rhs, binding)
        if np.isscalar(den) and den == 0:
            raise EvalError("division by zero")
        return evaluate(e.lhs, binding) / den
    if isinstance(e, Pow):
        base = evaluate(e.base, binding)
        try:
            return base ** e.exponent
        except OverflowError:
            raise EvalError("power overflow") from None
        except ZeroDivisionError:
            raise EvalError("division by zero") from None
    if isinstance(e, Fun):
        return _FUNCTIONS[e.name](evaluate(e.arg, binding))
    raise ExprError(f"cannot evaluate node {type(e).__name__}")


@dataclass(frozen=True)
class ZeroCheck:
    zero: bool
    method: str  # "structural" or "probabilistic"

    def __bool__(self) -> bool:
        return self.zero


_ZERO_TEST_SAMPLES = 32
_ZERO_TEST_TOL = 1e-12


def zero_check(e: Expr) -> ZeroCheck:
    """Decide whether ``e`` vanishes identically.

    Structural route: simplification collapses to the constant 0.  Otherwise
    the expression is evaluated at 32 deterministic pseudo-random bindings in
    [-2, 2]^n; |value| < 1e-12 everywhere counts as zero.  Expressions with
    abstract placeholders can only be certified structurally.
    """
    s = simplify(e)
    if is_const(s, 0.0):
        return ZeroCheck(True, "structural")
    if contains_opaque(s):
        return ZeroCheck(False, "structural")
    names = sorted(free_symbols(s))
    rng = np.random.default_rng(0x5EED)
    for _ in range(_ZERO_TEST_SAMPLES):
        binding = {n: rng.uniform(-2.0, 2.0) for n in names}
        try:
            value = evaluate(s, binding)
        except EvalError:
            continue
        if abs(float(value)) >= _ZERO_TEST_TOL:
            return ZeroCheck(False, "probabilistic")
    return ZeroCheck(True, "probabilistic")


def is_zero(e: Expr) -> bool:
    return zero_check(e).zero


# ---------------------------------------------------------------------------
# compilation to vectorized callables

def compile_exprs(
    exprs: Sequence[Expr],
    args: Sequence[str],
    consts: Binding | None = None,
) -> Callable:
    """Compile expressions into one function of numpy arrays.

    Repeated subtrees are computed once (so e.g. sin(q) shared by drift and
    diffusion costs a single vectorized call).  ``consts`` are baked in as
    float literals.
    """
    consts = dict(consts or {})
    arg_names = [_canonical_name(a) for a in args]
    lines: list[str] = []
    cache: dict[tuple, str] = {}
    counter = [0]

    def emit(node: Expr) -> str:
        k = node.key()
        if k in cache:
            return cache[k]
        if isinstance(node, Const):
            text = repr(node.value)
        elif isinstance(node, Sym):
            if node.name in arg_names:
                text = f"_a{arg_names.index(node.name)}"
            elif node.name in consts:
                text = repr(float(consts[node.name]))
            else:
                raise EvalError(f"unbound symbol {node.name!r} in compiled expression")
        elif isinstance(node, Opaque):
            raise EvalError(f"cannot compile abstract placeholder {node.name!r}")
        elif isinstance(node, Neg):
            text = f"(-{emit(node.arg)})"
        elif isinstance(node, Add):
            text = f"({emit(node.lhs)} + {emit(node.rhs)})"
        elif isinstance(node, Sub):
            text = f"({emit(node.lhs)} - {emit(node.rhs)})"
        elif isinstance(node, Mul):
            text = f"({emit(node.lhs)} * {emit(node.rhs)})"
        elif isinstance(node, Div):
            text = f"({emit(node.lhs)} / {emit(node.rhs)})"
        elif isinstance(node, Pow):
            text = f"({emit(node.base)} ** {node.exponent})"
        elif isinstance(node, Fun):
            inner = emit(node.arg)
            name = f"_t{counter[0]}"
            counter[0] += 1
            lines.append(f"    {name} = _np.{node.name}({inner})")
            cache[k] = name
            return name
        else:
            raise ExprError(f"cannot compile node {type(node).__name__}")
        cache[k] = text
        return text

    results = [emit(e) for e in exprs]
    params = ", ".join(f"_a{i}" for i in range(len(arg_names)))
    source = (
        f"def _compiled({params}):\n"
        + "\n".join(lines)
        + ("\n" if lines else "")
        + "    return (" + ", ".join(results) + ("," if len(results) == 1 else "") + ")\n"
    )
    namespace: dict = {"_np": np}
    exec(source, namespace)
    return namespace["_compiled"]
