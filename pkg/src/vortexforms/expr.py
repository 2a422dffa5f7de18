"""Scalar fields on extended phase space: AST, parser, printer, derivatives.

An :class:`Expression` is an immutable tree over the coordinates of a
:class:`SpaceSpec` (``t`` plus the spatial coordinates).  Expressions can be
differentiated exactly, evaluated at a point, and compiled into a flat numpy
program for fast batched evaluation.

>>> space = SpaceSpec(("q", "p"))
>>> H = parse_expression("p^2/2 + q^2/2", space)
>>> evaluate(H, {"q": 3.0, "p": 4.0})
12.5
>>> print(differentiate(H, "q"))
q
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EvaluationError, ExpressionSyntaxError, UnknownIdentifierError

__all__ = [
    "SpaceSpec",
    "Expression",
    "Const",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Call",
    "FUNCTIONS",
    "parse_expression",
    "differentiate",
    "evaluate",
    "to_text",
    "variables",
    "as_expression",
    "CompiledExpressions",
]

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")
CONSTANTS = {"pi": math.pi}
TIME = "t"

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class SpaceSpec:
    """Coordinates of the phase space M.  Index 0 of the extended space is ``t``."""

    coordinates: tuple

    def __post_init__(self):
        coords = tuple(self.coordinates)
        object.__setattr__(self, "coordinates", coords)
        if not coords:
            raise ValueError("phase space needs at least one coordinate")
        for name in coords:
            if not isinstance(name, str) or not _IDENT.match(name):
                raise ValueError(f"invalid coordinate name {name!r}")
            if name == TIME:
                raise ValueError("'t' is reserved for the time coordinate")
            if name in FUNCTIONS or name in CONSTANTS:
                raise ValueError(f"coordinate name {name!r} clashes with a builtin")
        if len(set(coords)) != len(coords):
            raise ValueError(f"coordinate names are not distinct: {coords}")

    @property
    def n(self) -> int:
        return len(self.coordinates)

    @property
    def names(self) -> tuple:
        """All extended-space names, ``t`` first."""
        return (TIME,) + self.coordinates

    def index(self, name: str) -> int:
        """Extended-space index of ``name`` (0 for ``t``)."""
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownIdentifierError(name) from None


# ---------------------------------------------------------------------------
# AST

class Expression:
    __slots__ = ()
    precedence = 5

    def __add__(self, other):
        return Add(self, as_expression(other))

    def __radd__(self, other):
        return Add(as_expression(other), self)

    def __sub__(self, other):
        return Sub(self, as_expression(other))

    def __rsub__(self, other):
        return Sub(as_expression(other), self)

    def __mul__(self, other):
        return Mul(self, as_expression(other))

    def __rmul__(self, other):
        return Mul(as_expression(other), self)

    def __truediv__(self, other):
        return Div(self, as_expression(other))

    def __rtruediv__(self, other):
        return Div(as_expression(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, exponent):
        return Pow(self, float(exponent))

    def __str__(self):
        return to_text(self)

    def diff(self, var: str) -> "Expression":
        return differentiate(self, var)

    def evaluate(self, point: Mapping[str, float]) -> float:
        return evaluate(self, point)


@dataclass(frozen=True, eq=True, repr=True)
class Const(Expression):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var(Expression):
    name: str


@dataclass(frozen=True)
class Neg(Expression):
    arg: Expression
    precedence = 3


@dataclass(frozen=True)
class Add(Expression):
    left: Expression
    right: Expression
    precedence = 1
    symbol = "+"


@dataclass(frozen=True)
class Sub(Expression):
    left: Expression
    right: Expression
    precedence = 1
    symbol = "-"


@dataclass(frozen=True)
class Mul(Expression):
    left: Expression
    right: Expression
    precedence = 2
    symbol = "*"


@dataclass(frozen=True)
class Div(Expression):
    left: Expression
    right: Expression
    precedence = 2
    symbol = "/"


@dataclass(frozen=True)
class Pow(Expression):
    """``base ^ exponent`` with a constant real exponent.

    Non-integer exponents need a positive base at evaluation time.
    """

    base: Expression
    exponent: float
    precedence = 4

    def __post_init__(self):
        object.__setattr__(self, "exponent", float(self.exponent))


@dataclass(frozen=True)
class Call(Expression):
    func: str
    arg: Expression

    def __post_init__(self):
        if self.func not in FUNCTIONS:
            raise UnknownIdentifierError(self.func)


_BINARY = (Add, Sub, Mul, Div)

ZERO = Const(0.0)
ONE = Const(1.0)


def as_expression(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)) and not isinstance(value, bool):
        return Const(float(value))
    raise TypeError(f"cannot use {value!r} as an expression")


def variables(e: Expression) -> frozenset:
    """Names of all variables appearing in ``e``."""
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, _BINARY):
            stack.extend((node.left, node.right))
        elif isinstance(node, (Neg, Call)):
            stack.append(node.arg)
        elif isinstance(node, Pow):
            stack.append(node.base)
    return frozenset(out)


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


# ---------------------------------------------------------------------------
# Simplifying constructors used by differentiation and the form algebra.
# They fold constants and drop neutral elements, nothing more.

def neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if (isinstance(b, Neg) and b.arg == a) or (isinstance(a, Neg) and a.arg == b):
        return ZERO
    return Add(a, b)


def sub(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if a == b:
        return ZERO
    return Sub(a, b)


def mul(a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if isinstance(b, Const) and not isinstance(a, Const):
        a, b = b, a
    if isinstance(a, Const):
        if a.value == 0.0:
            return ZERO
        if a.value == 1.0:
            return b
        if a.value == -1.0:
            return neg(b)
        if isinstance(b, Mul) and isinstance(b.left, Const):
            return mul(Const(a.value * b.left.value), b.right)
    return Mul(a, b)


def div(a, b):
    if _is_const(a, 0.0):
        return ZERO
    if isinstance(b, Const):
        if b.value == 1.0:
            return a
        if isinstance(a, Const) and b.value != 0.0:
            return Const(a.value / b.value)
        if isinstance(a, Mul) and isinstance(a.left, Const) and b.value != 0.0:
            return mul(Const(a.left.value / b.value), a.right)
    return Div(a, b)


def power(base, exponent):
    exponent = float(exponent)
    if exponent == 1.0:
        return base
    if exponent == 0.0:
        return ONE
    if isinstance(base, Const):
        try:
            return Const(_pow_scalar(base.value, exponent, None))
        except EvaluationError:
            pass
    return Pow(base, exponent)


def call(func, arg):
    return Call(func, arg)


# ---------------------------------------------------------------------------
# Differentiation

def differentiate(e: Expression, var: str) -> Expression:
    """Exact partial derivative of ``e`` with respect to the coordinate ``var``.

    Power rule for real exponents assumes a positive base, which evaluation
    enforces.
    """
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, var))
    if isinstance(e, Add):
        return add(differentiate(e.left, var), differentiate(e.right, var))
    if isinstance(e, Sub):
        return sub(differentiate(e.left, var), differentiate(e.right, var))
    if isinstance(e, Mul):
        da = differentiate(e.left, var)
        db = differentiate(e.right, var)
        return add(mul(da, e.right), mul(e.left, db))
    if isinstance(e, Div):
        da = differentiate(e.left, var)
        db = differentiate(e.right, var)
        if _is_const(db, 0.0):
            return div(da, e.right)
        return div(sub(mul(da, e.right), mul(e.left, db)), power(e.right, 2))
    if isinstance(e, Pow):
        du = differentiate(e.base, var)
        if _is_const(du, 0.0):
            return ZERO
        return mul(mul(Const(e.exponent), power(e.base, e.exponent - 1.0)), du)
    if isinstance(e, Call):
        du = differentiate(e.arg, var)
        if _is_const(du, 0.0):
            return ZERO
        u = e.arg
        if e.func == "sin":
            outer = Call("cos", u)
        elif e.func == "cos":
            outer = neg(Call("sin", u))
        elif e.func == "exp":
            outer = e
        elif e.func == "ln":
            return div(du, u)
        else:  # sqrt
            return div(du, mul(Const(2.0), e))
        return mul(outer, du)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Scalar evaluation (reference path; also locates failures of compiled code)

def _pow_scalar(base, exponent, node):
    if exponent.is_integer():
        if base == 0.0 and exponent < 0:
            raise EvaluationError("division by zero in negative power", node=node)
        try:
            return float(base ** int(exponent))
        except OverflowError:
            raise EvaluationError("overflow in power", node=node) from None
    if base < 0.0:
        raise EvaluationError("negative base with non-integer exponent", node=node)
    if base == 0.0 and exponent < 0:
        raise EvaluationError("division by zero in negative power", node=node)
    try:
        return math.pow(base, exponent)
    except OverflowError:
        raise EvaluationError("overflow in power", node=node) from None


def _eval(e, point):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(point[e.name])
        except KeyError:
            raise KeyError(f"no value given for coordinate {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, point)
    if isinstance(e, _BINARY):
        a = _eval(e.left, point)
        b = _eval(e.right, point)
        if isinstance(e, Add):
            r = a + b
        elif isinstance(e, Sub):
            r = a - b
        elif isinstance(e, Mul):
            r = a * b
        else:
            if b == 0.0:
                raise EvaluationError("division by zero", node=e, point=dict(point))
            r = a / b
    elif isinstance(e, Pow):
        r = _pow_scalar(_eval(e.base, point), e.exponent, e)
    elif isinstance(e, Call):
        u = _eval(e.arg, point)
        if e.func == "ln":
            if u <= 0.0:
                raise EvaluationError("ln of non-positive argument", node=e, point=dict(point))
            r = math.log(u)
        elif e.func == "sqrt":
            if u < 0.0:
                raise EvaluationError("sqrt of negative argument", node=e, point=dict(point))
            r = math.sqrt(u)
        elif e.func == "exp":
            try:
                r = math.exp(u)
            except OverflowError:
                raise EvaluationError("overflow in exp", node=e, point=dict(point)) from None
        else:
            r = math.sin(u) if e.func == "sin" else math.cos(u)
    else:
        raise TypeError(f"not an expression node: {e!r}")
    if not math.isfinite(r):
        raise EvaluationError("non-finite intermediate value", node=e, point=dict(point))
    return r


def evaluate(e: Expression, point: Mapping[str, float]) -> float:
    """Value of ``e`` at ``point`` (a coordinate name -> value mapping).

    Raises :class:`EvaluationError` (carrying the offending node) on domain
    errors, division by zero and overflow.
    """
    try:
        return _eval(e, point)
    except EvaluationError as exc:
        if exc.point is None:
            exc.point = dict(point)
        raise


# ---------------------------------------------------------------------------
# Compiled batched evaluation

_NP_FUNCS = {"sin": "_np.sin", "cos": "_np.cos", "exp": "_np.exp", "ln": "_np.log", "sqrt": "_np.sqrt"}


class CompiledExpressions:
    """A list of expressions compiled into one flat numpy program.

    Calling with one argument per name (scalars or broadcastable arrays)
    returns an array of shape ``(len(exprs),) + broadcast_shape``.  Common
    subexpressions are evaluated once.
    """

    def __init__(self, exprs: Sequence[Expression], names: Sequence[str]):
        self.exprs = tuple(exprs)
        self.names = tuple(names)
        argnames = {name: f"_a{i}" for i, name in enumerate(self.names)}
        lines = []
        memo = {}

        def emit(node):
            if node in memo:
                return memo[node]
            if isinstance(node, Const):
                ref = repr(node.value)
                if node.value < 0 or math.copysign(1.0, node.value) < 0:
                    ref = f"({ref})"
                memo[node] = ref
                return ref
            if isinstance(node, Var):
                if node.name not in argnames:
                    raise UnknownIdentifierError(node.name)
                memo[node] = argnames[node.name]
                return memo[node]
            if isinstance(node, Neg):
                code = f"-{emit(node.arg)}"
            elif isinstance(node, _BINARY):
                code = f"{emit(node.left)} {node.symbol} {emit(node.right)}"
            elif isinstance(node, Pow):
                b = emit(node.base)
                if node.exponent.is_integer() and abs(node.exponent) <= 64:
                    k = int(node.exponent)
                    code = f"_ipow({b}, {k})"
                else:
                    code = f"_np.power({b}, {node.exponent!r})"
            elif isinstance(node, Call):
                code = f"{_NP_FUNCS[node.func]}({emit(node.arg)})"
            else:
                raise TypeError(f"not an expression node: {node!r}")
            ref = f"_t{len(lines)}"
            lines.append(f"    {ref} = {code}")
            memo[node] = ref
            return ref

        outs = [emit(e) for e in self.exprs]
        args = ", ".join(argnames[name] for name in self.names)
        src = f"def _program({args}):\n" + "\n".join(lines)
        src += f"\n    return ({', '.join(outs)}{',' if outs else ''})\n"
        namespace = {"_np": np, "_ipow": _ipow}
        exec(compile(src, "<vortexforms-compiled>", "exec"), namespace)
        self._program = namespace["_program"]
        self.source = src

    def __len__(self):
        return len(self.exprs)

    def __call__(self, *args):
        if len(args) != len(self.names):
            raise TypeError(f"expected {len(self.names)} arguments, got {len(args)}")
        arrays = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()
        try:
            with np.errstate(divide="raise", over="raise", invalid="raise", under="ignore"):
                values = self._program(*arrays)
        except (FloatingPointError, ZeroDivisionError, OverflowError):
            self._locate_failure(arrays, shape)
            raise EvaluationError("numerical failure in compiled evaluation") from None
        out = np.empty((len(self.exprs),) + shape)
        for i, v in enumerate(values):
            out[i] = v
        if not np.all(np.isfinite(out)):
            self._locate_failure(arrays, shape)
            raise EvaluationError("non-finite value in compiled evaluation")
        return out

    def _locate_failure(self, arrays, shape):
        flat = [np.broadcast_to(a, shape).ravel() for a in arrays]
        size = int(np.prod(shape)) if shape else 1
        for j in range(size):
            point = {name: float(col[j]) for name, col in zip(self.names, flat)}
            for e in self.exprs:
                evaluate(e, point)


def _ipow(base, k):
    if k >= 0:
        return base ** k
    return 1.0 / base ** (-k)


# ---------------------------------------------------------------------------
# Printer

def _format_number(value):
    if value.is_integer() and abs(value) < 1e15:
        text = str(int(value))
    else:
        text = repr(value)
    if value < 0 or text.startswith("-"):
        return f"(-{text.lstrip('-')})"
    return text


def to_text(e: Expression) -> str:
    """Render ``e`` in the parser's grammar with minimal parentheses."""
    if isinstance(e, Const):
        return _format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        if e.arg.precedence < Neg.precedence:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, _BINARY):
        left = to_text(e.left)
        right = to_text(e.right)
        if e.left.precedence < e.precedence:
            left = f"({left})"
        if e.right.precedence <= e.precedence:
            right = f"({right})"
        return f"{left} {e.symbol} {right}" if e.precedence == 1 else f"{left}{e.symbol}{right}"
    if isinstance(e, Pow):
        base = to_text(e.base)
        if e.base.precedence <= Pow.precedence:
            base = f"({base})"
        return f"{base}^{_format_number(e.exponent)}"
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Parser

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.lastgroup is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, names):
        self.text = text
        self.names = frozenset(names)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        what = "end of input" if tok[0] == "end" else repr(tok[1])
        return ExpressionSyntaxError(f"{message}, found {what}", self.text, tok[2])

    def expect(self, op):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != op:
            raise self.error(f"expected {op!r}")
        return self.advance()

    def parse(self):
        e = self.expr()
        if self.peek()[0] != "end":
            raise self.error("unexpected token")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.base()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.advance()
            start = self.peek()
            exponent = self.unary()
            if variables(exponent):
                raise ExpressionSyntaxError("exponent must be a constant", self.text, start[2])
            try:
                value = _eval(exponent, {})
            except EvaluationError:
                raise ExpressionSyntaxError("exponent does not evaluate", self.text, start[2]) from None
            return Pow(base, value)
        return base

    def base(self):
        tok = self.peek()
        kind, value, pos = tok
        if kind == "number":
            self.advance()
            return Const(float(value))
        if kind == "ident":
            self.advance()
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if value not in FUNCTIONS:
                    raise UnknownIdentifierError(value, pos)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            if value in FUNCTIONS:
                raise ExpressionSyntaxError(f"function {value!r} needs an argument", self.text, nxt[2])
            if value in self.names:
                return Var(value)
            if value in CONSTANTS:
                return Const(CONSTANTS[value])
            raise UnknownIdentifierError(value, pos)
        if kind == "op" and value == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        raise self.error("expected a number, identifier or '('")


def parse_expression(text: str, space) -> Expression:
    """Parse ``text`` into an :class:`Expression` over ``space``.

    ``space`` is a :class:`SpaceSpec` (``t`` is always allowed) or an
    iterable of admissible variable names.  Precedence, tightest first:
    ``^`` (right associative), unary minus, ``* /``, ``+ -``.
    """
    names = space.names if isinstance(space, SpaceSpec) else tuple(space)
    return _Parser(text, names).parse()


def parse_many(texts: Iterable[str], space) -> list:
    return [parse_expression(s, space) for s in texts]
