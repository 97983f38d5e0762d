"""Small expression language for the scalar functions of a problem.

Expressions are immutable trees over the variables ``x``, ``y``, ``u`` and
``eps``.  They can be printed back to source, differentiated exactly and
evaluated either on scalars or (vectorised) on numpy arrays.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := atom ('^' factor)?
    atom   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' atom

``^`` is right associative and binds tighter than unary minus, so ``-x^2``
is ``-(x^2)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

VARIABLES = ("x", "y", "u", "eps")
NAMED_CONSTANTS = {"pi": math.pi}
FUNCTIONS = ("sin", "cos", "tan", "tanh", "atan", "exp", "ln", "sqrt", "abs", "sign")

Number = Union[float, np.ndarray]


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    pass


class UnboundVariableError(ExprError):
    pass


class DomainError(ExprError, ArithmeticError):
    pass


# ---------------------------------------------------------------- nodes


class Expr:
    __slots__ = ()

    def variables(self) -> frozenset:
        raise NotImplementedError

    def __str__(self) -> str:
        return _to_source(self, 0)

    def __repr__(self) -> str:
        return f"Expr({str(self)!r})"

    def __call__(self, **bindings: Number) -> Number:
        return evaluate(self, bindings)

    # light operator sugar for building trees in code
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return neg(self)


@dataclass(frozen=True, eq=True, repr=False)
class Const(Expr):
    value: float

    def variables(self):
        return frozenset()


@dataclass(frozen=True, eq=True, repr=False)
class Var(Expr):
    name: str

    def variables(self):
        return frozenset([self.name])


@dataclass(frozen=True, eq=True, repr=False)
class Neg(Expr):
    arg: Expr

    def variables(self):
        return self.arg.variables()


@dataclass(frozen=True, eq=True, repr=False)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True, eq=True, repr=False)
class Call(Expr):
    func: str
    arg: Expr

    def variables(self):
        return self.arg.variables()


ZERO = Const(0.0)
ONE = Const(1.0)


def _lift(v) -> Expr:
    if isinstance(v, Expr):
        return v
    return Const(float(v))


def const(v: float) -> Const:
    return Const(float(v))


def var(name: str) -> Var:
    if name not in VARIABLES:
        raise UnknownIdentifierError(f"unknown variable {name!r}", 0)
    return Var(name)


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


# constructors with literal-zero/one folding


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if _is(b, 0.0):
        return ONE
    if _is(b, 1.0):
        return a
    return BinOp("^", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(func: str, arg: Expr) -> Expr:
    if func not in FUNCTIONS:
        raise UnknownIdentifierError(f"unknown function {func!r}", 0)
    return Call(func, arg)


# ---------------------------------------------------------------- parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    pos = 0
    toks = []
    n = len(source)
    while pos < n:
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            off = pos + (len(source[pos:]) - len(source[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {source[off]!r}", _byte_offset(source, off))
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", len(source)))
    return toks


def _byte_offset(source: str, char_index: int) -> int:
    return len(source[:char_index].encode("utf-8"))


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.toks = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise ExprSyntaxError(msg, _byte_offset(self.source, tok[2]))

    def expect(self, value):
        t = self.peek()
        if t[0] != "op" or t[1] != value:
            self.error(f"expected {value!r}, found {t[1] or 'end of input'!r}")
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            e = BinOp(op, e, rhs)
        return e

    def term(self):
        e = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            rhs = self.factor()
            e = BinOp(op, e, rhs)
        return e

    def factor(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.factor())
        return base

    def atom(self):
        t = self.peek()
        kind, text, _ = t
        if kind == "num":
            self.take()
            return Const(float(text))
        if kind == "ident":
            self.take()
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownIdentifierError(
                        f"unknown function {text!r}", _byte_offset(self.source, t[2])
                    )
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in VARIABLES:
                return Var(text)
            if text in NAMED_CONSTANTS:
                return Const(NAMED_CONSTANTS[text])
            raise UnknownIdentifierError(
                f"unknown identifier {text!r}", _byte_offset(self.source, t[2])
            )
        if kind == "op" and text == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if kind == "op" and text == "-":
            self.take()
            # unary minus binds looser than ^:  -x^2 == -(x^2)
            a = self.atom()
            if self.peek()[0] == "op" and self.peek()[1] == "^":
                self.take()
                a = BinOp("^", a, self.factor())
            return Neg(a)
        if kind == "end":
            self.error("unexpected end of input")
        self.error(f"unexpected token {text!r}")


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree.

    Raises ExprSyntaxError (with a byte offset) on malformed input and
    UnknownIdentifierError for names outside the fixed vocabulary.
    """
    if not isinstance(source, str):
        raise TypeError("source must be a string")
    return _Parser(source).parse()


def as_expr(value) -> Expr:
    """Accept an Expr, a source string or a number."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    return Const(float(value))


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _num(v: float) -> str:
    if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _to_source(e: Expr, ctx: int) -> str:
    if isinstance(e, Const):
        s = _num(abs(e.value)) if e.value >= 0 or math.isnan(e.value) else _num(-e.value)
        if e.value < 0:
            s = "-" + s
            return f"({s})" if ctx > 0 else s
        return s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_to_source(e.arg, 0)})"
    if isinstance(e, Neg):
        s = "-" + _to_source(e.arg, _PREC["neg"])
        return f"({s})" if ctx > 0 else s
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        if e.op == "^":
            s = f"{_to_source(e.left, p + 1)}^{_to_source(e.right, p)}"
        else:
            s = f"{_to_source(e.left, p)}{e.op}{_to_source(e.right, p + 1)}"
        return f"({s})" if ctx > p else s
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------- derivative


def differentiate(e: Expr, name: str) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to variable ``name``."""
    if name not in VARIABLES:
        raise UnknownIdentifierError(f"unknown variable {name!r}", 0)
    return _d(e, name)


def _d(e: Expr, v: str) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if v not in e.variables():
        return ZERO
    if isinstance(e, Neg):
        return neg(_d(e.arg, v))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = _d(a, v), _d(b, v)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        if e.op == "/":
            if _is(db, 0.0):
                return div(da, b)
            return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
        if e.op == "^":
            if v not in b.variables():
                # a^c -> c a^(c-1) a'
                return mul(mul(b, power(a, sub(b, ONE))), da)
            # a^b -> a^b (b' ln a + b a'/a)
            return mul(e, add(mul(db, Call("ln", a)), div(mul(b, da), a)))
    if isinstance(e, Call):
        a = e.arg
        da = _d(a, v)
        f = e.func
        if f == "sin":
            outer = Call("cos", a)
        elif f == "cos":
            outer = neg(Call("sin", a))
        elif f == "tan":
            outer = add(ONE, power(Call("tan", a), Const(2.0)))
        elif f == "tanh":
            outer = sub(ONE, power(Call("tanh", a), Const(2.0)))
        elif f == "atan":
            outer = div(ONE, add(ONE, power(a, Const(2.0))))
        elif f == "exp":
            outer = e
        elif f == "ln":
            outer = div(ONE, a)
        elif f == "sqrt":
            outer = div(ONE, mul(Const(2.0), e))
        elif f == "abs":
            outer = Call("sign", a)
        elif f == "sign":
            return ZERO
        else:  # pragma: no cover - guarded by FUNCTIONS
            raise UnknownIdentifierError(f"unknown function {f!r}", 0)
        return mul(outer, da)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------- evaluation


def _ln(a):
    if np.any(a <= 0):
        raise DomainError("ln of a non-positive argument")
    return np.log(a)


def _sqrt(a):
    if np.any(a < 0):
        raise DomainError("sqrt of a negative argument")
    return np.sqrt(a)


def _div(a, b):
    if np.any(b == 0):
        raise DomainError("division by zero")
    return a / b


def _pow(a, b):
    a_arr = np.asarray(a)
    b_arr = np.asarray(b)
    if np.any((a_arr < 0) & (b_arr != np.round(b_arr))):
        raise DomainError("negative base with non-integer exponent")
    if np.any((a_arr == 0) & (b_arr < 0)):
        raise DomainError("zero raised to a negative power")
    return np.power(a, b)


_UNARY = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "tanh": np.tanh,
    "atan": np.arctan,
    "exp": np.exp,
    "ln": _ln,
    "sqrt": _sqrt,
    "abs": np.abs,
    "sign": np.sign,
}

_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": _div,
    "^": _pow,
}


def compile_expr(e: Expr):
    """Compile ``e`` to a closure ``f(env) -> value`` over a binding mapping."""
    if isinstance(e, Const):
        v = e.value
        return lambda env: v
    if isinstance(e, Var):
        name = e.name

        def load(env):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariableError(f"variable {name!r} is not bound") from None

        return load
    if isinstance(e, Neg):
        f = compile_expr(e.arg)
        return lambda env: -f(env)
    if isinstance(e, BinOp):
        fl, fr, op = compile_expr(e.left), compile_expr(e.right), _BINARY[e.op]
        return lambda env: op(fl(env), fr(env))
    if isinstance(e, Call):
        fa, fn = compile_expr(e.arg), _UNARY[e.func]
        return lambda env: fn(fa(env))
    raise TypeError(f"not an expression node: {e!r}")


_COMPILED: dict = {}


def evaluate(e: Expr, bindings: Mapping[str, Number]) -> Number:
    """Evaluate ``e`` in IEEE double precision.

    Works on python floats or numpy arrays (broadcast together).  Raises
    UnboundVariableError when a variable is missing and DomainError on
    division by zero, ln/sqrt out of domain or overflow.
    """
    fn = _COMPILED.get(e)
    if fn is None:
        fn = compile_expr(e)
        if len(_COMPILED) < 4096:
            _COMPILED[e] = fn
    missing = e.variables() - set(bindings)
    if missing:
        raise UnboundVariableError(f"unbound variable(s): {', '.join(sorted(missing))}")
    env = {
        k: (v if isinstance(v, np.ndarray) else float(v)) for k, v in bindings.items()
    }
    scalar = not any(isinstance(v, np.ndarray) and v.ndim > 0 for v in env.values())
    with np.errstate(divide="raise", invalid="raise", over="raise", under="ignore"):
        try:
            out = fn(env)
        except FloatingPointError as exc:
            raise DomainError(str(exc)) from None
        except ZeroDivisionError as exc:
            raise DomainError(str(exc)) from None
    if scalar:
        return float(out)
    shape = np.broadcast_shapes(*[np.shape(v) for v in env.values()])
    return np.broadcast_to(np.asarray(out, dtype=float), shape)


def is_zero(e: Expr) -> bool:
    return _is(e, 0.0)


def is_constant(e: Expr) -> bool:
    return not e.variables()
