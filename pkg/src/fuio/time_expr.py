"""Scalar expressions of time ``t``.

Used for time-varying output coefficients ``c_i(t)`` and for test signals
(unknown inputs).  Grammar::

    expr    := unary (('+' | '-') unary)*
    unary   := '-' unary | product
    product := factor (('*' | '/') factor)*
    factor  := '-' factor | atom
    atom    := NUMBER | 't' | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := sin | cos | exp

A leading minus negates the whole product that follows it, so ``-t*exp(t)``
parses as ``Neg(Mul(t, Exp(t)))``.  There is no power operator.

>>> e = parse_time_expr("2+sin(0.3*t)")
>>> e
Add(Num(2.0), Call('sin', Mul(Num(0.3), Var())))
>>> e(0.0)
2.0
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ExprEvalError, ExprSyntaxError

__all__ = [
    "TimeExpr", "Num", "Var", "Neg", "BinOp", "Call",
    "parse_time_expr", "eval_time_expr", "fold_constants",
    "is_structurally_zero", "compile_time_expr", "compile_time_expr_array", "to_text",
]

FUNCTIONS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
}
_OPS = {"+": "Add", "-": "Sub", "*": "Mul", "/": "Div"}


class TimeExpr:
    """Base node.  Nodes are immutable and callable: ``e(t)`` evaluates."""

    __slots__ = ()

    def __call__(self, t: float) -> float:
        return eval_time_expr(self, t)

    def __str__(self) -> str:
        return to_text(self)

    @property
    def has_t(self) -> bool:
        raise NotImplementedError


@dataclass(frozen=True, repr=False)
class Num(TimeExpr):
    value: float

    @property
    def has_t(self):
        return False

    def __repr__(self):
        return f"Num({self.value!r})"


@dataclass(frozen=True, repr=False)
class Var(TimeExpr):
    @property
    def has_t(self):
        return True

    def __repr__(self):
        return "Var()"


@dataclass(frozen=True, repr=False)
class Neg(TimeExpr):
    arg: TimeExpr

    @property
    def has_t(self):
        return self.arg.has_t

    def __repr__(self):
        return f"Neg({self.arg!r})"


@dataclass(frozen=True, repr=False)
class BinOp(TimeExpr):
    op: str
    left: TimeExpr
    right: TimeExpr

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValueError(f"unknown operator {self.op!r}")

    @property
    def has_t(self):
        return self.left.has_t or self.right.has_t

    def __repr__(self):
        return f"{_OPS[self.op]}({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Call(TimeExpr):
    func: str
    arg: TimeExpr

    def __post_init__(self):
        if self.func not in FUNCTIONS:
            raise ValueError(f"unknown function {self.func!r}")

    @property
    def has_t(self):
        return self.arg.has_t

    def __repr__(self):
        return f"Call({self.func!r}, {self.arg!r})"


# Convenience constructors matching the repr names.
def Add(a, b):
    return BinOp("+", a, b)


def Sub(a, b):
    return BinOp("-", a, b)


def Mul(a, b):
    return BinOp("*", a, b)


def Div(a, b):
    return BinOp("/", a, b)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
      | (?P<name>[A-Za-z_]\w*)
      | (?P<op>[-+*/()])
    )""",
    re.VERBOSE,
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(
                f"unexpected character {text[start]!r}", _byte_offset(text, start), text
            )
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), _byte_offset(text, m.start(kind))))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text, index):
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, tok[2], self.text)

    def expect(self, value):
        tok = self.peek()
        if tok[1] != value or tok[0] != "op":
            if value == ")":
                raise self.error("unbalanced parentheses: expected ')'")
            raise self.error(f"expected {value!r}")
        self.take()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            if tok[1] == ")":
                raise self.error("unbalanced parentheses: unexpected ')'")
            raise self.error(f"unexpected token {tok[1]!r}")
        return node

    def expr(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.product()

    def product(self):
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.factor())
        return self.atom()

    def atom(self):
        tok = self.peek()
        kind, value, _ = tok
        if kind == "num":
            self.take()
            return Num(float(value))
        if kind == "name":
            self.take()
            if value == "t":
                return Var()
            if value in FUNCTIONS:
                if self.peek()[:2] != ("op", "("):
                    raise self.error(f"expected '(' after {value!r}")
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            raise ExprSyntaxError(f"unknown identifier {value!r}", tok[2], self.text)
        if (kind, value) == ("op", "("):
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of input")
        if value == ")":
            raise self.error("unbalanced parentheses: unexpected ')'")
        raise self.error(f"unexpected token {value!r}")


def parse_time_expr(text: str) -> TimeExpr:
    """Parse ``text`` into a :class:`TimeExpr`; the whole input must be consumed."""
    if not isinstance(text, str):
        raise TypeError("expression must be a string")
    if not text.strip():
        raise ExprSyntaxError("empty expression", 0, text)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Evaluation


def eval_time_expr(e: TimeExpr, t: float) -> float:
    """Evaluate ``e`` at time ``t`` with ordinary float arithmetic."""
    try:
        return _eval(e, float(t))
    except ZeroDivisionError:
        raise ExprEvalError(f"division by zero in {to_text(e)}", t) from None
    except OverflowError:
        raise ExprEvalError(f"overflow in {to_text(e)}", t) from None


def _eval(e, t):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return t
    if isinstance(e, Neg):
        return -_eval(e.arg, t)
    if isinstance(e, BinOp):
        a = _eval(e.left, t)
        b = _eval(e.right, t)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    if isinstance(e, Call):
        return FUNCTIONS[e.func](_eval(e.arg, t))
    raise TypeError(f"not a TimeExpr node: {e!r}")


def fold_constants(e: TimeExpr) -> TimeExpr:
    """Collapse every ``t``-free subtree into a single :class:`Num`."""
    if not e.has_t:
        return Num(eval_time_expr(e, 0.0))
    if isinstance(e, Neg):
        return Neg(fold_constants(e.arg))
    if isinstance(e, BinOp):
        return BinOp(e.op, fold_constants(e.left), fold_constants(e.right))
    if isinstance(e, Call):
        return Call(e.func, fold_constants(e.arg))
    return e


def is_structurally_zero(e: TimeExpr) -> bool:
    """True iff the constant-folded tree is the literal zero."""
    folded = fold_constants(e)
    return isinstance(folded, Num) and folded.value == 0.0


def to_text(e: TimeExpr) -> str:
    """Fully parenthesised text that re-parses to an equivalent tree."""
    if isinstance(e, Num):
        s = repr(float(e.value))
        return f"({s})" if e.value < 0 or s.startswith("-") else s
    if isinstance(e, Var):
        return "t"
    if isinstance(e, Neg):
        return f"(-{to_text(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    raise TypeError(f"not a TimeExpr node: {e!r}")


def compile_time_expr(e: TimeExpr) -> Callable[[float], float]:
    """Return a fast ``f(t)`` equivalent to ``eval_time_expr(e, t)``.

    Used inside integration loops where tree walking dominates the cost.
    """
    src = to_text(e)
    code = compile(f"lambda t: {src}", "<time_expr>", "eval")
    fn = eval(code, {"__builtins__": {}, **FUNCTIONS})

    def f(t):
        try:
            return fn(t)
        except ZeroDivisionError:
            raise ExprEvalError(f"division by zero in {src}", t) from None
        except OverflowError:
            raise ExprEvalError(f"overflow in {src}", t) from None

    f.expr = e
    return f


_NP_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}


def compile_time_expr_array(e: TimeExpr) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised variant of :func:`compile_time_expr` over an array of times."""
    src = to_text(e)
    fn = eval(compile(f"lambda t: {src}", "<time_expr>", "eval"),
              {"__builtins__": {}, **_NP_FUNCTIONS})

    def f(t):
        t = np.asarray(t, dtype=float)
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(fn(t), dtype=float), t.shape)
        bad = ~np.isfinite(out)
        if bad.any():
            t_bad = float(t.ravel()[np.argmax(bad.ravel())])
            eval_time_expr(e, t_bad)  # raises with the precise cause
            raise ExprEvalError(f"non-finite value of {src}", t_bad)
        return np.array(out)

    return f


def as_time_expr(value) -> TimeExpr:
    """Accept a TimeExpr, a string, or a plain number."""
    if isinstance(value, TimeExpr):
        return value
    if isinstance(value, str):
        return parse_time_expr(value)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Num(float(value))
    raise TypeError(f"cannot interpret {value!r} as a time expression")
