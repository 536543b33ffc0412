"""Arithmetic expressions for vector fields, resets and set constraints.

Grammar (whitespace insignificant)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := atom ('^' integer)?
    atom   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' atom

``^`` takes an integer literal exponent only, so ``-x^2`` reads as
``(-x)^2``. Supported functions are ``exp``, ``sin``, ``cos``, ``sqrt`` and
``abs``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence, Union

FUNCTIONS: dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
    "abs": abs,
}

BINARY_OPS = ("+", "-", "*", "/")


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``position`` is a 0-based column."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class ExprEvalError(ArithmeticError):
    """Evaluation produced a division by zero or a non-finite value."""


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Pow, Call]


# --------------------------------------------------------------------------
# tokenizer / parser
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.lastgroup is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        toks.append(_Tok(m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, constants: Mapping[str, float]):
        self.toks = _tokenize(text)
        self.i = 0
        self.constants = constants

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        if self.tok.text != text or self.tok.kind == "end":
            raise ExprSyntaxError(f"expected {text!r}", self.tok.pos)
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.take().text
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.take().text
            e = BinOp(op, e, self.factor())
        return e

    def factor(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.take()
            sign = 1
            if self.tok.kind == "op" and self.tok.text == "-":
                self.take()
                sign = -1
            t = self.tok
            if t.kind != "num" or not t.text.isdigit():
                raise ExprSyntaxError("exponent must be an integer literal", t.pos)
            self.take()
            return Pow(base, sign * int(t.text))
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.take()
            return Num(float(t.text))
        if t.kind == "ident":
            self.take()
            if self.tok.kind == "op" and self.tok.text == "(":
                if t.text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {t.text!r}", t.pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(t.text, arg)
            if t.text in FUNCTIONS:
                raise ExprSyntaxError(f"function {t.text!r} needs an argument", self.tok.pos)
            if t.text in self.constants:
                return _literal(self.constants[t.text])
            return Var(t.text)
        if t.kind == "op" and t.text == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "op" and t.text == "-":
            self.take()
            return Neg(self.atom())
        if t.kind == "end":
            raise ExprSyntaxError("unexpected end of input", t.pos)
        raise ExprSyntaxError(f"unexpected {t.text!r}", t.pos)


def _literal(value: float) -> Expr:
    # the grammar has no negative literals; keep trees re-parseable
    return Neg(Num(-value)) if value < 0 else Num(float(value))


def parse_expr(text: str, constants: Mapping[str, float] | None = None) -> Expr:
    """Parse ``text`` into an expression tree.

    Names listed in ``constants`` are replaced by literals at parse time.
    Unknown variables are not rejected here; they are checked when a model
    links its expressions against the declared variable list.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(text, constants or {}).parse()


# --------------------------------------------------------------------------
# traversal, evaluation, printing
# --------------------------------------------------------------------------


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, Neg):
        yield from walk(e.operand)
    elif isinstance(e, BinOp):
        yield from walk(e.left)
        yield from walk(e.right)
    elif isinstance(e, Pow):
        yield from walk(e.base)
    elif isinstance(e, Call):
        yield from walk(e.arg)


def variables(e: Expr) -> set[str]:
    return {n.name for n in walk(e) if isinstance(n, Var)}


def functions(e: Expr) -> set[str]:
    return {n.func for n in walk(e) if isinstance(n, Call)}


def _eval(e: Expr, env: Mapping[str, float]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, BinOp):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    if isinstance(e, Pow):
        return _eval(e.base, env) ** e.exponent
    if isinstance(e, Call):
        return FUNCTIONS[e.func](_eval(e.arg, env))
    raise TypeError(f"not an expression node: {e!r}")


def eval_expr(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate ``e`` in double precision.

    Raises:
        ExprEvalError: on division by zero, domain errors, overflow or a
            non-finite result.
        KeyError: if ``env`` lacks a variable used by ``e``.
    """
    try:
        value = float(_eval(e, env))
    except (ZeroDivisionError, OverflowError, ValueError) as exc:
        raise ExprEvalError(f"cannot evaluate {print_expr(e)}: {exc}") from exc
    if not math.isfinite(value):
        raise ExprEvalError(f"non-finite value for {print_expr(e)}")
    return value


# precedence levels: + - (1), * / (2), unary minus (3), ^ (4), atoms (5)
def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return 1 if e.op in "+-" else 2
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def _fmt_num(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def print_expr(e: Expr) -> str:
    """Render ``e`` so that ``parse_expr(print_expr(e)) == e``."""
    if isinstance(e, Num):
        if e.value < 0 or not math.isfinite(e.value):
            raise ValueError(f"literal {e.value!r} has no source form")
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({print_expr(e.arg)})"
    if isinstance(e, Neg):
        inner = print_expr(e.operand)
        # '-' applies to an atom only
        return f"-{inner}" if _prec(e.operand) >= 3 and not isinstance(e.operand, Pow) else f"-({inner})"
    if isinstance(e, Pow):
        base = print_expr(e.base)
        if _prec(e.base) < 5 and not isinstance(e.base, Neg):
            base = f"({base})"
        elif isinstance(e.base, Neg):
            base = f"({base})"
        return f"{base}^{e.exponent}"
    if isinstance(e, BinOp):
        p = _prec(e)
        left = print_expr(e.left)
        if _prec(e.left) < p:
            left = f"({left})"
        right = print_expr(e.right)
        # left associative: an equal-precedence right operand needs parens
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# compilation to Python closures
# --------------------------------------------------------------------------

_MATH_NS = {"_exp": math.exp, "_sin": math.sin, "_cos": math.cos,
            "_sqrt": math.sqrt, "_abs": abs}


def to_python(e: Expr, names: Mapping[str, str]) -> str:
    """Python source computing ``e`` with the same floating-point operations
    as :func:`eval_expr`; variables are renamed through ``names``."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return names[e.name]
    if isinstance(e, Neg):
        return f"(-{to_python(e.operand, names)})"
    if isinstance(e, BinOp):
        return f"({to_python(e.left, names)} {e.op} {to_python(e.right, names)})"
    if isinstance(e, Pow):
        return f"({to_python(e.base, names)} ** {e.exponent})"
    if isinstance(e, Call):
        return f"_{e.func}({to_python(e.arg, names)})"
    raise TypeError(f"not an expression node: {e!r}")


def compile_source(src: str, name: str) -> Callable:
    code = compile(src, f"<hdsbisim:{name}>", "exec")
    ns: dict = dict(_MATH_NS)
    exec(code, ns)
    return ns[name]


def compile_vector(exprs: Sequence[Expr], varnames: Sequence[str]) -> Callable[[Sequence[float]], tuple]:
    """Compile a vector of expressions into ``f(point) -> tuple``.

    The closure raises the native Python arithmetic exceptions; callers that
    need :class:`ExprEvalError` semantics use :func:`eval_expr` or wrap.
    """
    names = {v: f"x{i}" for i, v in enumerate(varnames)}
    args = ", ".join(names[v] for v in varnames)
    body = ", ".join(to_python(e, names) for e in exprs)
    src = f"def _vec(p):\n    {args}{',' if len(varnames) == 1 else ''} = p\n    return ({body}{',' if len(exprs) == 1 else ''})\n"
    return compile_source(src, "_vec")
