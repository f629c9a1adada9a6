"""Scalar function expressions of one variable ``t``.

Grammar (whitespace-insensitive)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?          # exponent must be constant
    atom   := NUMBER | 't' | 'pi' | 'e' | NAME '(' expr ')' | '(' expr ')'

with ``NAME`` one of ``sin cos exp ln sqrt``.  Evaluation is vectorized over
numpy arrays and always complex-valued.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, InputError, PreconditionViolated

FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")
TINY = 1e-300


class ParseError(InputError):
    """Syntax error with the byte offset and the set of tokens that would fit there."""

    def __init__(self, message: str, offset: int, expected: Sequence[str] = ()):
        self.offset = offset
        self.expected = frozenset(expected)
        exp = f" (expected one of: {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{exp}")


class DomainError(PreconditionViolated):
    def __init__(self, node: str, t, message: str = "", entry=None):
        self.node = node
        self.t = t
        self.entry = entry
        where = f" in entry {entry}" if entry is not None else ""
        super().__init__(f"{message or 'value outside the domain'} of '{node}' at t={t!r}{where}")


class Expr:
    __slots__ = ()

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: complex


@dataclass(frozen=True, eq=True)
class Var(Expr):
    pass


@dataclass(frozen=True, eq=True)
class Unary(Expr):
    op: str  # 'neg' or a function name
    arg: Expr


@dataclass(frozen=True, eq=True)
class Binary(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


T = Var()
ZERO = Const(0.0)
ONE = Const(1.0)


# --------------------------------------------------------------------------- parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str):
    pos = 0
    toks = []
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {src[pos]!r}", pos, ("number", "t", "function", "(", "-"))
        start = m.start(m.lastgroup)
        toks.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    toks.append(("end", "", len(src)))
    return toks


_ATOM_START = ("number", "t", "pi", "e", "(", "-", "+") + FUNCTIONS


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", pos, ("+", "-", "*", "/", "^", "end of input"))
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = Binary(op, e, self.unary())
        return e

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text in ("-", "+"):
            self.take()
            arg = self.unary()
            return Unary("neg", arg) if text == "-" else arg
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.take()
            exp_pos = self.peek()[2]
            exponent = self.unary()
            if depends_on_t(exponent):
                raise ParseError("exponent must be constant", exp_pos, ("number", "pi", "e", "("))
            return Binary("^", base, exponent)
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Const(complex(float(text)))
        if kind == "name":
            if text == "t":
                return T
            if text == "pi":
                return Const(complex(math.pi))
            if text == "e":
                return Const(complex(math.e))
            if text in FUNCTIONS:
                k2, t2, p2 = self.take()
                if t2 != "(":
                    raise ParseError(f"expected '(' after {text}", p2, ("(",))
                arg = self.expr()
                k3, t3, p3 = self.take()
                if t3 != ")" or k3 != "op":
                    raise ParseError("expected ')'", p3, (")", "+", "-", "*", "/", "^"))
                return Unary(text, arg)
            raise ParseError(f"unknown name {text!r}", pos, _ATOM_START)
        if kind == "op" and text == "(":
            e = self.expr()
            k3, t3, p3 = self.take()
            if t3 != ")" or k3 != "op":
                raise ParseError("expected ')'", p3, (")", "+", "-", "*", "/", "^"))
            return e
        what = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {what}", pos, _ATOM_START)


def parse(src: str) -> Expr:
    if not isinstance(src, str) or not src.strip():
        raise ParseError("empty expression", 0, _ATOM_START)
    return _Parser(src).parse()


def depends_on_t(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Const):
        return False
    if isinstance(e, Unary):
        return depends_on_t(e.arg)
    return depends_on_t(e.left) or depends_on_t(e.right)


def is_zero_expr(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0


# --------------------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _const_text(z: complex) -> str:
    z = complex(z)
    if z.imag == 0 and z.real >= 0:
        return repr(float(z.real))
    if z.imag == 0:
        return f"(-{repr(float(-z.real))})"
    # complex constants only arise internally; print as re + im*sqrt(-1)
    return f"({repr(float(z.real))} + {repr(float(z.imag))}*sqrt(-1))"


def to_text(e: Expr) -> str:
    """Canonical text; ``parse(to_text(e)) == e`` for every parsed tree."""
    return _print(e, 0)


def _print(e: Expr, parent: int) -> str:
    if isinstance(e, Const):
        return _const_text(e.value)
    if isinstance(e, Var):
        return "t"
    if isinstance(e, Unary):
        if e.op == "neg":
            s = "-" + _print(e.arg, _PREC["neg"])
            return f"({s})" if parent > _PREC["neg"] else s
        return f"{e.op}({_print(e.arg, 0)})"
    p = _PREC[e.op]
    if e.op == "^":
        # base binds tighter than ^, exponent is a unary-level operand
        s = f"{_print(e.left, p + 1)}^{_print(e.right, _PREC['neg'])}"
    else:
        # left-associative: the right operand needs parentheses at equal precedence
        s = f"{_print(e.left, p)} {e.op} {_print(e.right, p + 1)}"
    return f"({s})" if parent > p else s


# --------------------------------------------------------------------------- evaluation


def evaluate(e: Expr, t, *, complex_mode: bool = False):
    """Evaluate ``e`` at scalar or array ``t`` (complex result).

    Raises :class:`DomainError` at the first node whose argument leaves the
    real domain (``ln``/``sqrt``/fractional power of a non-positive real,
    unless ``complex_mode``) or divides by a value smaller than 1e-300.
    """
    scalar = np.ndim(t) == 0
    tt = np.asarray(t, dtype=complex).reshape(-1)
    out = _eval(e, tt, complex_mode)
    out = np.broadcast_to(out, tt.shape).astype(complex, copy=False)
    return complex(out[0]) if scalar else out.reshape(np.shape(t))


def _fail(node: Expr, tt, mask, message):
    k = int(np.argmax(mask))
    t = complex(tt[k])
    t = t.real if t.imag == 0 else t
    raise DomainError(to_text(node), t, message)


def _nonpositive_real(v):
    return (v.imag == 0) & (v.real <= 0)


def _eval(e: Expr, tt, cm):
    if isinstance(e, Const):
        return np.full(tt.shape, e.value, dtype=complex)
    if isinstance(e, Var):
        return tt
    if isinstance(e, Unary):
        a = _eval(e.arg, tt, cm)
        op = e.op
        if op == "neg":
            return -a
        if op == "sin":
            return np.sin(a)
        if op == "cos":
            return np.cos(a)
        if op == "exp":
            return np.exp(a)
        if op == "ln":
            bad = (np.abs(a) < TINY) | (_nonpositive_real(a) & (not cm))
            if np.any(bad):
                _fail(e, tt, bad, "logarithm of a non-positive value")
            return np.log(a)
        if op == "sqrt":
            if not cm:
                bad = (a.imag == 0) & (a.real < 0)
                if np.any(bad):
                    _fail(e, tt, bad, "square root of a negative value")
            return np.sqrt(a)
        raise ValueError(f"unknown function {op}")
    a = _eval(e.left, tt, cm)
    b = _eval(e.right, tt, cm)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        bad = np.abs(b) < TINY
        if np.any(bad):
            _fail(e, tt, bad, "division by zero")
        return a / b
    # '^' with constant exponent
    c = complex(b.reshape(-1)[0]) if b.size else 0j
    if c.imag == 0 and c.real == int(c.real) and abs(c.real) <= 2**31:
        k = int(c.real)
        if k < 0:
            bad = np.abs(a) < TINY
            if np.any(bad):
                _fail(e, tt, bad, "negative power of zero")
        return a**k if k >= 0 else 1.0 / a ** (-k)
    if not cm:
        bad = _nonpositive_real(a) & ~((a.real == 0) & (c.real > 0))
        if np.any(bad):
            _fail(e, tt, bad, "fractional power of a non-positive value")
    if c.real <= 0:
        bad = np.abs(a) < TINY
        if np.any(bad):
            _fail(e, tt, bad, "non-positive power of zero")
    with np.errstate(all="ignore"):
        return np.where(a == 0, 0.0, np.exp(c * np.log(np.where(a == 0, 1.0, a))))


# --------------------------------------------------------------------------- differentiation


def _add(a, b):
    if is_zero_expr(a):
        return b
    if is_zero_expr(b):
        return a
    return Binary("+", a, b)


def _sub(a, b):
    if is_zero_expr(b):
        return a
    if is_zero_expr(a):
        return Unary("neg", b)
    return Binary("-", a, b)


def _mul(a, b):
    if is_zero_expr(a) or is_zero_expr(b):
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return Binary("*", a, b)


def _div(a, b):
    if is_zero_expr(a):
        return ZERO
    if b == ONE:
        return a
    return Binary("/", a, b)


def _neg(a):
    return ZERO if is_zero_expr(a) else Unary("neg", a)


def diff(e: Expr) -> Expr:
    """Symbolic derivative with respect to ``t``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Unary):
        u, du = e.arg, diff(e.arg)
        if is_zero_expr(du):
            return ZERO
        if e.op == "neg":
            return _neg(du)
        if e.op == "sin":
            return _mul(Unary("cos", u), du)
        if e.op == "cos":
            return _neg(_mul(Unary("sin", u), du))
        if e.op == "exp":
            return _mul(e, du)
        if e.op == "ln":
            return _div(du, u)
        if e.op == "sqrt":
            return _div(du, Binary("*", Const(2.0), e))
        raise ValueError(f"unknown function {e.op}")
    a, b = e.left, e.right
    if e.op == "+":
        return _add(diff(a), diff(b))
    if e.op == "-":
        return _sub(diff(a), diff(b))
    if e.op == "*":
        return _add(_mul(diff(a), b), _mul(a, diff(b)))
    if e.op == "/":
        return _div(_sub(_mul(diff(a), b), _mul(a, diff(b))), Binary("^", b, Const(2.0)))
    # d(u^c) = c u^(c-1) u'
    da = diff(a)
    if is_zero_expr(da):
        return ZERO
    c = complex(evaluate(b, 0.0))
    if c == 0:
        return ZERO
    if c == 1:
        return da
    return _mul(_mul(b, Binary("^", a, Const(c - 1))), da)


# --------------------------------------------------------------------------- matrices of expressions


class MatrixFunction:
    """Rectangular array of expressions, callable on arrays of abscissae."""

    def __init__(self, entries: Sequence[Sequence[Expr]]):
        rows = [list(r) for r in entries]
        if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
            raise DimensionMismatch("matrix function rows must be non-empty and equally long")
        self.entries = tuple(tuple(r) for r in rows)
        self.shape = (len(rows), len(rows[0]))

    @property
    def n_rows(self) -> int:
        return self.shape[0]

    @property
    def n_cols(self) -> int:
        return self.shape[1]

    @classmethod
    def parse(cls, src) -> "MatrixFunction":
        """From a string (1x1), a list of strings (column) or a list of lists."""
        if isinstance(src, str):
            rows = [[src]]
        elif isinstance(src, (list, tuple)) and src and all(isinstance(s, str) for s in src):
            rows = [[s] for s in src]
        elif isinstance(src, (list, tuple)) and src and all(isinstance(r, (list, tuple)) for r in src):
            rows = src
        else:
            raise InputError("function matrix must be a string, a list of strings or a list of lists")
        return cls([[parse(s) for s in r] for r in rows])

    @classmethod
    def constant(cls, value, shape) -> "MatrixFunction":
        return cls([[Const(complex(value)) for _ in range(shape[1])] for _ in range(shape[0])])

    @property
    def is_zero(self) -> bool:
        return all(is_zero_expr(x) for row in self.entries for x in row)

    def diff(self) -> "MatrixFunction":
        return MatrixFunction([[diff(x) for x in row] for row in self.entries])

    def __call__(self, t) -> np.ndarray:
        tt = np.asarray(t, dtype=complex).reshape(-1)
        out = np.empty((len(tt),) + self.shape, dtype=complex)
        for i, row in enumerate(self.entries):
            for j, ex in enumerate(row):
                try:
                    out[:, i, j] = evaluate(ex, tt)
                except DomainError as exc:
                    raise DomainError(exc.node, exc.t, "value outside the domain", entry=(i, j)) from exc
        return out

    def to_strings(self):
        return [[to_text(x) for x in row] for row in self.entries]

    def __repr__(self):
        return f"MatrixFunction({self.to_strings()!r})"


def eval_matrix(F: MatrixFunction, t) -> np.ndarray:
    return F(np.array([t]))[0]
