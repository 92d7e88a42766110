"""Arithmetic and guard expressions used in problem files.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"

    orexpr  := andexpr ("||" andexpr)*
    andexpr := cmp ("&&" cmp)*
    cmp     := expr ("<=" | ">=" | "<" | ">") expr | "true" | "(" orexpr ")"

Identifiers are ``x1..xn`` (state), ``xd1..xdn`` (delayed state), ``u1..un``
(input) and ``t``.  ``^`` is right-associative and binds tighter than unary
minus, so ``-x1^2 == -(x1^2)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from ..errors import ExpressionDomainError, ExpressionError

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x", "xd", "u" or "t"
    index: int = 0  # 1-based; 0 for t

    @property
    def name(self) -> str:
        return "t" if self.kind == "t" else f"{self.kind}{self.index}"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Call]


@dataclass(frozen=True)
class TrueGuard:
    pass


@dataclass(frozen=True)
class Compare:
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


Guard = Union[TrueGuard, Compare, And, Or]


# -- tokenizer ---------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|&&|\|\||[-+*/^()<>,])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num, ident, op, end
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if mt is None:
            raise ExpressionError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = mt.lastgroup
        if kind == "ws":
            chunk = mt.group()
            if "\n" in chunk:
                line += chunk.count("\n")
                line_start = pos + chunk.rfind("\n") + 1
        else:
            tokens.append(Token(kind, mt.group(), line, pos - line_start + 1))
        pos = mt.end()
    tokens.append(Token("end", "", line, pos - line_start + 1))
    return tokens


# -- parser ------------------------------------------------------------------

_VAR = re.compile(r"^(xd|x|u)([1-9]\d*)$")


class _Parser:
    def __init__(self, text: str, n_x: int, n_u: int, allow_delayed: bool, allow_input: bool = True):
        self.toks = tokenize(text)
        self.i = 0
        self.n_x, self.n_u = n_x, n_u
        self.allow_delayed = allow_delayed
        self.allow_input = allow_input

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ExpressionError(msg, tok.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            found = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {found!r}")

    def finish(self) -> None:
        if self.tok.kind != "end":
            self.error(f"unexpected {self.tok.text!r}")

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^"):
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.i += 1
            if self.tok.kind == "op" and self.tok.text == "(":
                if tok.text not in FUNCTIONS:
                    self.error(f"unknown function {tok.text!r}", tok)
                self.i += 1
                if self.tok.kind == "op" and self.tok.text == ")":
                    self.error(f"function {tok.text!r} takes exactly one argument")
                arg = self.expr()
                if self.accept(","):
                    self.error(f"function {tok.text!r} takes exactly one argument")
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in FUNCTIONS:
                self.error(f"function {tok.text!r} needs an argument", tok)
            return self.variable(tok)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        self.error(f"expected a number, variable or '(' but found {found!r}")

    def variable(self, tok: Token) -> Var:
        if tok.text == "t":
            return Var("t")
        mt = _VAR.match(tok.text)
        if mt is None:
            self.error(f"unknown identifier {tok.text!r}", tok)
        kind, idx = mt.group(1), int(mt.group(2))
        if kind == "xd" and not self.allow_delayed:
            self.error(f"delayed state {tok.text!r} is not allowed here", tok)
        if kind == "u" and not self.allow_input:
            self.error(f"input {tok.text!r} is not allowed here", tok)
        limit = self.n_u if kind == "u" else self.n_x
        if idx > limit:
            self.error(f"{tok.text!r} exceeds declared dimension ({limit})", tok)
        return Var(kind, idx)

    # guards
    def orexpr(self) -> Guard:
        items = [self.andexpr()]
        while self.accept("||"):
            items.append(self.andexpr())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def andexpr(self) -> Guard:
        items = [self.cmp()]
        while self.accept("&&"):
            items.append(self.cmp())
        return items[0] if len(items) == 1 else And(tuple(items))

    def cmp(self) -> Guard:
        if self.tok.kind == "ident" and self.tok.text == "true":
            self.i += 1
            return TrueGuard()
        if self.tok.kind == "op" and self.tok.text == "(":
            save = self.i
            try:
                self.i += 1
                inner = self.orexpr()
                self.expect(")")
                if not (self.tok.kind == "op" and self.tok.text in "+-*/^<=>="):
                    return inner
            except ExpressionError:
                pass
            self.i = save
        left = self.expr()
        tok = self.tok
        if tok.kind == "op" and tok.text in ("<", "<=", ">", ">="):
            self.i += 1
            return Compare(tok.text, left, self.expr())
        self.error("expected a comparison operator (<, <=, >, >=)")


def parse_expression(text: str, n_x: int, n_u: int, allow_delayed: bool = False,
                     allow_input: bool = True) -> Expr:
    p = _Parser(text, n_x, n_u, allow_delayed, allow_input)
    node = p.expr()
    p.finish()
    return node


def parse_guard(text: str, n_x: int) -> Guard:
    """Parse a region guard; only state variables and ``t`` may appear."""
    p = _Parser(text, n_x, 0, allow_delayed=False, allow_input=False)
    node = p.orexpr()
    p.finish()
    return node


# -- reference interpreter ---------------------------------------------------

def render(e) -> str:
    """Canonical, fully parenthesized text; reparsing gives an identical tree."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{render(e.operand)})"
    if isinstance(e, BinOp):
        return f"({render(e.left)} {e.op} {render(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({render(e.arg)})"
    if isinstance(e, TrueGuard):
        return "true"
    if isinstance(e, Compare):
        return f"{render(e.left)} {e.op} {render(e.right)}"
    if isinstance(e, And):
        return "(" + " && ".join(render(i) for i in e.items) + ")"
    if isinstance(e, Or):
        return "(" + " || ".join(render(i) for i in e.items) + ")"
    raise TypeError(f"not an expression node: {e!r}")


def _domain(e, why: str):
    raise ExpressionDomainError(f"{why} in {render(e)}")


def _lookup(v: Var, x, xd, u, t) -> float:
    if v.kind == "t":
        if t is None:
            raise ExpressionError("no binding for t")
        return float(t)
    source = {"x": x, "xd": xd, "u": u}[v.kind]
    if source is None or v.index > len(source):
        raise ExpressionError(f"no binding for {v.name}")
    return float(source[v.index - 1])


# numpy kernels on float64 scalars, so the interpreter and the compiled form
# round identically
_SCALAR = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "tanh": np.tanh, "abs": np.abs, "log": np.log, "sqrt": np.sqrt,
}


def eval_expression(e: Expr, x=(), u=(), t=None, xd=()) -> float:
    """Evaluate a tree on scalar bindings, raising on domain errors."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return _lookup(e, x, xd, u, t)
    if isinstance(e, Neg):
        return -eval_expression(e.operand, x, u, t, xd)
    if isinstance(e, Call):
        a = eval_expression(e.arg, x, u, t, xd)
        if e.func == "log" and a <= 0:
            _domain(e, "log of non-positive value")
        if e.func == "sqrt" and a < 0:
            _domain(e, "sqrt of negative value")
        with np.errstate(all="ignore"):
            return float(_SCALAR[e.func](np.float64(a)))
    a = eval_expression(e.left, x, u, t, xd)
    b = eval_expression(e.right, x, u, t, xd)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if b == 0:
            _domain(e, "division by zero")
        return a / b
    if a < 0 and not float(b).is_integer():
        _domain(e, "non-integer power of negative value")
    if a == 0 and b < 0:
        _domain(e, "zero raised to a negative power")
    with np.errstate(all="ignore"):
        return float(np.power(np.float64(a), np.float64(b)))


def eval_guard(g: Guard, x=(), t=None) -> bool:
    if isinstance(g, TrueGuard):
        return True
    if isinstance(g, Compare):
        a = eval_expression(g.left, x, (), t)
        b = eval_expression(g.right, x, (), t)
        return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[g.op]
    if isinstance(g, And):
        return all(eval_guard(i, x, t) for i in g.items)
    if isinstance(g, Or):
        return any(eval_guard(i, x, t) for i in g.items)
    raise TypeError(f"not a guard node: {g!r}")


# -- vectorized compilation --------------------------------------------------

_VECTOR = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "tanh": np.tanh, "abs": np.abs, "log": np.log, "sqrt": np.sqrt,
}

_BINARY = {
    "+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power,
}

Compiled = Callable[..., np.ndarray]


def compile_expression(e: Expr) -> Compiled:
    """Turn a tree into ``f(x, u, t, xd=None)`` over batched arrays.

    ``x``, ``u`` and ``xd`` have shape ``(R, n)``; ``t`` is a scalar or ``(R,)``.
    Out-of-domain points yield ``nan``/``inf`` instead of raising, so the
    caller can treat them as diverged samples.
    """
    if isinstance(e, Num):
        v = e.value
        return lambda x, u, t, xd=None: v
    if isinstance(e, Var):
        if e.kind == "t":
            return lambda x, u, t, xd=None: t
        j = e.index - 1
        if e.kind == "x":
            return lambda x, u, t, xd=None: x[:, j]
        if e.kind == "u":
            return lambda x, u, t, xd=None: u[:, j]
        return lambda x, u, t, xd=None: xd[:, j]
    if isinstance(e, Neg):
        f = compile_expression(e.operand)
        return lambda x, u, t, xd=None: np.negative(f(x, u, t, xd))
    if isinstance(e, Call):
        f, fn = compile_expression(e.arg), _VECTOR[e.func]
        return lambda x, u, t, xd=None: fn(f(x, u, t, xd))
    f, g, op = compile_expression(e.left), compile_expression(e.right), _BINARY[e.op]
    if e.op == "^":
        def pw(x, u, t, xd=None):
            return np.power(np.asarray(f(x, u, t, xd), dtype=float), g(x, u, t, xd))
        return pw
    return lambda x, u, t, xd=None: op(f(x, u, t, xd), g(x, u, t, xd))


_CMP = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal}


def compile_guard(g: Guard) -> Callable[[np.ndarray, float], np.ndarray]:
    """Turn a guard tree into ``guard(x, t) -> bool array of shape (R,)``."""
    if isinstance(g, TrueGuard):
        return lambda x, t: np.ones(x.shape[0], dtype=bool)
    if isinstance(g, Compare):
        a, b, op = compile_expression(g.left), compile_expression(g.right), _CMP[g.op]
        return lambda x, t: np.broadcast_to(op(a(x, None, t), b(x, None, t)), (x.shape[0],))
    parts = [compile_guard(i) for i in g.items]
    if isinstance(g, And):
        def all_(x, t):
            out = parts[0](x, t).copy()
            for p in parts[1:]:
                out &= p(x, t)
            return out
        return all_

    def any_(x, t):
        out = parts[0](x, t).copy()
        for p in parts[1:]:
            out |= p(x, t)
        return out
    return any_


def variables(e) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (Num, TrueGuard)):
        return set()
    if isinstance(e, Neg):
        return variables(e.operand)
    if isinstance(e, Call):
        return variables(e.arg)
    if isinstance(e, (BinOp, Compare)):
        return variables(e.left) | variables(e.right)
    return set().union(*(variables(i) for i in e.items))
