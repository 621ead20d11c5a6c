"""Expression trees over t, q1..qn, p1..pn and named parameters.

Parsing, printing, evaluation, exact differentiation with constant folding,
and compilation of batches of expressions into plain Python callables.

Grammar (see docs/grammar.md for the EBNF)::

    expr     := term (("+" | "-") term)*
    term     := unary (("*" | "/") unary)*
    unary    := "-" unary | power
    power    := atom ("^" unary)?
    atom     := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

A minus sign directly in front of a number literal (and not followed by
``^``) produces a negative constant rather than a negation node, so that
printing and re-parsing is the identity on trees.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Unary", "Binary", "Bindings",
    "ParseError", "DomainError",
    "FUNCTIONS", "ZERO", "ONE",
    "parse", "fmt", "evaluate", "diff", "substitute", "free_names",
    "is_numeric", "numeric_value", "compile_exprs",
    "add", "sub", "mul", "div", "neg", "power", "call", "const",
]

FUNCTIONS = ("sqrt", "sin", "cos", "exp", "ln")
UNARY_OPS = ("neg",) + FUNCTIONS
BINARY_OPS = ("+", "-", "*", "/", "^")

_COORD_RE = re.compile(r"^(?:t|[qp][1-9][0-9]*)$")


class ParseError(ValueError):
    """Syntax error with the byte offset into the source and the expected tokens."""

    def __init__(self, message: str, offset: int, expected: Iterable[str] = ()):
        self.message = message
        self.offset = offset
        self.expected = frozenset(expected)
        exp = f"; expected one of {sorted(self.expected)}" if self.expected else ""
        super().__init__(f"{message} at byte {offset}{exp}")


class DomainError(ArithmeticError):
    """Evaluation left the real domain of an operation."""

    def __init__(self, message: str, subexpr: "Expr"):
        self.subexpr = subexpr
        super().__init__(f"{message} in '{fmt(subexpr)}'")


# ---------------------------------------------------------------------------
# AST


class Expr:
    __slots__ = ("_hash",)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"{type(self).__name__}<{fmt(self)}>"

    def __str__(self):
        return fmt(self)

    # folding arithmetic, handy when assembling formulas in code
    def __add__(self, other):
        return add(self, const(other))

    def __radd__(self, other):
        return add(const(other), self)

    def __sub__(self, other):
        return sub(self, const(other))

    def __rsub__(self, other):
        return sub(const(other), self)

    def __mul__(self, other):
        return mul(self, const(other))

    def __rmul__(self, other):
        return mul(const(other), self)

    def __truediv__(self, other):
        return div(self, const(other))

    def __rtruediv__(self, other):
        return div(const(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, const(exponent))


class Const(Expr):
    __hash__ = Expr.__hash__
    __slots__ = ("value",)

    def __init__(self, value: float):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite constant {value!r}")
        self.value = value
        self._hash = hash(("c", value))

    def __eq__(self, other):
        return self is other or (type(other) is Const and other.value == self.value)


class Var(Expr):
    __hash__ = Expr.__hash__
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name
        self._hash = hash(("v", name))

    def __eq__(self, other):
        return self is other or (type(other) is Var and other.name == self.name)


class Unary(Expr):
    __hash__ = Expr.__hash__
    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expr):
        if op not in UNARY_OPS:
            raise ValueError(f"unknown unary operator {op!r}")
        self.op = op
        self.arg = arg
        self._hash = hash(("u", op, arg._hash))

    def __eq__(self, other):
        return self is other or (
            type(other) is Unary
            and other._hash == self._hash
            and other.op == self.op
            and other.arg == self.arg
        )


class Binary(Expr):
    __hash__ = Expr.__hash__
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        if op not in BINARY_OPS:
            raise ValueError(f"unknown binary operator {op!r}")
        if op == "^" and not is_numeric(right):
            raise ValueError("exponent must be a numeric constant expression")
        self.op = op
        self.left = left
        self.right = right
        self._hash = hash(("b", op, left._hash, right._hash))

    def __eq__(self, other):
        return self is other or (
            type(other) is Binary
            and other._hash == self._hash
            and other.op == self.op
            and other.left == self.left
            and other.right == self.right
        )


ZERO = Const(0.0)
ONE = Const(1.0)


def const(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    return Const(x)


def is_numeric(e: Expr) -> bool:
    """True when e contains no variables at all."""
    if type(e) is Const:
        return True
    if type(e) is Var:
        return False
    if type(e) is Unary:
        return is_numeric(e.arg)
    return is_numeric(e.left) and is_numeric(e.right)


def numeric_value(e: Expr) -> float:
    return evaluate(e, {})


# ---------------------------------------------------------------------------
# folding constructors


def _try_const(fn, *args) -> Expr | None:
    try:
        v = fn(*args)
    except (ValueError, ZeroDivisionError, OverflowError):
        return None
    if isinstance(v, complex) or not math.isfinite(v):
        return None
    return Const(v)


def add(a: Expr, b: Expr) -> Expr:
    if type(a) is Const and type(b) is Const:
        return _try_const(lambda x, y: x + y, a.value, b.value) or Binary("+", a, b)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if type(a) is Const and type(b) is Const:
        return _try_const(lambda x, y: x - y, a.value, b.value) or Binary("-", a, b)
    if b == ZERO:
        return a
    if a == ZERO:
        return neg(b)
    if a == b:
        return ZERO
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if type(a) is Const and type(b) is Const:
        return _try_const(lambda x, y: x * y, a.value, b.value) or Binary("*", a, b)
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if type(a) is Const and type(b) is Const:
        return _try_const(lambda x, y: x / y, a.value, b.value) or Binary("/", a, b)
    if a == ZERO and b != ZERO:
        return ZERO
    if b == ONE:
        return a
    return Binary("/", a, b)


def neg(a: Expr) -> Expr:
    if type(a) is Const:
        return Const(-a.value)
    if type(a) is Unary and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def power(a: Expr, c: Expr) -> Expr:
    if not is_numeric(c):
        raise ValueError("exponent must be a numeric constant expression")
    cv = numeric_value(c)
    if cv == 0.0:
        return ONE
    if cv == 1.0:
        return a
    if type(a) is Const:
        return _try_const(math.pow, a.value, cv) or Binary("^", a, Const(cv))
    return Binary("^", a, c if type(c) is Const else Const(cv))


_MATH = {
    "sqrt": math.sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "ln": math.log,
}


def call(fn: str, a: Expr) -> Expr:
    if fn == "neg":
        return neg(a)
    if type(a) is Const:
        folded = _try_const(_MATH[fn], a.value)
        if folded is not None:
            return folded
    return Unary(fn, a)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, name, op, end
    text: str
    offset: int  # byte offset


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(source)
    while True:
        while pos < n and source[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            raise ParseError(
                f"unexpected character {source[pos]!r}",
                len(source[:pos].encode()),
                ("number", "name", "operator"),
            )
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(_Tok(kind, m.group(kind), len(source[:start].encode())))
        pos = m.end()
    toks.append(_Tok("end", "", len(source.encode())))
    return toks


class _Parser:
    def __init__(self, source: str, names: frozenset | None):
        self.toks = _tokenize(source)
        self.i = 0
        self.names = names

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def advance(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str):
        if self.tok.text != text or self.tok.kind != "op":
            raise ParseError(f"unexpected {self._describe(self.tok)}", self.tok.offset, (text,))
        self.advance()

    @staticmethod
    def _describe(tok: _Tok) -> str:
        return "end of input" if tok.kind == "end" else f"token {tok.text!r}"

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ParseError(
                f"unexpected {self._describe(self.tok)}",
                self.tok.offset,
                ("+", "-", "*", "/", "^", "end of input"),
            )
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            e = Binary(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            nxt = self.peek()
            if self.tok.kind == "num" and not (nxt.kind == "op" and nxt.text == "^"):
                return Const(-float(self.advance().text))
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            at = self.tok.offset
            exponent = self.unary()
            if not is_numeric(exponent):
                raise ParseError("non-constant exponent", at, ("number",))
            return Binary("^", base, exponent)
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                if tok.text not in FUNCTIONS:
                    raise ParseError(f"unknown function {tok.text!r}", tok.offset, FUNCTIONS)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Unary(tok.text, arg)
            if tok.text in FUNCTIONS:
                raise ParseError(f"function {tok.text!r} used without argument", tok.offset, ("(",))
            if self.names is not None and tok.text not in self.names:
                if _COORD_RE.match(tok.text):
                    raise ParseError(f"coordinate {tok.text!r} exceeds the system dimension", tok.offset, ())
                raise ParseError(f"undeclared name {tok.text!r}", tok.offset, ())
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(
            f"unexpected {self._describe(tok)}", tok.offset, ("number", "name", "(", "-")
        )


def parse(source: str, names: Iterable[str] | None = None) -> Expr:
    """Parse infix text into an expression tree.

    If `names` is given, every variable must belong to it.
    """
    return _Parser(source, None if names is None else frozenset(names)).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_ATOM = 5


def _num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _prec(e: Expr) -> int:
    if type(e) is Binary:
        return _PREC[e.op]
    if type(e) is Unary:
        return 3 if e.op == "neg" else _ATOM
    if type(e) is Const and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return _ATOM


def fmt(e: Expr) -> str:
    """Print with the minimal parentheses that preserve the tree shape."""
    if type(e) is Const:
        v = e.value
        if v == 0.0 and math.copysign(1.0, v) < 0:
            return "-0"
        return _num(v)
    if type(e) is Var:
        return e.name
    if type(e) is Unary:
        if e.op != "neg":
            return f"{e.op}({fmt(e.arg)})"
        a = e.arg
        inner = fmt(a)
        if (type(a) is Const and _prec(a) == _ATOM) or _prec(a) < 3:
            inner = f"({inner})"
        return "-" + inner
    p = _PREC[e.op]
    left, right = fmt(e.left), fmt(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < 3:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}" if p == 1 else f"{left}*{right}" if e.op == "*" else f"{left}/{right}"


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class Bindings:
    """Values for t, q, p and parameters."""

    t: float = 0.0
    q: Sequence[float] = ()
    p: Sequence[float] = ()
    params: Mapping[str, float] | None = None

    def as_dict(self) -> dict[str, float]:
        env = dict(self.params or {})
        env["t"] = float(self.t)
        for i, v in enumerate(self.q, 1):
            env[f"q{i}"] = float(v)
        for i, v in enumerate(self.p, 1):
            env[f"p{i}"] = float(v)
        return env


def _pow(x: float, c: float) -> float:
    return math.pow(x, c)


def _checked_unary(op: str, x: float, node: Expr) -> float:
    if op == "neg":
        return -x
    if op == "sqrt" and x < 0:
        raise DomainError("sqrt of negative value", node)
    if op == "ln" and x <= 0:
        raise DomainError("ln of non-positive value", node)
    try:
        return _MATH[op](x)
    except (ValueError, OverflowError) as exc:
        raise DomainError(f"{op} failed ({exc})", node) from None


def _checked_binary(op: str, x: float, y: float, node: Expr) -> float:
    if op == "+":
        return x + y
    if op == "-":
        return x - y
    if op == "*":
        return x * y
    if op == "/":
        if y == 0:
            raise DomainError("division by zero", node)
        return x / y
    try:
        return _pow(x, y)
    except (ValueError, ZeroDivisionError, OverflowError):
        raise DomainError(f"power {x!r}^{y!r} outside the real domain", node) from None


def evaluate(e: Expr, bindings: Bindings | Mapping[str, float]) -> float:
    """Evaluate in IEEE double precision; domain violations raise DomainError."""
    env = bindings.as_dict() if isinstance(bindings, Bindings) else bindings
    memo: dict[int, float] = {}

    def ev(node: Expr) -> float:
        key = id(node)
        if key in memo:
            return memo[key]
        tp = type(node)
        if tp is Const:
            v = node.value
        elif tp is Var:
            try:
                v = float(env[node.name])
            except KeyError:
                raise KeyError(f"unbound name {node.name!r}") from None
        elif tp is Unary:
            v = _checked_unary(node.op, ev(node.arg), node)
        else:
            v = _checked_binary(node.op, ev(node.left), ev(node.right), node)
        memo[key] = v
        return v

    return ev(e)


# ---------------------------------------------------------------------------
# differentiation


def diff(e: Expr, var: str) -> Expr:
    """Exact partial derivative of e with respect to the variable `var`."""
    memo: dict[int, Expr] = {}

    def d(node: Expr) -> Expr:
        key = id(node)
        if key in memo:
            return memo[key]
        tp = type(node)
        if tp is Const:
            r = ZERO
        elif tp is Var:
            r = ONE if node.name == var else ZERO
        elif tp is Unary:
            u = node.arg
            du = d(u)
            if du == ZERO:
                r = ZERO
            elif node.op == "neg":
                r = neg(du)
            elif node.op == "sqrt":
                r = div(du, mul(Const(2.0), node))
            elif node.op == "sin":
                r = mul(call("cos", u), du)
            elif node.op == "cos":
                r = mul(neg(call("sin", u)), du)
            elif node.op == "exp":
                r = mul(node, du)
            else:  # ln
                r = div(du, u)
        else:
            a, b = node.left, node.right
            if node.op == "^":
                da = d(a)
                c = numeric_value(b)
                r = mul(mul(Const(c), power(a, Const(c - 1.0))), da)
            else:
                da, db = d(a), d(b)
                if node.op == "+":
                    r = add(da, db)
                elif node.op == "-":
                    r = sub(da, db)
                elif node.op == "*":
                    r = add(mul(da, b), mul(a, db))
                else:
                    r = sub(div(da, b), div(mul(a, db), power(b, Const(2.0))))
        memo[key] = r
        return r

    return d(e)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (used for scenario macros)."""
    if not mapping:
        return e
    memo: dict[int, Expr] = {}

    def s(node: Expr) -> Expr:
        key = id(node)
        if key in memo:
            return memo[key]
        tp = type(node)
        if tp is Const:
            r = node
        elif tp is Var:
            r = mapping.get(node.name, node)
        elif tp is Unary:
            a = s(node.arg)
            r = node if a is node.arg else Unary(node.op, a)
        else:
            a, b = s(node.left), s(node.right)
            r = node if (a is node.left and b is node.right) else Binary(node.op, a, b)
        memo[key] = r
        return r

    return s(e)


def free_names(e: Expr) -> set[str]:
    out: set[str] = set()
    stack = [e]
    seen: set[int] = set()
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if type(node) is Var:
            out.add(node.name)
        elif type(node) is Unary:
            stack.append(node.arg)
        elif type(node) is Binary:
            stack.extend((node.left, node.right))
    return out


def is_coordinate(name: str) -> bool:
    return bool(_COORD_RE.match(name))


# ---------------------------------------------------------------------------
# compilation

_PYOP = {"+": "+", "-": "-", "*": "*", "/": "/"}
_FN = {"sqrt": "_sqrt", "sin": "_sin", "cos": "_cos", "exp": "_exp", "ln": "_ln"}
_GLOBALS = {
    "_sqrt": math.sqrt,
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_ln": math.log,
    "_pow": _pow,
}


def compile_exprs(exprs: Sequence[Expr], argnames: Sequence[str]) -> Callable[..., tuple]:
    """Compile expressions into one function of positional `argnames` returning a tuple.

    Shared subtrees are evaluated once. The arithmetic is the same sequence
    of IEEE operations as `evaluate`, so results are bit-identical; on a
    domain violation the tree interpreter is rerun to name the offending
    subexpression.
    """
    exprs = list(exprs)
    slot = {name: f"_a{i}" for i, name in enumerate(argnames)}
    lines: list[str] = []
    names: dict[Expr, str] = {}

    def emit(node: Expr) -> str:
        hit = names.get(node)
        if hit is not None:
            return hit
        tp = type(node)
        if tp is Const:
            return repr(node.value)
        if tp is Var:
            try:
                return slot[node.name]
            except KeyError:
                raise KeyError(f"unbound name {node.name!r}") from None
        if tp is Unary:
            a = emit(node.arg)
            code = f"-{a}" if node.op == "neg" else f"{_FN[node.op]}({a})"
        elif node.op == "^":
            code = f"_pow({emit(node.left)}, {numeric_value(node.right)!r})"
        else:
            code = f"{emit(node.left)} {_PYOP[node.op]} {emit(node.right)}"
        tmp = f"_t{len(names)}"
        lines.append(f"    {tmp} = {code}")
        names[node] = tmp
        return tmp

    outs = [emit(e) for e in exprs]
    body = "\n".join(lines)
    ret = ", ".join(outs) + ("," if len(outs) == 1 else "")
    src = f"def _compiled({', '.join(slot[n] for n in argnames)}):\n{body}\n    return ({ret})\n"
    namespace = dict(_GLOBALS)
    exec(compile(src, "<noetherlab-compiled>", "exec"), namespace)
    raw = namespace["_compiled"]

    def fn(*args):
        try:
            return raw(*args)
        except (ValueError, ZeroDivisionError, OverflowError):
            env = dict(zip(argnames, args))
            for e in exprs:
                evaluate(e, env)
            raise

    fn.source = src
    return fn


def jacobian_exprs(exprs: Sequence[Expr], variables: Sequence[str]) -> list[list[Expr]]:
    return [[diff(e, v) for v in variables] for e in exprs]


def as_array(values, shape) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(shape)
