"""Closed-form scalar expressions in n real variables.

Expressions are immutable trees with exact rational constants. The module
covers construction (with constant folding and 0/1 identities only), a small
text grammar, exact symbolic differentiation, float / exact / dual-number
evaluation, code generation for vectorised evaluation, and restriction of
polynomial expressions to lines.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .poly_real import UniPoly

TRANSCENDENTAL = ("sin", "cos", "exp")
FUNCTIONS = ("sqrt",) + TRANSCENDENTAL
MAX_VARS = 9


class DomainError(ArithmeticError):
    """Zero divisor or negative radicand met during evaluation."""

    def __init__(self, message: str, node: "Expr | None" = None):
        super().__init__(message)
        self.node = node


class NotExactError(ValueError):
    """Exact evaluation left the rationals (irrational sqrt, transcendental)."""


class NotPolynomialError(ValueError):
    pass


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# node type


class Expr:
    """A node of an expression tree.

    ``op`` is one of const, var, add, sub, mul, div, neg, pow, sqrt, sin, cos,
    exp. ``data`` carries the Fraction of a constant, the 1-based index of a
    variable, or the integer exponent of a power.
    """

    __slots__ = ("op", "args", "data", "_hash", "_size", "_maxvar", "_semialg")

    def __init__(self, op: str, args: tuple["Expr", ...] = (), data=None):
        self.op = op
        self.args = args
        self.data = data
        self._hash = hash((op, data, tuple(a._hash for a in args)))
        self._size = 1 + sum(a._size for a in args)
        own = data if op == "var" else 0
        self._maxvar = max([own] + [a._maxvar for a in args])
        self._semialg = op not in TRANSCENDENTAL and all(a._semialg for a in args)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return (
            self.op == other.op
            and self.data == other.data
            and len(self.args) == len(other.args)
            and all(a == b for a, b in zip(self.args, other.args))
        )

    def __ne__(self, other) -> bool:
        return not self == other

    @property
    def size(self) -> int:
        """Node count of the tree (shared subtrees counted once per use)."""
        return self._size

    @property
    def max_var(self) -> int:
        return self._maxvar

    @property
    def is_semialgebraic(self) -> bool:
        return self._semialg

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    def __repr__(self) -> str:
        return f"Expr({to_text(self)!r})"

    def __str__(self) -> str:
        return to_text(self)

    # arithmetic sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k: int):
        return power(self, k)


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite constant {value}")
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot use {type(value).__name__} as a constant")


def as_expr(value) -> Expr:
    return value if isinstance(value, Expr) else const(value)


def const(value) -> Expr:
    return Expr("const", (), _frac(value))


def var(k: int) -> Expr:
    if not isinstance(k, int) or k < 1:
        raise ValueError(f"variable index must be a positive integer, got {k!r}")
    return Expr("var", (), k)


ZERO = const(0)
ONE = const(1)


def _is(e: Expr, value) -> bool:
    return e.op == "const" and e.data == value


def add(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.data + b.data)
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return Expr("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.data - b.data)
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    return Expr("sub", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.data * b.data)
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    return Expr("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 0):
        raise DomainError("division by the constant zero", b)
    if a.is_const and b.is_const:
        return const(a.data / b.data)
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    return Expr("div", (a, b))


def neg(a: Expr) -> Expr:
    if a.is_const:
        return const(-a.data)
    if a.op == "neg":
        return a.args[0]
    return Expr("neg", (a,))


def power(a: Expr, k: int) -> Expr:
    if not isinstance(k, int) or isinstance(k, bool):
        raise TypeError("only integer exponents are supported")
    if k == 0:
        return ONE
    if k == 1:
        return a
    if a.is_const:
        if a.data == 0 and k < 0:
            raise DomainError("zero raised to a negative power", a)
        return const(a.data**k)
    return Expr("pow", (a,), k)


def _rational_sqrt(q: Fraction) -> Fraction | None:
    if q < 0:
        return None
    rn, rd = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if rn * rn == q.numerator and rd * rd == q.denominator:
        return Fraction(rn, rd)
    return None


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if a.is_const:
        if name == "sqrt":
            if a.data < 0:
                raise DomainError("square root of a negative constant", a)
            r = _rational_sqrt(a.data)
            if r is not None:
                return const(r)
        elif a.data == 0:
            return ONE if name in ("cos", "exp") else ZERO
    return Expr(name, (a,))


def sqrt(a) -> Expr:
    return func("sqrt", as_expr(a))


def sin(a) -> Expr:
    return func("sin", as_expr(a))


def cos(a) -> Expr:
    return func("cos", as_expr(a))


def exp(a) -> Expr:
    return func("exp", as_expr(a))


def rebuild(e: Expr, args: Sequence[Expr]) -> Expr:
    """Re-create ``e`` over new children through the folding constructors."""
    op = e.op
    if op in ("const", "var"):
        return e
    if op == "add":
        return add(*args)
    if op == "sub":
        return sub(*args)
    if op == "mul":
        return mul(*args)
    if op == "div":
        return div(*args)
    if op == "neg":
        return neg(args[0])
    if op == "pow":
        return power(args[0], e.data)
    return func(op, args[0])


def postorder(roots: Iterable[Expr]) -> list[Expr]:
    """Distinct nodes of the given trees, children before parents."""
    seen: set[Expr] = set()
    order: list[Expr] = []
    for root in roots:
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if node in seen:
                continue
            if expanded:
                seen.add(node)
                order.append(node)
            else:
                stack.append((node, True))
                for child in reversed(node.args):
                    if child not in seen:
                        stack.append((child, False))
    return order


def substitute(e: Expr, mapping: Mapping[int, Expr]) -> Expr:
    """Replace variables by expressions (mapping: index -> Expr)."""
    memo: dict[Expr, Expr] = {}
    for node in postorder([e]):
        if node.op == "var":
            memo[node] = mapping.get(node.data, node)
        else:
            memo[node] = rebuild(node, [memo[a] for a in node.args])
    return memo[e]


# ---------------------------------------------------------------------------
# printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_SYMBOL = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}


def _const_text(q: Fraction) -> str:
    if q.denominator == 1 and q >= 0:
        return str(q.numerator)
    return f"({q})"


def to_text(e: Expr) -> str:
    """Render ``e`` in the input grammar; parsing the result gives back ``e``."""
    memo: dict[Expr, tuple[str, int]] = {}
    for node in postorder([e]):
        op = node.op
        if op == "const":
            memo[node] = (_const_text(node.data), 5)
        elif op == "var":
            memo[node] = (f"x{node.data}", 5)
        elif op in _SYMBOL:
            p = _PREC[op]
            (ls, lp), (rs, rp) = memo[node.args[0]], memo[node.args[1]]
            if lp < p:
                ls = f"({ls})"
            if rp <= p:
                rs = f"({rs})"
            memo[node] = (ls + _SYMBOL[op] + rs, p)
        elif op == "neg":
            s, p = memo[node.args[0]]
            memo[node] = ("-" + (s if p >= 3 else f"({s})"), 3)
        elif op == "pow":
            s, p = memo[node.args[0]]
            k = node.data
            memo[node] = ((s if p >= 5 else f"({s})") + (f"^{k}" if k > 0 else f"^({k})"), 4)
        else:
            memo[node] = (f"{op}({memo[node.args[0]][0]})", 5)
    return memo[e][0]


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<num>\d+\.\d*|\.\d+|\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()=,])
  | (?P<bad>.)
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(line_text: str, line_no: int) -> list[_Tok]:
    toks = []
    for m in _TOKEN.finditer(line_text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise ExprSyntaxError(f"unexpected character {m.group()!r}", line_no, m.start() + 1)
        toks.append(_Tok(kind, m.group(), line_no, m.start() + 1))
    toks.append(_Tok("end", "", line_no, len(line_text) + 1))
    return toks


_VAR_NAME = re.compile(r"x([1-9])$")


class _Parser:
    def __init__(self, toks, n, names, semialgebraic, aliases):
        self.toks = toks
        self.pos = 0
        self.n = n
        self.names = names
        self.semialgebraic = semialgebraic
        self.aliases = aliases

    @property
    def tok(self) -> _Tok:
        return self.toks[self.pos]

    def fail(self, message, tok=None):
        tok = tok or self.tok
        raise ExprSyntaxError(message, tok.line, tok.col)

    def take(self, text=None, kind=None) -> _Tok:
        tok = self.tok
        if (text is not None and tok.text != text) or (kind is not None and tok.kind != kind):
            want = repr(text) if text is not None else kind
            self.fail(f"expected {want}, found {tok.text or 'end of line'!r}")
        self.pos += 1
        return tok

    def expression(self) -> Expr:
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.take().text
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op_tok = self.take()
            rhs = self.unary()
            if op_tok.text == "*":
                node = mul(node, rhs)
            else:
                try:
                    node = div(node, rhs)
                except DomainError as exc:
                    self.fail(str(exc), op_tok)
        return node

    def unary(self) -> Expr:
        if self.tok.text == "-":
            self.take()
            return neg(self.unary())
        if self.tok.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def exponent(self) -> int:
        if self.tok.text == "(":
            self.take()
            k = self.exponent()
            self.take(")")
            return k
        sign = 1
        if self.tok.text == "-":
            self.take()
            sign = -1
        tok = self.tok
        if tok.kind != "num" or not tok.text.isdigit():
            self.fail("exponent must be an integer")
        self.take()
        return sign * int(tok.text)

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.text == "^":
            op_tok = self.take()
            k = self.exponent()
            try:
                return power(base, k)
            except DomainError as exc:
                self.fail(str(exc), op_tok)
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.take()
            return const(Fraction(tok.text))
        if tok.text == "(":
            self.take()
            node = self.expression()
            self.take(")")
            return node
        if tok.kind == "name":
            self.take()
            name = tok.text
            if name in FUNCTIONS:
                if self.semialgebraic and name in TRANSCENDENTAL:
                    self.fail(f"{name} is not allowed under #semialgebraic", tok)
                self.take("(")
                arg = self.expression()
                self.take(")")
                try:
                    return func(name, arg)
                except DomainError as exc:
                    self.fail(str(exc), tok)
            if name in self.names:
                return self.names[name]
            if name in self.aliases:
                k = self.aliases[name]
            else:
                m = _VAR_NAME.match(name)
                if not m:
                    self.fail(f"unknown name {name!r}", tok)
                k = int(m.group(1))
            if self.n is not None and k > self.n:
                self.fail(f"variable {name} out of range for dimension {self.n}", tok)
            return var(k)
        self.fail(f"unexpected {tok.text or 'end of line'!r}")


@dataclass
class Program:
    """Result of parsing a block of grammar text."""

    definitions: dict[str, Expr] = field(default_factory=dict)
    order: list[str] = field(default_factory=list)
    tail: Expr | None = None
    semialgebraic: bool = False


def parse_program(text: str, n: int | None = None, aliases: Mapping[str, int] | None = None) -> Program:
    """Parse definitions ``name = expr`` (one per line) and an optional bare
    trailing expression. ``#semialgebraic`` forbids sin/cos/exp; other
    ``#`` lines are comments."""
    aliases = dict(aliases or {})
    prog = Program()
    lines = text.splitlines() or [""]
    prog.semialgebraic = any(ln.strip().lower() == "#semialgebraic" for ln in lines)
    for line_no, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        toks = _tokenize(raw, line_no)
        target = None
        if len(toks) > 2 and toks[0].kind == "name" and toks[1].text == "=":
            target = toks[0]
            if target.text in FUNCTIONS or _VAR_NAME.match(target.text) or target.text in aliases:
                raise ExprSyntaxError(f"cannot assign to {target.text!r}", target.line, target.col)
            toks = toks[2:]
        parser = _Parser(toks, n, prog.definitions, prog.semialgebraic, aliases)
        node = parser.expression()
        parser.take(kind="end")
        if target is None:
            if prog.tail is not None:
                raise ExprSyntaxError("more than one bare expression", line_no, 1)
            prog.tail = node
        else:
            if target.text not in prog.definitions:
                prog.order.append(target.text)
            prog.definitions[target.text] = node
    return prog


def parse_expr(text: str, n: int | None = None, aliases: Mapping[str, int] | None = None) -> Expr:
    """Parse a single expression, optionally preceded by definitions.

    Without a bare trailing expression the last definition is returned.
    """
    prog = parse_program(text, n, aliases)
    if prog.tail is not None:
        return prog.tail
    if prog.order:
        return prog.definitions[prog.order[-1]]
    raise ExprSyntaxError("empty input", 1, 1)


# ---------------------------------------------------------------------------
# maps


@dataclass(frozen=True)
class MapSpec:
    """A map R^n -> R^n given by n component expressions."""

    components: tuple[Expr, ...]
    labels: tuple[str, ...] = ()
    semialgebraic: bool = True
    name: str = ""

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        n = len(comps)
        if n == 0:
            raise ValueError("a map needs at least one component")
        if n > MAX_VARS:
            raise ValueError(f"dimension {n} exceeds the grammar limit {MAX_VARS}")
        for k, c in enumerate(comps, start=1):
            if c.max_var > n:
                raise ValueError(f"component f{k} uses x{c.max_var} beyond dimension {n}")
            if self.semialgebraic and not c.is_semialgebraic:
                raise ValueError(f"component f{k} is transcendental but the map is flagged semialgebraic")
        labels = tuple(self.labels) or tuple(f"f{k}" for k in range(1, n + 1))
        if len(labels) != n:
            raise ValueError("one label per component expected")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.components)

    def __getitem__(self, k: int) -> Expr:
        """1-based component access."""
        return self.components[k - 1]

    def to_text(self) -> str:
        head = ["#semialgebraic"] if self.semialgebraic else []
        return "\n".join(head + [f"f{k} = {to_text(c)}" for k, c in enumerate(self.components, 1)]) + "\n"

    def drop(self, i: int) -> tuple[Expr, ...]:
        return tuple(c for k, c in enumerate(self.components, 1) if k != i)


def parse_map(text: str, name: str = "") -> MapSpec:
    """Parse a map file: lines ``fK = expr`` for K = 1..n plus helpers."""
    prog = parse_program(text)
    comps = {}
    for key, value in prog.definitions.items():
        m = re.fullmatch(r"f([1-9])", key)
        if m:
            comps[int(m.group(1))] = value
    if not comps:
        raise ExprSyntaxError("no components f1..fn defined", 1, 1)
    n = max(comps)
    missing = [k for k in range(1, n + 1) if k not in comps]
    if missing:
        raise ExprSyntaxError(f"missing component f{missing[0]}", 1, 1)
    exprs = tuple(comps[k] for k in range(1, n + 1))
    for k, e in enumerate(exprs, 1):
        if e.max_var > n:
            raise ExprSyntaxError(f"f{k} uses x{e.max_var} but the map has dimension {n}", 1, 1)
    semi = prog.semialgebraic or all(e.is_semialgebraic for e in exprs)
    return MapSpec(exprs, semialgebraic=semi, name=name)


# ---------------------------------------------------------------------------
# differentiation


def diff(e: Expr, k: int, _memo: dict | None = None) -> Expr:
    """Exact symbolic partial derivative with respect to x_k."""
    if k < 1:
        raise ValueError("variable indices start at 1")
    memo: dict[Expr, Expr] = {} if _memo is None else _memo
    for node in postorder([e]):
        if node in memo:
            continue
        op, args = node.op, node.args
        if op == "const":
            d = ZERO
        elif op == "var":
            d = ONE if node.data == k else ZERO
        elif op == "add":
            d = add(memo[args[0]], memo[args[1]])
        elif op == "sub":
            d = sub(memo[args[0]], memo[args[1]])
        elif op == "neg":
            d = neg(memo[args[0]])
        elif op == "mul":
            u, v = args
            d = add(mul(memo[u], v), mul(u, memo[v]))
        elif op == "div":
            u, v = args
            d = div(sub(mul(memo[u], v), mul(u, memo[v])), power(v, 2))
        elif op == "pow":
            u, p = args[0], node.data
            d = mul(mul(const(p), power(u, p - 1)), memo[u])
        elif op == "sqrt":
            d = div(memo[args[0]], mul(const(2), node))
        elif op == "sin":
            d = mul(func("cos", args[0]), memo[args[0]])
        elif op == "cos":
            d = neg(mul(func("sin", args[0]), memo[args[0]]))
        elif op == "exp":
            d = mul(node, memo[args[0]])
        else:  # pragma: no cover
            raise ValueError(op)
        memo[node] = d
    return memo[e]


# ---------------------------------------------------------------------------
# evaluation


def _check_point(p) -> list:
    vals = list(p)
    for v in vals:
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError("points must have finite coordinates")
    return vals


def _walk(e: Expr, leaf: Callable[[Expr], object], ops) -> object:
    memo: dict[Expr, object] = {}
    for node in postorder([e]):
        if node.op in ("const", "var"):
            memo[node] = leaf(node)
        else:
            memo[node] = ops(node, [memo[a] for a in node.args])
    return memo[e]


def _float_op(node: Expr, vals):
    op = node.op
    if op == "add":
        return vals[0] + vals[1]
    if op == "sub":
        return vals[0] - vals[1]
    if op == "mul":
        return vals[0] * vals[1]
    if op == "neg":
        return -vals[0]
    if op == "div":
        if vals[1] == 0:
            raise DomainError(f"zero divisor in {to_text(node)}", node)
        return vals[0] / vals[1]
    if op == "pow":
        if vals[0] == 0 and node.data < 0:
            raise DomainError(f"zero to a negative power in {to_text(node)}", node)
        return vals[0] ** node.data
    if op == "sqrt":
        if vals[0] < 0:
            raise DomainError(f"negative radicand in {to_text(node)}", node)
        return math.sqrt(vals[0])
    return getattr(math, op)(vals[0])


def evaluate(e: Expr, point: Sequence[float]) -> float:
    """Binary64 value of ``e`` at ``point`` (coordinates x1, x2, ...)."""
    p = [float(v) for v in _check_point(point)]
    if e.max_var > len(p):
        raise ValueError(f"point has {len(p)} coordinates, expression needs {e.max_var}")
    return float(_walk(e, lambda nd: float(nd.data) if nd.op == "const" else p[nd.data - 1], _float_op))


def _exact_op(node: Expr, vals):
    op = node.op
    if op in ("add", "sub", "mul", "neg", "pow", "div"):
        return _float_op(node, vals)
    if op == "sqrt":
        if vals[0] < 0:
            raise DomainError(f"negative radicand in {to_text(node)}", node)
        r = _rational_sqrt(vals[0])
        if r is None:
            raise NotExactError(f"sqrt({vals[0]}) is irrational")
        return r
    if vals[0] == 0:
        return Fraction(1) if op in ("cos", "exp") else Fraction(0)
    raise NotExactError(f"{op}({vals[0]}) is not rational")


def evaluate_exact(e: Expr, point: Sequence) -> Fraction:
    """Exact rational value; raises NotExactError when it is irrational."""
    p = [_frac(v) for v in point]
    if e.max_var > len(p):
        raise ValueError(f"point has {len(p)} coordinates, expression needs {e.max_var}")
    return _walk(e, lambda nd: nd.data if nd.op == "const" else p[nd.data - 1], _exact_op)


# dual numbers ----------------------------------------------------------------


class Dual:
    """Forward-mode pair (value, tangent). Tangent may be a vector (gradient
    seeds) or, with array values, a per-sample directional derivative."""

    __slots__ = ("val", "der")

    def __init__(self, val, der):
        self.val = val
        self.der = der

    def __add__(self, o):
        return Dual(self.val + o.val, self.der + o.der)

    def __sub__(self, o):
        return Dual(self.val - o.val, self.der - o.der)

    def __mul__(self, o):
        return Dual(self.val * o.val, self.der * o.val + self.val * o.der)

    def __truediv__(self, o):
        q = self.val / o.val
        return Dual(q, (self.der - q * o.der) / o.val)

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __pow__(self, k: int):
        return Dual(self.val**k, k * self.val ** (k - 1) * self.der)


def _dual_op(node: Expr, vals, xp):
    op = node.op
    a = vals[0]
    if op == "add":
        return a + vals[1]
    if op == "sub":
        return a - vals[1]
    if op == "mul":
        return a * vals[1]
    if op == "neg":
        return -a
    if op == "div":
        if xp.any(vals[1].val == 0):
            raise DomainError(f"zero divisor in {to_text(node)}", node)
        return a / vals[1]
    if op == "pow":
        if node.data < 0 and xp.any(a.val == 0):
            raise DomainError(f"zero to a negative power in {to_text(node)}", node)
        return a ** node.data
    if op == "sqrt":
        if xp.any(a.val <= 0):
            raise DomainError(f"sqrt not differentiable/defined in {to_text(node)}", node)
        r = xp.sqrt(a.val)
        return Dual(r, a.der / (2 * r))
    if op == "sin":
        return Dual(xp.sin(a.val), xp.cos(a.val) * a.der)
    if op == "cos":
        return Dual(xp.cos(a.val), -xp.sin(a.val) * a.der)
    r = xp.exp(a.val)
    return Dual(r, r * a.der)


def grad(e: Expr, point: Sequence[float]) -> np.ndarray:
    """Gradient at ``point`` by forward-mode dual evaluation."""
    p = [float(v) for v in _check_point(point)]
    n = len(p)
    if e.max_var > n:
        raise ValueError(f"point has {n} coordinates, expression needs {e.max_var}")
    eye = np.eye(n)

    def leaf(nd):
        if nd.op == "const":
            return Dual(float(nd.data), np.zeros(n))
        return Dual(p[nd.data - 1], eye[nd.data - 1].copy())

    out = _walk(e, leaf, lambda nd, vals: _dual_op(nd, vals, np))
    return np.asarray(out.der, dtype=float)


def jvp(e: Expr, points: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and directional derivatives of ``e`` at many points.

    ``points`` and ``directions`` have shape (m, n).
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    m = P.shape[0]

    def leaf(nd):
        if nd.op == "const":
            return Dual(np.full(m, float(nd.data)), np.zeros(m))
        return Dual(P[:, nd.data - 1], D[:, nd.data - 1])

    with np.errstate(all="ignore"):
        out = _walk(e, leaf, lambda nd, vals: _dual_op(nd, vals, np))
    return np.broadcast_to(out.val, (m,)).copy(), np.broadcast_to(out.der, (m,)).copy()


# code generation -------------------------------------------------------------


def _np_sqrt(u, where):
    if np.any(u < 0):
        raise DomainError(f"negative radicand in {where}")
    return np.sqrt(u)


def _np_div(a, b, where):
    if np.any(b == 0):
        raise DomainError(f"zero divisor in {where}")
    return a / b


def _m_sqrt(u, where):
    if u < 0:
        raise DomainError(f"negative radicand in {where}")
    return math.sqrt(u)


def _m_div(a, b, where):
    if b == 0:
        raise DomainError(f"zero divisor in {where}")
    return a / b


_BACKENDS = {
    "numpy": {"_sqrt": _np_sqrt, "_div": _np_div, "sin": np.sin, "cos": np.cos, "exp": np.exp},
    "math": {"_sqrt": _m_sqrt, "_div": _m_div, "sin": math.sin, "cos": math.cos, "exp": math.exp},
}


class CompiledExprs:
    """Straight-line Python code evaluating several expressions with shared
    subexpressions computed once.

    Call with n coordinate arrays (broadcastable) or n floats; returns a
    tuple of results, one per expression.
    """

    def __init__(self, exprs: Sequence[Expr], n: int, backend: str = "numpy"):
        self.exprs = tuple(exprs)
        self.n = n
        self.backend = backend
        for e in self.exprs:
            if e.max_var > n:
                raise ValueError(f"expression uses x{e.max_var} beyond dimension {n}")
        names: dict[Expr, str] = {}
        wheres: list[str] = []
        lines = []
        for node in postorder(self.exprs):
            op = node.op
            if op == "const":
                names[node] = repr(float(node.data))
                continue
            if op == "var":
                names[node] = f"x{node.data}"
                continue
            a = [names[c] for c in node.args]
            tmp = f"t{len(lines)}"
            if op in ("div", "sqrt") or (op == "pow" and node.data < 0):
                wheres.append(to_text(node) if node.size < 60 else f"{op} node #{len(wheres)}")
                w = f"_W[{len(wheres) - 1}]"
            if op == "add":
                rhs = f"{a[0]} + {a[1]}"
            elif op == "sub":
                rhs = f"{a[0]} - {a[1]}"
            elif op == "mul":
                rhs = f"{a[0]} * {a[1]}"
            elif op == "neg":
                rhs = f"-({a[0]})"
            elif op == "div":
                rhs = f"_div({a[0]}, {a[1]}, {w})"
            elif op == "pow":
                k = node.data
                rhs = f"{a[0]} ** {k}" if k > 0 else f"_div(1.0, {a[0]} ** {-k}, {w})"
            elif op == "sqrt":
                rhs = f"_sqrt({a[0]}, {w})"
            else:
                rhs = f"{op}({a[0]})"
            lines.append(f"    {tmp} = {rhs}")
            names[node] = tmp
        args = ", ".join(f"x{k}" for k in range(1, n + 1)) or "_unused=None"
        outs = ", ".join(names[e] for e in self.exprs)
        src = f"def _f({args}):\n" + "\n".join(lines + [f"    return ({outs},)"]) + "\n"
        env = dict(_BACKENDS[backend])
        env["_W"] = wheres
        self.source = src
        exec(compile(src, "<fiberscope-compiled>", "exec"), env)
        self._fn = env["_f"]

    def __call__(self, *coords):
        return self._fn(*coords)

    def at_points(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at rows of an (m, n) array; returns (m, len(exprs))."""
        P = np.atleast_2d(np.asarray(points, dtype=float))
        with np.errstate(over="ignore", invalid="ignore"):
            outs = self._fn(*[P[:, k] for k in range(self.n)])
        m = P.shape[0]
        return np.stack([np.broadcast_to(np.asarray(o, dtype=float), (m,)) for o in outs], axis=1)


def compile_exprs(exprs: Sequence[Expr], n: int, backend: str = "numpy") -> CompiledExprs:
    return CompiledExprs(exprs, n, backend)


# ---------------------------------------------------------------------------
# restriction to lines


def _poly_op(node: Expr, vals):
    op = node.op
    if op == "add":
        return vals[0] + vals[1]
    if op == "sub":
        return vals[0] - vals[1]
    if op == "mul":
        return vals[0] * vals[1]
    if op == "neg":
        return -vals[0]
    if op == "pow":
        k = node.data
        if k >= 0:
            return vals[0] ** k
        base = vals[0]
        if base.degree > 0:
            raise NotPolynomialError(f"negative power of a non-constant in {to_text(node)}")
        if base.is_zero:
            raise DomainError(f"zero to a negative power in {to_text(node)}", node)
        return UniPoly.constant(base.coeffs[0] ** k)
    if op == "div":
        num, den = vals
        if den.is_zero:
            raise DomainError(f"zero divisor in {to_text(node)}", node)
        q, r = divmod(num, den)
        if not r.is_zero:
            raise NotPolynomialError(f"non-polynomial quotient in {to_text(node)}")
        return q
    arg = vals[0]
    if arg.degree > 0:
        raise NotPolynomialError(f"{op} of a non-constant survives in {to_text(node)}")
    c = arg.coeffs[0] if arg.coeffs else Fraction(0)
    try:
        return UniPoly.constant(_exact_op(node, [c]))
    except NotExactError as exc:
        raise NotPolynomialError(str(exc)) from exc


def restrict_to_line(e: Expr, base: Sequence, direction: Sequence) -> UniPoly:
    """Exact polynomial t -> e(base + t * direction).

    ``base`` and ``direction`` must be exactly representable (ints, Fractions,
    decimal strings or floats, which are read as their decimal repr).
    """
    b = [_frac(v) for v in base]
    d = [_frac(v) for v in direction]
    if len(b) != len(d):
        raise ValueError("base and direction differ in length")
    if e.max_var > len(b):
        raise ValueError(f"line lives in R^{len(b)} but the expression uses x{e.max_var}")
    lines = [UniPoly((bk, dk)) for bk, dk in zip(b, d)]
    return _walk(
        e,
        lambda nd: UniPoly.constant(nd.data) if nd.op == "const" else lines[nd.data - 1],
        _poly_op,
    )
