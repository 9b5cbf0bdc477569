"""Small expression language for vector-field formulas.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := number | name | func '(' expr (',' expr)* ')' | '(' expr ')'

Identifiers are ``x``, ``y``, ``t``, ``eps`` and the constants ``pi``, ``e``.
Expressions compile to Python closures, either over ``math`` (float64) or over
``gmpy2`` (arbitrary precision).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import gmpy2

from .errors import ExpressionDomainError, ExpressionSyntaxError

VARIABLES = ("x", "y", "t", "eps")
CONSTANTS = ("pi", "e")
FUNCTIONS = {
    "sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1,
    "abs": 1, "sign": 1, "tanh": 1, "pow": 2,
}


# ---------------------------------------------------------------- tree nodes

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Node = Union[Num, Var, Const, Neg, BinOp, Call]


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            line, col = _position(text, pos)
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def error(self, msg: str, offset: int | None = None):
        if offset is None:
            offset = self.tokens[self.i][2]
        line, col = _position(self.text, offset)
        return ExpressionSyntaxError(msg, line, col)

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, val, _ = self.peek()
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise self.error(f"expected {value!r}, found {found}")
        self.i += 1

    def parse(self) -> Node:
        node = self.expr()
        kind, val, _ = self.peek()
        if kind != "end":
            raise self.error(f"unexpected token {val!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            arg = self.unary()
            if isinstance(arg, Num):
                return Num(-arg.value)
            return Neg(arg)
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Node:
        kind, val, offset = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val not in FUNCTIONS:
                    raise self.error(f"unknown function {val!r}", offset)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[val]:
                    raise self.error(
                        f"{val} takes {FUNCTIONS[val]} argument(s), got {len(args)}", offset)
                return Call(val, tuple(args))
            if val in VARIABLES:
                return Var(val)
            if val in CONSTANTS:
                return Const(val)
            raise self.error(f"unknown identifier {val!r}", offset)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise self.error(f"unexpected {found}", offset)


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Num) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return 3
    return 5


def _fmt(node: Node, min_prec: int) -> str:
    if isinstance(node, Num):
        v = node.value
        if not math.isfinite(v):
            raise ValueError(f"non-finite literal {v}")
        s = repr(v)
        if math.copysign(1.0, v) < 0:
            s = "-" + repr(-v)
    elif isinstance(node, (Var, Const)):
        s = node.name
    elif isinstance(node, Neg):
        s = "-" + _fmt(node.arg, 3)
    elif isinstance(node, Call):
        s = node.func + "(" + ", ".join(_fmt(a, 0) for a in node.args) + ")"
    else:
        p = _PREC[node.op]
        if node.op == "^":
            s = f"{_fmt(node.left, 5)}^{_fmt(node.right, 3)}"
        else:
            s = f"{_fmt(node.left, p)} {node.op} {_fmt(node.right, p + 1)}"
    if _prec(node) < min_prec:
        s = "(" + s + ")"
    return s


# ---------------------------------------------------------------- code generation

def _lit(v: float) -> str:
    return "_k_" + repr(v).replace("-", "m").replace(".", "p").replace("+", "")


def _py(node: Node) -> str:
    if isinstance(node, Num):
        return _lit(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Const):
        return f"_{node.name}"
    if isinstance(node, Neg):
        return f"(-{_py(node.arg)})"
    if isinstance(node, Call):
        return f"_{node.func}(" + ", ".join(_py(a) for a in node.args) + ")"
    if node.op == "^":
        n = _small_int(node.right)
        if n is not None:
            return f"({_py(node.left)} ** {n})"
        return f"_pow({_py(node.left)}, {_py(node.right)})"
    return f"({_py(node.left)} {node.op} {_py(node.right)})"


def _small_int(node: Node) -> int | None:
    """Positive integer exponent that can be emitted as a literal ``**``."""
    if isinstance(node, Num) and node.value.is_integer() and 1 <= node.value <= 64:
        return int(node.value)
    return None


def _literals(node: Node, out: dict) -> dict:
    if isinstance(node, Num):
        out[repr(node.value)] = node.value
    elif isinstance(node, Neg):
        _literals(node.arg, out)
    elif isinstance(node, BinOp):
        _literals(node.left, out)
        _literals(node.right, out)
    elif isinstance(node, Call):
        for a in node.args:
            _literals(a, out)
    return out


def _float_sign(v):
    return float((v > 0) - (v < 0))


def _float_pow(a, b):
    return math.pow(a, b)


def _float_log(v):
    if v <= 0:
        raise ValueError("log of non-positive argument")
    return math.log(v)


def _float_namespace() -> dict:
    return {
        "_sin": math.sin, "_cos": math.cos, "_exp": math.exp, "_log": _float_log,
        "_sqrt": math.sqrt, "_abs": abs, "_sign": _float_sign, "_tanh": math.tanh,
        "_pow": _float_pow, "_pi": math.pi, "_e": math.e,
    }


def _mp_sign(v):
    return gmpy2.mpfr((v > 0) - (v < 0))


def _mp_log(v):
    if v <= 0:
        raise ValueError("log of non-positive argument")
    return gmpy2.log(v)


def _mp_sqrt(v):
    if v < 0:
        raise ValueError("sqrt of negative argument")
    return gmpy2.sqrt(v)


def _mp_div_guard(a, b):
    if b == 0:
        raise ZeroDivisionError("division by zero")
    return a / b


def _mp_pow(a, b):
    if a < 0 and not gmpy2.is_integer(b):
        raise ValueError("negative base with non-integer exponent")
    if a == 0 and b < 0:
        raise ZeroDivisionError("zero to a negative power")
    if gmpy2.is_integer(b) and abs(b) <= 64:
        return a ** int(b)
    return a ** b


def _memoized(fn: Callable, size: int = 1 << 16) -> Callable:
    cache: dict = {}

    def call(v):
        r = cache.get(v)
        if r is None:
            if len(cache) >= size:
                cache.clear()
            r = cache[v] = fn(v)
        return r
    return call


_MEMO_FUNCS = ("sin", "cos", "exp", "log", "sqrt", "tanh")


def _mp_namespace() -> dict:
    ns = {
        "_sin": gmpy2.sin, "_cos": gmpy2.cos, "_exp": gmpy2.exp, "_log": _mp_log,
        "_sqrt": _mp_sqrt, "_abs": abs, "_sign": _mp_sign, "_tanh": gmpy2.tanh,
        "_pow": _mp_pow, "_pi": gmpy2.const_pi(), "_e": gmpy2.exp(1),
    }
    # time-only calls repeat across runs on a shared grid, so cache them by argument
    for name in _MEMO_FUNCS:
        ns[f"_memo_{name}"] = _memoized(ns[f"_{name}"])
    return ns


def _py_mp(node: Node) -> str:
    # gmpy2 returns inf on division by zero instead of raising
    if isinstance(node, BinOp) and node.op == "/":
        return f"_div({_py_mp(node.left)}, {_py_mp(node.right)})"
    if isinstance(node, Num):
        return _lit(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Const):
        return f"_{node.name}"
    if isinstance(node, Neg):
        return f"(-{_py_mp(node.arg)})"
    if isinstance(node, Call):
        name = node.func
        if name in _MEMO_FUNCS and not any(_depends(a, v) for a in node.args for v in "xy"):
            name = "memo_" + name
        return f"_{name}(" + ", ".join(_py_mp(a) for a in node.args) + ")"
    if node.op == "^":
        n = _small_int(node.right)
        if n is not None:
            return f"({_py_mp(node.left)} ** {n})"
        return f"_pow({_py_mp(node.left)}, {_py_mp(node.right)})"
    return f"({_py_mp(node.left)} {node.op} {_py_mp(node.right)})"


_ERRORS = (ZeroDivisionError, ValueError, OverflowError)


def _wrap(raw: Callable, text: str) -> Callable:
    def evaluate(x, y, t, eps):
        try:
            return raw(x, y, t, eps)
        except _ERRORS as exc:
            raise ExpressionDomainError(f"{text}: {exc}") from None
    return evaluate


# ---------------------------------------------------------------- public API

@dataclass(frozen=True)
class Expression:
    """Parsed formula in the variables x, y, t, eps."""

    tree: Node

    @classmethod
    def parse(cls, text: str) -> "Expression":
        return cls(_Parser(text).parse())

    def __str__(self) -> str:
        return _fmt(self.tree, 0)

    def __repr__(self) -> str:
        return f"Expression({str(self)!r})"

    @property
    def compiled(self) -> Callable:
        """Float64 evaluator ``f(x, y, t, eps)``."""
        return _compile_float(self.tree)

    def __call__(self, x, y, t=0.0, eps=0.0):
        return self.compiled(x, y, t, eps)

    def compiled_mp(self, precision: int) -> Callable:
        """gmpy2 evaluator; constants are rounded at ``precision`` bits."""
        return _compile_mp(self.tree, precision)

    def diff(self, var: str) -> "Expression":
        return Expression(_simplify(_diff(self.tree, var)))

    def depends_on(self, var: str) -> bool:
        return _depends(self.tree, var)

    def is_polynomial(self) -> bool:
        return _is_poly(self.tree)

    def is_zero(self) -> bool:
        return isinstance(self.tree, Num) and self.tree.value == 0.0


@lru_cache(maxsize=None)
def _compile_float(tree: Node) -> Callable:
    ns = _float_namespace()
    ns.update({_lit(v): v for v in _literals(tree, {}).values()})
    raw = eval(f"lambda x, y, t, eps: {_py(tree)}", ns)  # noqa: S307 - generated from a parsed tree
    return _wrap(raw, _fmt(tree, 0))


@lru_cache(maxsize=None)
def _compile_mp(tree: Node, precision: int) -> Callable:
    with gmpy2.context(gmpy2.get_context(), precision=precision):
        ns = _mp_namespace()
        ns.update({_lit(v): gmpy2.mpfr(v) for v in _literals(tree, {}).values()})
    ns["_div"] = _mp_div_guard
    raw = eval(f"lambda x, y, t, eps: {_py_mp(tree)}", ns)  # noqa: S307
    return _wrap(raw, _fmt(tree, 0))


# ---------------------------------------------------------------- symbolic derivative

ZERO = Num(0.0)
ONE = Num(1.0)


def _depends(node: Node, var: str) -> bool:
    if isinstance(node, Var):
        return node.name == var
    if isinstance(node, Neg):
        return _depends(node.arg, var)
    if isinstance(node, BinOp):
        return _depends(node.left, var) or _depends(node.right, var)
    if isinstance(node, Call):
        return any(_depends(a, var) for a in node.args)
    return False


def _is_poly(node: Node) -> bool:
    if isinstance(node, (Num, Var, Const)):
        return True
    if isinstance(node, Neg):
        return _is_poly(node.arg)
    if isinstance(node, BinOp):
        if node.op == "/":
            return _is_poly(node.left) and not any(
                _depends(node.right, v) for v in VARIABLES)
        if node.op == "^":
            r = node.right
            return (_is_poly(node.left) and isinstance(r, Num)
                    and r.value >= 0 and r.value == int(r.value))
        return _is_poly(node.left) and _is_poly(node.right)
    return False


def _diff(node: Node, var: str) -> Node:
    if not _depends(node, var):
        return ZERO
    if isinstance(node, Var):
        return ONE
    if isinstance(node, Neg):
        return Neg(_diff(node.arg, var))
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        da, db = _diff(a, var), _diff(b, var)
        if node.op in "+-":
            return BinOp(node.op, da, db)
        if node.op == "*":
            return BinOp("+", BinOp("*", da, b), BinOp("*", a, db))
        if node.op == "/":
            return BinOp("/", BinOp("-", BinOp("*", da, b), BinOp("*", a, db)),
                         BinOp("^", b, Num(2.0)))
        return _diff_pow(a, b, da, db, var)
    u = node.args[0]
    du = _diff(u, var)
    f = node.func
    if f == "pow":
        return _diff_pow(node.args[0], node.args[1], du, _diff(node.args[1], var), var)
    if f == "sin":
        outer = Call("cos", (u,))
    elif f == "cos":
        outer = Neg(Call("sin", (u,)))
    elif f == "exp":
        outer = node
    elif f == "log":
        outer = BinOp("/", ONE, u)
    elif f == "sqrt":
        outer = BinOp("/", ONE, BinOp("*", Num(2.0), node))
    elif f == "abs":
        outer = Call("sign", (u,))
    elif f == "sign":
        return ZERO
    else:  # tanh
        outer = BinOp("-", ONE, BinOp("^", node, Num(2.0)))
    return BinOp("*", outer, du)


def _diff_pow(a: Node, b: Node, da: Node, db: Node, var: str) -> Node:
    if not _depends(b, var):
        exponent = BinOp("-", b, ONE)
        if isinstance(b, Num):
            exponent = Num(b.value - 1.0)
        return BinOp("*", BinOp("*", b, BinOp("^", a, exponent)), da)
    # d(a^b) = a^b (b' log a + b a'/a)
    return BinOp("*", BinOp("^", a, b),
                 BinOp("+", BinOp("*", db, Call("log", (a,))),
                       BinOp("/", BinOp("*", b, da), a)))


def _simplify(node: Node) -> Node:
    if isinstance(node, Neg):
        arg = _simplify(node.arg)
        if isinstance(arg, Num):
            return Num(-arg.value)
        if isinstance(arg, Neg):
            return arg.arg
        return Neg(arg)
    if isinstance(node, Call):
        return Call(node.func, tuple(_simplify(a) for a in node.args))
    if not isinstance(node, BinOp):
        return node
    a, b = _simplify(node.left), _simplify(node.right)
    op = node.op
    if isinstance(a, Num) and isinstance(b, Num) and op in "+-*":
        return Num({"+": a.value + b.value, "-": a.value - b.value,
                    "*": a.value * b.value}[op])
    if op == "+":
        if a == ZERO:
            return b
        if b == ZERO:
            return a
    elif op == "-":
        if b == ZERO:
            return a
        if a == ZERO:
            return _simplify(Neg(b))
    elif op == "*":
        if a == ZERO or b == ZERO:
            return ZERO
        if a == ONE:
            return b
        if b == ONE:
            return a
    elif op == "/":
        if a == ZERO:
            return ZERO
        if b == ONE:
            return a
    elif op == "^":
        if b == ONE:
            return a
        if b == ZERO:
            return ONE
    return BinOp(op, a, b)


def parse(text: str) -> Expression:
    return Expression.parse(text)


def compile_vector(exprs, precision: int | None = None) -> Callable:
    """Compile several expressions into one closure returning a tuple.

    With ``precision`` set the closure works on gmpy2 numbers.
    """
    trees = tuple(e.tree for e in exprs)
    return _compile_vector(trees, precision)


@lru_cache(maxsize=None)
def _compile_vector(trees: tuple, precision: int | None) -> Callable:
    lits: dict = {}
    for tr in trees:
        _literals(tr, lits)
    if precision is None:
        ns = _float_namespace()
        ns.update({_lit(v): v for v in lits.values()})
        body = ", ".join(_py(tr) for tr in trees)
    else:
        with gmpy2.context(gmpy2.get_context(), precision=precision):
            ns = _mp_namespace()
            ns.update({_lit(v): gmpy2.mpfr(v) for v in lits.values()})
        ns["_div"] = _mp_div_guard
        body = ", ".join(_py_mp(tr) for tr in trees)
    raw = eval(f"lambda x, y, t, eps: ({body},)", ns)  # noqa: S307
    return _wrap(raw, "; ".join(_fmt(tr, 0) for tr in trees))
