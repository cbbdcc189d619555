"""Closed-form scalar expressions: parsing, printing, exact differentiation
and numeric evaluation.

Expressions are immutable trees over the variables ``x``, ``t`` and ``tau``
plus late-bound named parameters. Node constructors used internally
(:func:`add`, :func:`mul`, ...) fold constants and apply the 0/1 identities;
the parser builds raw nodes so that a parsed tree mirrors its source text.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

VARIABLES = ("x", "t", "tau")
FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt")

Number = Union[int, float, Fraction]


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError, ValueError):
    """Malformed expression text. ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.message = message
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")

    def pointer(self) -> str:
        return f"{self.text}\n{' ' * self.position}^"


class UnknownIdentifier(ExprSyntaxError):
    pass


class NonIntegerExponent(ExprSyntaxError):
    pass


class DomainError(ExprError, ArithmeticError):
    pass


class UnboundSymbol(ExprError, LookupError):
    pass


# ---------------------------------------------------------------------------
# nodes


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ()

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

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("only integer powers are supported")
        return power(self, n)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, eq=True, repr=True)
class Constant(Expr):
    value: Number


@dataclass(frozen=True)
class Variable(Expr):
    name: str


@dataclass(frozen=True)
class Parameter(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class IntPow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr


ZERO = Constant(Fraction(0))
ONE = Constant(Fraction(1))


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(value, (int, Fraction)):
        return Constant(Fraction(value))
    if isinstance(value, float):
        return Constant(value)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def var(name: str) -> Variable:
    if name not in VARIABLES:
        raise ValueError(f"unknown variable {name!r}")
    return Variable(name)


X = Variable("x")
T = Variable("t")
TAU = Variable("tau")


def _is_const(e: Expr, value=None) -> bool:
    return isinstance(e, Constant) and (value is None or e.value == value)


def _const(value) -> Constant:
    if isinstance(value, int):
        value = Fraction(value)
    return Constant(value)


def neg(a: Expr) -> Expr:
    if isinstance(a, Constant):
        return _const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Constant) and isinstance(b, Constant):
        return _const(a.value + b.value)
    if _is_const(a, 0):
        return b
    if _is_const(b, 0):
        return a
    if isinstance(b, Neg):
        return Sub(a, b.arg)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Constant) and isinstance(b, Constant):
        return _const(a.value - b.value)
    if _is_const(b, 0):
        return a
    if _is_const(a, 0):
        return neg(b)
    if isinstance(b, Neg):
        return add(a, b.arg)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Constant) and isinstance(b, Constant):
        return _const(a.value * b.value)
    if _is_const(a, 0) or _is_const(b, 0):
        return ZERO
    if _is_const(a, 1):
        return b
    if _is_const(b, 1):
        return a
    if _is_const(a, -1):
        return neg(b)
    if _is_const(b, -1):
        return neg(a)
    if isinstance(a, Neg) and isinstance(b, Neg):
        return mul(a.arg, b.arg)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Constant) and isinstance(b, Constant) and b.value != 0:
        if isinstance(a.value, Fraction) and isinstance(b.value, Fraction):
            return Constant(a.value / b.value)
        return Constant(float(a.value) / float(b.value))
    if _is_const(b, 1):
        return a
    if _is_const(a, 0):
        return ZERO
    return Div(a, b)


def power(a: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Constant):
        if a.value == 0 and n < 0:
            return IntPow(a, n)
        if isinstance(a.value, Fraction):
            return Constant(a.value ** n)
        return Constant(float(a.value) ** n)
    return IntPow(a, n)


_MATH = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
}


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if isinstance(a, Constant):
        v = float(a.value)
        if name == "log" and v <= 0 or name == "sqrt" and v < 0:
            return Func(name, a)
        if v == 0 and name in ("sin", "tan", "sqrt"):
            return ZERO
        if v == 0 and name in ("cos", "exp"):
            return ONE
        if v == 1 and name in ("log", "sqrt"):
            return ZERO if name == "log" else ONE
        return Constant(_MATH[name](v))
    return Func(name, a)


def sin(a) -> Expr:
    return func("sin", as_expr(a))


def cos(a) -> Expr:
    return func("cos", as_expr(a))


def tan(a) -> Expr:
    return func("tan", as_expr(a))


def exp(a) -> Expr:
    return func("exp", as_expr(a))


def log(a) -> Expr:
    return func("log", as_expr(a))


def sqrt(a) -> Expr:
    return func("sqrt", as_expr(a))


def _children(e: Expr) -> tuple:
    if isinstance(e, (Add, Sub, Mul, Div)):
        return (e.left, e.right)
    if isinstance(e, (Neg, Func)):
        return (e.arg,)
    if isinstance(e, IntPow):
        return (e.base,)
    return ()


def _postorder(roots: Iterable[Expr]) -> list:
    """Unique nodes (by identity) in dependency order."""
    seen = set()
    order = []
    for root in roots:
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            for child in _children(node):
                if id(child) not in seen:
                    stack.append((child, False))
    return order


def free_symbols(e: Expr) -> set:
    """Names of all variables and parameters referenced by ``e``."""
    return {n.name for n in _postorder([e]) if isinstance(n, (Variable, Parameter))}


def depends_on(e: Expr, name: str) -> bool:
    return name in free_symbols(e)


def count_nodes(e: Expr) -> int:
    return len(_postorder([e]))


# ---------------------------------------------------------------------------
# differentiation


def diff(e: Expr, v: str) -> Expr:
    """Exact derivative of ``e`` with respect to the variable named ``v``."""
    if isinstance(v, Variable):
        v = v.name
    if v not in VARIABLES:
        raise ValueError(f"can only differentiate with respect to {VARIABLES}, got {v!r}")
    memo: dict = {}
    for node in _postorder([e]):
        memo[id(node)] = _diff_node(node, v, memo)
    return memo[id(e)]


def _diff_node(e: Expr, v: str, memo: dict) -> Expr:
    d = lambda n: memo[id(n)]  # noqa: E731
    if isinstance(e, (Constant, Parameter)):
        return ZERO
    if isinstance(e, Variable):
        return ONE if e.name == v else ZERO
    if isinstance(e, Neg):
        return neg(d(e.arg))
    if isinstance(e, Add):
        return add(d(e.left), d(e.right))
    if isinstance(e, Sub):
        return sub(d(e.left), d(e.right))
    if isinstance(e, Mul):
        return add(mul(d(e.left), e.right), mul(e.left, d(e.right)))
    if isinstance(e, Div):
        da, db = d(e.left), d(e.right)
        if _is_const(db, 0):
            return div(da, e.right)
        return div(sub(mul(da, e.right), mul(e.left, db)), power(e.right, 2))
    if isinstance(e, IntPow):
        n = e.exponent
        return mul(mul(_const(n), power(e.base, n - 1)), d(e.base))
    if isinstance(e, Func):
        u, du = e.arg, d(e.arg)
        if _is_const(du, 0):
            return ZERO
        if e.name == "sin":
            return mul(func("cos", u), du)
        if e.name == "cos":
            return neg(mul(func("sin", u), du))
        if e.name == "tan":
            return div(du, power(func("cos", u), 2))
        if e.name == "exp":
            return mul(e, du)
        if e.name == "log":
            return div(du, u)
        if e.name == "sqrt":
            return div(du, mul(_const(2), e))
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# evaluation


def _lookup(bindings: Mapping, name: str):
    try:
        return bindings[name]
    except KeyError:
        raise UnboundSymbol(f"symbol {name!r} is not bound") from None


def evaluate(e: Expr, bindings: Mapping[str, object]):
    """Evaluate ``e`` with strict domain checking.

    Binding values may be floats or numpy arrays (broadcast together). Raises
    :class:`DomainError` on division by zero, log of a non-positive number,
    sqrt of a negative number or any non-finite intermediate.
    """
    memo: dict = {}
    scalar = all(np.ndim(val) == 0 for val in bindings.values())
    with np.errstate(all="ignore"):
        for node in _postorder([e]):
            memo[id(node)] = _eval_node(node, bindings, memo)
    out = memo[id(e)]
    if scalar:
        return float(out)
    shape = np.broadcast(*[np.asarray(v) for v in bindings.values()]).shape
    return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()


def _eval_node(e: Expr, b: Mapping, memo: dict):
    g = lambda n: memo[id(n)]  # noqa: E731
    if isinstance(e, Constant):
        return float(e.value)
    if isinstance(e, (Variable, Parameter)):
        return np.asarray(_lookup(b, e.name), dtype=float)
    if isinstance(e, Neg):
        return -g(e.arg)
    if isinstance(e, Add):
        out = g(e.left) + g(e.right)
    elif isinstance(e, Sub):
        out = g(e.left) - g(e.right)
    elif isinstance(e, Mul):
        out = g(e.left) * g(e.right)
    elif isinstance(e, Div):
        den = g(e.right)
        if np.any(den == 0):
            raise DomainError(f"division by zero in {to_string(e)}")
        out = g(e.left) / den
    elif isinstance(e, IntPow):
        base = g(e.base)
        if e.exponent < 0 and np.any(base == 0):
            raise DomainError(f"division by zero in {to_string(e)}")
        out = np.power(base, float(e.exponent)) if e.exponent < 0 else base ** e.exponent
    elif isinstance(e, Func):
        a = g(e.arg)
        if e.name == "log" and np.any(a <= 0):
            raise DomainError(f"log of non-positive value in {to_string(e)}")
        if e.name == "sqrt" and np.any(a < 0):
            raise DomainError(f"sqrt of negative value in {to_string(e)}")
        if e.name == "tan" and np.any(np.cos(a) == 0):
            raise DomainError(f"tan pole in {to_string(e)}")
        out = getattr(np, e.name)(a)
    else:
        raise TypeError(f"not an expression node: {e!r}")
    if not np.all(np.isfinite(out)):
        raise DomainError(f"non-finite value in {to_string(e)}")
    return out


_NP_NAMES = {"sin": "np.sin", "cos": "np.cos", "tan": "np.tan", "exp": "np.exp",
             "log": "np.log", "sqrt": "np.sqrt"}


def lambdify(exprs: Union[Expr, Sequence[Expr]], args: Sequence[str],
             constants: Mapping[str, float] | None = None) -> Callable:
    """Compile one or several expressions into a fast numpy function.

    Shared subtrees are computed once. No domain checking: invalid points give
    nan/inf. Symbols not in ``args`` must be supplied through ``constants``.
    Outputs are broadcast to the common shape of the arguments.
    """
    single = isinstance(exprs, Expr)
    roots = [exprs] if single else list(exprs)
    constants = dict(constants or {})
    args = list(args)
    for root in roots:
        missing = free_symbols(root) - set(args) - set(constants)
        if missing:
            raise UnboundSymbol(f"unbound symbols {sorted(missing)}")
    argmap = {a: f"_a{i}" for i, a in enumerate(args)}
    names: dict = {}
    lines = []
    for k, node in enumerate(_postorder(roots)):
        ref = lambda n: names[id(n)]  # noqa: E731
        if isinstance(node, Constant):
            rhs = repr(float(node.value))
        elif isinstance(node, (Variable, Parameter)):
            rhs = argmap[node.name] if node.name in argmap else repr(float(constants[node.name]))
        elif isinstance(node, Neg):
            rhs = f"-{ref(node.arg)}"
        elif isinstance(node, (Add, Sub, Mul, Div)):
            op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(node)]
            rhs = f"{ref(node.left)} {op} {ref(node.right)}"
        elif isinstance(node, IntPow):
            if node.exponent < 0:
                rhs = f"1.0 / {ref(node.base)} ** {-node.exponent}"
            else:
                rhs = f"{ref(node.base)} ** {node.exponent}"
        else:
            rhs = f"{_NP_NAMES[node.name]}({ref(node.arg)})"
        names[id(node)] = f"_v{k}"
        lines.append(f"    _v{k} = {rhs}")
    outs = ", ".join(names[id(r)] for r in roots)
    src = (f"def _f({', '.join(argmap.values())}):\n"
           + "\n".join(lines)
           + f"\n    return ({outs},)\n")
    namespace = {"np": np}
    exec(compile(src, "<lambdify>", "exec"), namespace)
    fn = namespace["_f"]

    def compiled(*vals):
        vals = [np.asarray(v, dtype=float) for v in vals]
        shape = np.broadcast(*vals).shape if vals else ()
        with np.errstate(all="ignore"):
            res = fn(*vals)
        res = tuple(np.broadcast_to(np.asarray(r, dtype=float), shape).copy()
                    if np.shape(r) != shape else np.asarray(r, dtype=float) for r in res)
        if not shape:
            res = tuple(float(r) for r in res)
        return res[0] if single else res

    compiled.__doc__ = "compiled: " + "; ".join(to_string(r) for r in roots)
    return compiled


# ---------------------------------------------------------------------------
# printing

# precedence: additive 1, multiplicative 2, unary minus 3, power 4, atom 5
_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, IntPow: 4}


def _fmt_const(value) -> tuple:
    if isinstance(value, Fraction):
        if value.denominator == 1:
            s = str(value.numerator)
            return (s, 3 if value < 0 else 5)
        s = f"{value.numerator}/{value.denominator}"
        return (s, 2)
    s = repr(float(value))
    if s in ("inf", "-inf", "nan"):
        raise ValueError("cannot print non-finite constant")
    return (s, 3 if s.startswith("-") else 5)


def _prec(e: Expr) -> int:
    if isinstance(e, Constant):
        return _fmt_const(e.value)[1]
    return _PREC.get(type(e), 5)


def to_string(e: Expr) -> str:
    """Print with minimal parentheses; the result parses back to an equal-valued tree."""
    memo: dict = {}
    for node in _postorder([e]):
        memo[id(node)] = _print_node(node, memo)
    return memo[id(e)]


def _print_node(e: Expr, memo: dict) -> str:
    def wrap(child, min_prec):
        s = memo[id(child)]
        return f"({s})" if _prec(child) < min_prec else s

    if isinstance(e, Constant):
        return _fmt_const(e.value)[0]
    if isinstance(e, (Variable, Parameter)):
        return e.name
    if isinstance(e, Neg):
        return "-" + wrap(e.arg, 4)
    if isinstance(e, (Add, Sub)):
        op = " + " if isinstance(e, Add) else " - "
        return wrap(e.left, 1) + op + wrap(e.right, 2)
    if isinstance(e, (Mul, Div)):
        op = "*" if isinstance(e, Mul) else "/"
        return wrap(e.left, 2) + op + wrap(e.right, 3)
    if isinstance(e, IntPow):
        return wrap(e.base, 5) + "^" + str(e.exponent)
    if isinstance(e, Func):
        return f"{e.name}({memo[id(e.arg)]})"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    # binding powers for infix operators: (left bp, right bp)
    INFIX = {"+": (1, 2), "-": (1, 2), "*": (3, 4), "/": (3, 4), "^": (8, 7)}
    UNARY_BP = 5

    def __init__(self, text: str, params: Sequence[str]):
        self.text = text
        self.params = set(params)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok, cls=ExprSyntaxError):
        return cls(message, tok[2], self.text)

    def expect(self, value):
        tok = self.advance()
        if tok[1] != value or tok[0] == "num":
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {value!r}, found {found}", tok)
        return tok

    def parse(self) -> Expr:
        e = self.expr(0)
        tok = self.peek()
        if tok[0] != "end":
            raise self.error(f"unexpected token {tok[1]!r}", tok)
        return e

    def expr(self, min_bp: int) -> Expr:
        lhs = self.prefix()
        while True:
            tok = self.peek()
            if tok[0] != "op" or tok[1] not in self.INFIX:
                return lhs
            lbp, rbp = self.INFIX[tok[1]]
            if lbp < min_bp:
                return lhs
            self.advance()
            if tok[1] == "^":
                lhs = IntPow(lhs, self.exponent(rbp))
                continue
            rhs = self.expr(rbp)
            lhs = {"+": Add, "-": Sub, "*": Mul, "/": Div}[tok[1]](lhs, rhs)

    def exponent(self, rbp: int) -> int:
        start = self.peek()
        e = self.expr(rbp)
        value = _integer_literal(e)
        if value is None:
            raise self.error("exponent must be an integer literal", start, NonIntegerExponent)
        return value

    def prefix(self) -> Expr:
        tok = self.advance()
        kind, value, pos = tok
        if kind == "num":
            if re.fullmatch(r"\d+", value):
                return Constant(Fraction(int(value)))
            return Constant(float(value))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if value not in FUNCTIONS:
                    raise self.error(f"unknown function {value!r}", tok, UnknownIdentifier)
                self.advance()
                arg = self.expr(0)
                self.expect(")")
                return Func(value, arg)
            if value in VARIABLES:
                return Variable(value)
            if value in self.params:
                return Parameter(value)
            raise self.error(f"unknown identifier {value!r}", tok, UnknownIdentifier)
        if kind == "op" and value == "-":
            return Neg(self.expr(self.UNARY_BP))
        if kind == "op" and value == "(":
            inner = self.expr(0)
            self.expect(")")
            return inner
        if kind == "end":
            raise self.error("unexpected end of input", tok)
        raise self.error(f"unexpected token {value!r}", tok)


def _integer_literal(e: Expr):
    if isinstance(e, Constant) and isinstance(e.value, Fraction) and e.value.denominator == 1:
        return int(e.value)
    if isinstance(e, Neg):
        inner = _integer_literal(e.arg)
        return None if inner is None else -inner
    if isinstance(e, IntPow):
        base = _integer_literal(e.base)
        if base is None or e.exponent < 0:
            return None
        return base ** e.exponent
    return None


def parse(text: str, params: Sequence[str] = ()) -> Expr:
    """Parse infix expression text.

    ``^`` takes an integer literal exponent and is right-associative; it binds
    tighter than unary minus, which binds tighter than ``*``/``/``, then
    ``+``/``-``. Identifiers must be one of ``x``, ``t``, ``tau``, a name in
    ``params``, or a function name followed by ``(``.
    """
    bad = set(params) & (set(VARIABLES) | set(FUNCTIONS))
    if bad:
        raise ValueError(f"parameter names clash with reserved names: {sorted(bad)}")
    return _Parser(text, params).parse()
