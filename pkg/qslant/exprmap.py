"""Expression DSL for smooth maps and vector fields on R^D.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom (('^' | '**') ['-'] INT)*
    atom   := NUMBER | 'pi' | x<i> | param | func '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation accepts floats or ``numkernel.Dual`` numbers, so the same tree gives
values, Jacobians and Hessians.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from pydantic import ValidationError

from qslant import numkernel
from qslant.errors import (
    DimensionMismatchError,
    EvaluationError,
    ExprSyntaxError,
    SpecError,
    UnboundParameterError,
    UnknownIdentifierError,
)
from qslant.logger import logger
from qslant.schema import MapSpecDocument

PARAM_NAME = re.compile(r"[a-z_]+")
VARIABLE_NAME = re.compile(r"x([1-9][0-9]*)")


def _norm(*args):
    total = args[0] * args[0]
    for a in args[1:]:
        total = total + a * a
    return numkernel.sqrt(total)


# name -> (callable, arity); arity None means one or more arguments
FUNCTIONS: dict[str, tuple[Callable, int | None]] = {
    "sin": (numkernel.sin, 1),
    "cos": (numkernel.cos, 1),
    "sqrt": (numkernel.sqrt, 1),
    "abs": (numkernel.absolute, 1),
    "norm": (_norm, None),
}


# --- Expression tree ---
class Expr:
    precedence = 5

    def evaluate(self, xs: Sequence, params: Mapping[str, float]):
        raise NotImplementedError

    def children(self) -> tuple["Expr", ...]:
        return ()

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float
    name: str | None = field(default=None, compare=False)

    def evaluate(self, xs, params):
        return self.value


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based

    def evaluate(self, xs, params):
        return xs[self.index - 1]


@dataclass(frozen=True)
class Param(Expr):
    name: str

    def evaluate(self, xs, params):
        try:
            return params[self.name]
        except KeyError:
            raise UnboundParameterError(f"parameter '{self.name}' has no value")


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr
    precedence = 3

    def evaluate(self, xs, params):
        return -self.operand.evaluate(xs, params)

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def precedence(self):
        return 1 if self.op in "+-" else 2

    def evaluate(self, xs, params):
        a = self.left.evaluate(xs, params)
        b = self.right.evaluate(xs, params)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return a / b

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int
    precedence = 4

    def evaluate(self, xs, params):
        return self.base.evaluate(xs, params) ** self.exponent

    def children(self):
        return (self.base,)


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple[Expr, ...]

    def evaluate(self, xs, params):
        fn, _ = FUNCTIONS[self.func]
        return fn(*(a.evaluate(xs, params) for a in self.args))

    def children(self):
        return self.args


def walk(expr: Expr):
    yield expr
    for child in expr.children():
        yield from walk(child)


def substitute(expr: Expr, fn: Callable[[Var], Expr]) -> Expr:
    """Rebuild ``expr`` with every variable replaced by ``fn(var)``."""
    if isinstance(expr, Var):
        return fn(expr)
    if isinstance(expr, Neg):
        return Neg(substitute(expr.operand, fn))
    if isinstance(expr, BinOp):
        return BinOp(expr.op, substitute(expr.left, fn), substitute(expr.right, fn))
    if isinstance(expr, Pow):
        return Pow(substitute(expr.base, fn), expr.exponent)
    if isinstance(expr, Call):
        return Call(expr.func, tuple(substitute(a, fn) for a in expr.args))
    return expr


# --- Printing ---
def _const_text(c: Const) -> str:
    if c.name is not None:
        return c.name
    if c.value.is_integer() and abs(c.value) < 1e15:
        return str(int(c.value))
    return repr(c.value)


def to_text(expr: Expr) -> str:
    """Fully determined infix text; parse_expr(to_text(e)) == e."""
    if isinstance(expr, Const):
        return _const_text(expr)
    if isinstance(expr, Var):
        return f"x{expr.index}"
    if isinstance(expr, Param):
        return expr.name
    if isinstance(expr, Call):
        return f"{expr.func}({', '.join(to_text(a) for a in expr.args)})"
    if isinstance(expr, Neg):
        inner = to_text(expr.operand)
        if expr.operand.precedence < Neg.precedence:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(expr, Pow):
        base = to_text(expr.base)
        if expr.base.precedence <= Pow.precedence:
            base = f"({base})"
        return f"{base}^{expr.exponent}"
    left = to_text(expr.left)
    right = to_text(expr.right)
    if expr.left.precedence < expr.precedence:
        left = f"({left})"
    if expr.right.precedence <= expr.precedence:
        right = f"({right})"
    return f"{left} {expr.op} {right}"


# --- Tokenizer and parser ---
TOKEN_SPEC = [
    ("NUMBER", r"\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("POW", r"\*\*|\^"),
    ("OP", r"[-+*/(),]"),
    ("SKIP", r"\s+"),
    ("MISMATCH", r"."),
]
TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in TOKEN_SPEC))


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    for m in TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "SKIP":
            continue
        if kind == "MISMATCH":
            raise ExprSyntaxError(f"unexpected character '{m.group()}'", m.start())
        tokens.append(Token(kind, m.group(), m.start()))
    tokens.append(Token("EOF", "", len(text)))
    return tokens


class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, text: str) -> Token:
        token = self.peek()
        if token.text != text:
            found = token.text or "end of input"
            raise ExprSyntaxError(f"expected '{text}' but found '{found}'", token.position)
        return self.advance()

    def parse(self) -> Expr:
        expr = self.expr()
        token = self.peek()
        if token.kind != "EOF":
            raise ExprSyntaxError(f"unexpected '{token.text}'", token.position)
        return expr

    def expr(self) -> Expr:
        left = self.term()
        while self.peek().text in ("+", "-"):
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.peek().text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        while self.peek().kind == "POW":
            self.advance()
            sign = 1
            if self.peek().text == "-":
                self.advance()
                sign = -1
            token = self.advance()
            if token.kind != "NUMBER" or not token.text.isdigit():
                raise ExprSyntaxError("integer exponent expected", token.position)
            base = Pow(base, sign * int(token.text))
        return base

    def atom(self) -> Expr:
        token = self.advance()
        if token.kind == "NUMBER":
            return Const(float(token.text))
        if token.text == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if token.kind == "IDENT":
            return self.identifier(token)
        found = token.text or "end of input"
        raise ExprSyntaxError(f"unexpected '{found}'", token.position)

    def identifier(self, token: Token) -> Expr:
        name = token.text
        if self.peek().text == "(":
            if name not in FUNCTIONS:
                raise UnknownIdentifierError(name, token.position)
            self.advance()
            args = [self.expr()]
            while self.peek().text == ",":
                self.advance()
                args.append(self.expr())
            self.expect(")")
            arity = FUNCTIONS[name][1]
            if arity is not None and len(args) != arity:
                raise ExprSyntaxError(
                    f"{name} takes {arity} argument(s), got {len(args)}", token.position
                )
            return Call(name, tuple(args))
        if name in FUNCTIONS:
            raise ExprSyntaxError(f"function '{name}' needs arguments", token.position)
        if name == "pi":
            return Const(math.pi, name="pi")
        m = VARIABLE_NAME.fullmatch(name)
        if m:
            return Var(int(m.group(1)))
        if PARAM_NAME.fullmatch(name):
            return Param(name)
        raise UnknownIdentifierError(name, token.position)


def parse_expr(text: str) -> Expr:
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return Parser(text).parse()


# --- Maps and fields ---
def _check_components(components, domain_dim: int, params: Mapping[str, float], what: str):
    for c, expr in enumerate(components, start=1):
        for node in walk(expr):
            if isinstance(node, Var) and node.index > domain_dim:
                raise DimensionMismatchError(
                    f"{what} component {c} uses x{node.index} but domain_dim is {domain_dim}"
                )
            if isinstance(node, Param) and node.name not in params:
                raise UnboundParameterError(
                    f"{what} component {c} uses unbound parameter '{node.name}'"
                )


def _evaluate_components(components, xs, params, what: str) -> list:
    out = []
    for c, expr in enumerate(components, start=1):
        try:
            out.append(expr.evaluate(xs, params))
        except (ZeroDivisionError, ValueError, OverflowError) as e:
            raise EvaluationError(
                f"{what} component {c} ({to_text(expr)}) cannot be evaluated: {e}",
                coordinate=c,
            ) from e
    return out


@dataclass(frozen=True, eq=False)
class VectorFieldExpr:
    components: tuple[Expr, ...]
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        _check_components(self.components, self.domain_dim, self.params, "vector field")

    @property
    def domain_dim(self) -> int:
        return len(self.components)

    @classmethod
    def parse(cls, texts: Sequence[str], params: Mapping[str, float] | None = None):
        return cls(tuple(parse_expr(t) for t in texts), dict(params or {}))

    @classmethod
    def constant(cls, vector) -> "VectorFieldExpr":
        return cls(tuple(Const(float(v)) for v in vector))

    def evaluate(self, xs: Sequence) -> list:
        return _evaluate_components(self.components, xs, self.params, "vector field")

    def value(self, p) -> np.ndarray:
        return np.array([float(v) for v in self.evaluate([float(x) for x in p])])


@dataclass(frozen=True, eq=False)
class SmoothMap:
    """F: R^domain_dim -> R^codomain_dim, one expression per output coordinate."""

    domain_dim: int
    components: tuple[Expr, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = "map"
    frames: tuple[VectorFieldExpr, ...] = ()

    def __post_init__(self):
        if self.domain_dim < 1:
            raise DimensionMismatchError("domain_dim must be positive")
        _check_components(self.components, self.domain_dim, self.params, "map")
        for frame in self.frames:
            if frame.domain_dim != self.domain_dim:
                raise DimensionMismatchError(
                    f"frame field has {frame.domain_dim} components, expected {self.domain_dim}"
                )

    @property
    def codomain_dim(self) -> int:
        return len(self.components)

    def evaluate(self, xs: Sequence) -> list:
        return _evaluate_components(self.components, xs, self.params, "map")

    def value(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.domain_dim,):
            raise DimensionMismatchError(
                f"point has shape {p.shape}, expected ({self.domain_dim},)"
            )
        return np.array([float(v) for v in self.evaluate([float(x) for x in p])])

    def with_params(self, overrides: Mapping[str, float]) -> "SmoothMap":
        unknown = set(overrides) - set(self.params)
        if unknown:
            raise UnboundParameterError(f"map '{self.name}' has no parameter(s) {sorted(unknown)}")
        params = {**self.params, **{k: float(v) for k, v in overrides.items()}}
        frames = tuple(VectorFieldExpr(fr.components, params) for fr in self.frames)
        return SmoothMap(self.domain_dim, self.components, params, self.name, frames)

    def compose_linear(self, q) -> "SmoothMap":
        """The map x -> F(q x). Frames are dropped since they do not transform as functions."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.domain_dim, self.domain_dim):
            raise DimensionMismatchError(f"expected a {self.domain_dim}x{self.domain_dim} matrix")
        rows = [_linear_combination(q[i]) for i in range(self.domain_dim)]
        components = tuple(substitute(e, lambda v: rows[v.index - 1]) for e in self.components)
        return SmoothMap(self.domain_dim, components, dict(self.params), f"{self.name}_rotated")


def _linear_combination(row) -> Expr:
    terms = [(j + 1, float(c)) for j, c in enumerate(row) if c != 0.0]
    if not terms:
        return Const(0.0)
    expr = None
    for j, c in terms:
        term = BinOp("*", Const(abs(c)), Var(j))
        if expr is None:
            expr = Neg(term) if c < 0 else term
        else:
            expr = BinOp("-" if c < 0 else "+", expr, term)
    return expr


def load_map_spec(document, require_quaternionic: bool = False) -> SmoothMap:
    """Build a SmoothMap from a map-spec document (dict, JSON text or MapSpecDocument)."""
    try:
        if isinstance(document, str):
            spec = MapSpecDocument.parse_raw(document)
        elif isinstance(document, MapSpecDocument):
            spec = document
        else:
            spec = MapSpecDocument.parse_obj(document)
    except ValidationError as e:
        raise SpecError(f"invalid map spec: {e}") from e
    except json.JSONDecodeError as e:
        raise SpecError(f"map spec is not valid JSON: {e}") from e

    if len(spec.components) != spec.codomain_dim:
        raise DimensionMismatchError(
            f"{len(spec.components)} components given but codomain_dim is {spec.codomain_dim}"
        )
    if require_quaternionic and spec.domain_dim % 4 != 0:
        raise DimensionMismatchError(
            f"domain_dim {spec.domain_dim} is not a multiple of 4; no hypercomplex structure fits"
        )
    for point in spec.sample_points or []:
        if len(point) != spec.domain_dim:
            raise DimensionMismatchError(f"sample point {point} has the wrong dimension")

    components = tuple(parse_expr(text) for text in spec.components)
    frames = tuple(VectorFieldExpr.parse(f, spec.params) for f in spec.frames)
    f = SmoothMap(spec.domain_dim, components, dict(spec.params), spec.name, frames)
    logger.info(f"Loaded map '{f.name}': R^{f.domain_dim} -> R^{f.codomain_dim}")
    return f


def bracket(x: VectorFieldExpr, y: VectorFieldExpr, p) -> np.ndarray:
    """Lie bracket on flat space: [X, Y](p) = DY(p) X(p) - DX(p) Y(p)."""
    p = np.asarray(p, dtype=float)
    return numkernel.jacobian(y, p) @ x.value(p) - numkernel.jacobian(x, p) @ y.value(p)
