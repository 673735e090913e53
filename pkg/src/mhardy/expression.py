"""Function-expression grammar used by configs, field specs and growth functions.

Grammar (whitespace insignificant)::

    expr   := term (('+'|'-') term)*
    term   := unary (('*'|'/') unary)*
    unary  := ('-'|'+') unary | factor
    factor := base ('^' exponent)?
    exponent := ['-'|'+'] number | '(' expr ')'
    base   := number | name | '|x|' | '|' expr '|' | func '(' args ')' | '(' expr ')'

Names are ``x1``..``x9`` and ``t`` by default (callers may pass another set,
e.g. ``xi1``..``xi9`` for symbols); ``e`` and ``pi`` are constants. ``ln`` and
``log`` are natural logarithms. ``min``/``max`` take two arguments.

Evaluation is vectorized: every name is bound to a scalar or a numpy array
and the usual broadcasting rules apply.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ExpressionError, UnknownNameError

__all__ = [
    "Node",
    "Number",
    "Name",
    "Norm",
    "Negate",
    "BinaryOp",
    "Power",
    "Call",
    "parse_expression",
    "DEFAULT_NAMES",
]

DEFAULT_NAMES = frozenset([f"x{k}" for k in range(1, 10)] + ["t"])
CONSTANTS = {"e": math.e, "pi": math.pi}

_UNARY_FUNCS: dict[str, Callable] = {
    "exp": np.exp,
    "log": np.log,
    "ln": np.log,
    "abs": np.abs,
    "cos": np.cos,
    "sin": np.sin,
    "sqrt": np.sqrt,
}
_BINARY_FUNCS: dict[str, Callable] = {"min": np.minimum, "max": np.maximum}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<norm>\|\s*x\s*\|)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),|])
    """,
    re.VERBOSE,
)


class Node:
    """Base class of expression-tree nodes."""

    children: tuple["Node", ...] = ()

    def depth(self) -> int:
        """Number of edges on the longest root-to-leaf path."""
        if not self.children:
            return 0
        return 1 + max(c.depth() for c in self.children)

    def names(self) -> set[str]:
        out: set[str] = set()
        for c in self.children:
            out |= c.names()
        return out

    def evaluate(self, env: Mapping[str, object]):
        raise NotImplementedError

    def __call__(self, **env):
        return self.evaluate(env)


@dataclass(frozen=True)
class Number(Node):
    value: float

    def evaluate(self, env):
        return self.value


@dataclass(frozen=True)
class Name(Node):
    name: str

    def names(self):
        return {self.name}

    def evaluate(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise UnknownNameError(f"name {self.name!r} is not bound") from None


@dataclass(frozen=True)
class Norm(Node):
    """The Euclidean norm ``|x|`` of the spatial point."""

    def names(self):
        return {"|x|"}

    def evaluate(self, env):
        try:
            return env["|x|"]
        except KeyError:
            raise UnknownNameError("'|x|' is not bound") from None


@dataclass(frozen=True)
class Negate(Node):
    operand: Node

    @property
    def children(self):
        return (self.operand,)

    def evaluate(self, env):
        return -self.operand.evaluate(env)


@dataclass(frozen=True)
class BinaryOp(Node):
    op: str
    left: Node
    right: Node

    @property
    def children(self):
        return (self.left, self.right)

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        with np.errstate(all="ignore"):
            if self.op == "+":
                return a + b
            if self.op == "-":
                return a - b
            if self.op == "*":
                return a * b
            return np.divide(a, b)


@dataclass(frozen=True)
class Power(Node):
    base: Node
    exponent: Node

    @property
    def children(self):
        return (self.base, self.exponent)

    def evaluate(self, env):
        with np.errstate(all="ignore"):
            return np.power(
                np.asarray(self.base.evaluate(env), dtype=float),
                np.asarray(self.exponent.evaluate(env), dtype=float),
            )


@dataclass(frozen=True)
class Call(Node):
    func: str
    args: tuple[Node, ...]

    @property
    def children(self):
        return self.args

    def evaluate(self, env):
        vals = [a.evaluate(env) for a in self.args]
        with np.errstate(all="ignore"):
            if self.func in _UNARY_FUNCS:
                return _UNARY_FUNCS[self.func](vals[0])
            return _BINARY_FUNCS[self.func](vals[0], vals[1])


@dataclass
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(src: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExpressionError(f"unexpected character {src[pos]!r}", src, pos)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, names: frozenset[str]):
        self.src = src
        self.names = names
        self.tokens = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.tok
        return ExpressionError(message, self.src, tok.pos)

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")

    def parse(self) -> Node:
        if self.tok.kind == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinaryOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinaryOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.accept("-"):
            return Negate(self.unary())
        if self.accept("+"):
            return self.unary()
        return self.factor()

    def factor(self) -> Node:
        node = self.base()
        if self.accept("^"):
            node = Power(node, self.exponent())
        return node

    def exponent(self) -> Node:
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        sign = 1.0
        if self.accept("-"):
            sign = -1.0
        elif self.accept("+"):
            pass
        if self.tok.kind != "num":
            raise self.error("exponent must be a number or a parenthesized expression")
        value = sign * float(self.tok.text)
        self.i += 1
        return Number(value)

    def base(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Number(float(tok.text))
        if tok.kind == "norm":
            self.i += 1
            return Norm()
        if tok.kind == "name":
            self.i += 1
            name = tok.text
            if name in _UNARY_FUNCS or name in _BINARY_FUNCS:
                self.expect("(")
                args = [self.expr()]
                if name in _BINARY_FUNCS:
                    self.expect(",")
                    args.append(self.expr())
                self.expect(")")
                return Call(name, tuple(args))
            if name in CONSTANTS:
                return Number(CONSTANTS[name])
            if name in self.names:
                return Name(name)
            raise UnknownNameError(f"unknown identifier {name!r}", self.src, tok.pos)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        if self.accept("|"):
            node = self.expr()
            self.expect("|")
            return Call("abs", (node,))
        if tok.kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {tok.text!r}")


def parse_expression(src: str, names: Iterable[str] | None = None) -> Node:
    """Parse ``src`` into an expression tree.

    Raises ``ExpressionError`` (with ``position``, ``line``, ``column``) on a
    syntax error and ``UnknownNameError`` (a ``NameError``) on an identifier
    outside ``names``.
    """
    if isinstance(src, bytes):
        src = src.decode("utf-8")
    allowed = DEFAULT_NAMES if names is None else frozenset(names)
    return _Parser(src, allowed).parse()
