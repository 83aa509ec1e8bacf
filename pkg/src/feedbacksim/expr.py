"""Text expressions for operators, e.g. ``"x_1*x_2 - y_1*y_2"`` or ``"dag(a_1)"``.

Grammar::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('+' | '-') unary | atom
    atom    := number | imag | generator | 'id' | param
             | 'dag' '(' expr ')' | '(' expr ')'
    number  := float literal            (1.5, 2, 1e-3)
    imag    := float literal 'i' | 'i'  (2i, 0.5i)
    generator := ('a' | 'adag' | 'x' | 'y' | 'n' | 'sx' | 'sy' | 'sz') '_' label

Bare identifiers that are not generators are looked up in ``params``.
Division is only allowed by scalar subexpressions.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .operators import (
    GENERATOR_ALIASES,
    Operator,
    SpaceError,
    SpaceSignature,
    build_generator,
    identity,
)

GENERATOR_PREFIXES = ("adag", "a", "x", "y", "n", "sx", "sy", "sz")


class ExprError(ValueError):
    def __init__(self, msg: str, text: str = "", pos: int | None = None):
        self.text = text
        self.pos = pos
        where = f" at column {pos + 1}" if pos is not None else ""
        super().__init__(f"{msg}{where}" + (f" in {text!r}" if text else ""))


# -- tree -------------------------------------------------------------------

@dataclass(frozen=True)
class Scalar:
    value: complex


@dataclass(frozen=True)
class Gen:
    name: str  # canonical generator name, e.g. "annihilate"
    label: str


@dataclass(frozen=True)
class Ident:
    pass


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Sum:
    left: "Node"
    right: "Node"
    sign: int = 1


@dataclass(frozen=True)
class Prod:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Div:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Adjoint:
    arg: "Node"


Node = Union[Scalar, Gen, Ident, Param, Sum, Prod, Div, Neg, Adjoint]


# -- parsing ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>i(?![A-Za-z0-9_]))?"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/()])"
    r")"
)


def _tokenize(text: str) -> list[tuple[str, object, int]]:
    toks: list[tuple[str, object, int]] = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprError(f"unexpected character {text[start]!r}", text, start)
        start = m.start(m.lastgroup) if m.lastgroup else pos
        if m.group("num") is not None:
            start = m.start("num")
            v = float(m.group("num"))
            toks.append(("num", complex(0, v) if m.group("imag") else complex(v), start))
        elif m.group("name") is not None:
            toks.append(("name", m.group("name"), m.start("name")))
        else:
            toks.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    toks.append(("end", None, len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        kind, val, pos = self.take()
        if kind != "op" or val != op:
            raise ExprError(f"expected {op!r}", self.text, pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprError(f"unexpected token {val!r}", self.text, pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                node = Sum(node, self.term(), 1 if val == "+" else -1)
            else:
                return node

    def term(self) -> Node:
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                rhs = self.unary()
                node = Prod(node, rhs) if val == "*" else Div(node, rhs)
            else:
                return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            arg = self.unary()
            return arg if val == "+" else Neg(arg)
        return self.atom()

    def atom(self) -> Node:
        kind, val, pos = self.take()
        if kind == "num":
            return Scalar(val)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            if val == "dag":
                self.expect("(")
                node = self.expr()
                self.expect(")")
                return Adjoint(node)
            if val == "id":
                return Ident()
            if val == "i":
                return Scalar(1j)
            prefix, sep, label = val.partition("_")
            if sep and label and prefix in GENERATOR_PREFIXES:
                return Gen(GENERATOR_ALIASES.get(prefix, prefix), label)
            return Param(val)
        if kind == "end":
            raise ExprError("unexpected end of expression", self.text, pos)
        raise ExprError(f"unexpected token {val!r}", self.text, pos)


def parse_expr(text: str) -> Node:
    return _Parser(text).parse()


# -- evaluation -------------------------------------------------------------

def _eval(node: Node, space: SpaceSignature, params: Mapping[str, float]):
    """Returns either a python complex (scalar subtree) or an Operator."""
    if isinstance(node, Scalar):
        return node.value
    if isinstance(node, Param):
        if node.name not in params:
            raise ExprError(f"unknown identifier {node.name!r}")
        return complex(params[node.name])
    if isinstance(node, Ident):
        return identity(space)
    if isinstance(node, Gen):
        try:
            return build_generator(space, node.label, node.name)
        except SpaceError as exc:
            raise ExprError(str(exc)) from None
    if isinstance(node, Neg):
        return -_eval(node.arg, space, params)
    if isinstance(node, Adjoint):
        v = _eval(node.arg, space, params)
        return v.dag() if isinstance(v, Operator) else np.conj(v)
    left = _eval(node.left, space, params)
    right = _eval(node.right, space, params)
    if isinstance(node, Sum):
        if not isinstance(left, Operator) and not isinstance(right, Operator):
            return left + node.sign * right
        if not isinstance(left, Operator):
            left = left * identity(space)
        if not isinstance(right, Operator):
            right = right * identity(space)
        return left + node.sign * right
    if isinstance(node, Prod):
        return left * right
    if isinstance(node, Div):
        if isinstance(right, Operator):
            raise ExprError("division by an operator is not supported")
        return left / right
    raise ExprError(f"unhandled node {node!r}")


def evaluate_expr(expr: Node | str, space: SpaceSignature,
                  params: Mapping[str, float] | None = None) -> Operator:
    node = parse_expr(expr) if isinstance(expr, str) else expr
    try:
        value = _eval(node, space, params or {})
    except ExprError as exc:
        if isinstance(expr, str) and not exc.text:
            raise ExprError(str(exc), expr) from None
        raise
    if not isinstance(value, Operator):
        value = value * identity(space)
    return value


def format_expr(node: Node) -> str:
    """Inverse of :func:`parse_expr` up to redundant parentheses."""
    rev = {v: k for k, v in GENERATOR_ALIASES.items()}
    if isinstance(node, Scalar):
        v = complex(node.value)
        if v.imag == 0:
            return repr(v.real)
        if v.real == 0:
            return f"{v.imag!r}i"
        return f"({v.real!r} + {v.imag!r}i)"
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Ident):
        return "id"
    if isinstance(node, Gen):
        return f"{rev.get(node.name, node.name)}_{node.label}"
    if isinstance(node, Neg):
        return f"-({format_expr(node.arg)})"
    if isinstance(node, Adjoint):
        return f"dag({format_expr(node.arg)})"
    if isinstance(node, Sum):
        op = "+" if node.sign > 0 else "-"
        return f"({format_expr(node.left)} {op} {format_expr(node.right)})"
    if isinstance(node, Prod):
        return f"{format_expr(node.left)}*{format_expr(node.right)}"
    if isinstance(node, Div):
        return f"{format_expr(node.left)}/({format_expr(node.right)})"
    raise ExprError(f"unhandled node {node!r}")
