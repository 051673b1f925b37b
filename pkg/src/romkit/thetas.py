"""Coefficient-function mini-language.

Parametric coefficients are stored as expression strings over real literals,
parameter references ``mu[i]``, unary minus and the four binary operators.
Keeping them as strings (rather than callbacks) makes offline artifacts
serializable and reloadable without surprises.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := number | 'mu[' index ']' | '(' expr ')' | '-' factor
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import ThetaEvalError, ThetaSyntaxError


@dataclass(frozen=True)
class Num:
    value: float

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class Ref:
    index: int

    def __str__(self):
        return f"mu[{self.index}]"


@dataclass(frozen=True)
class Neg:
    operand: "Node"

    def __str__(self):
        return f"(-{self.operand})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


Node = Num | Ref | Neg | BinOp

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<mu>mu\[(?P<idx>\d+)\])"
    r"|(?P<op>[-+*/()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ThetaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num")), pos))
        elif m.group("mu") is not None:
            tokens.append(("mu", int(m.group("idx")), pos))
        else:
            tokens.append(("op", m.group("op"), pos))
        pos = m.end()
    return tokens


class ThetaExpression:
    """A parsed coefficient function of the parameter vector."""

    def __init__(self, root: Node, text: str, p: int):
        self.root = root
        self.text = text
        self.p = p

    def __str__(self):
        return str(self.root)

    def __eq__(self, other):
        return isinstance(other, ThetaExpression) and self.root == other.root

    def __call__(self, mu):
        return self.evaluate(mu)

    def evaluate(self, mu) -> float:
        value = _eval(self.root, mu)
        if not math.isfinite(value):
            raise ThetaEvalError(
                f"expression {self.text!r} is non-finite at mu={list(mu)}"
            )
        return value


def _eval(node, mu):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Ref):
        return float(mu[node.index])
    if isinstance(node, Neg):
        return -_eval(node.operand, mu)
    a = _eval(node.left, mu)
    b = _eval(node.right, mu)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    try:
        return a / b
    except ZeroDivisionError:
        return math.inf


class _Parser:
    def __init__(self, tokens, p, text):
        self.tokens = tokens
        self.p = p
        self.text = text
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def advance(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_op(self, op):
        tok = self.peek()
        if tok is None or tok[0] != "op" or tok[1] != op:
            offset = tok[2] if tok is not None else len(self.text)
            raise ThetaSyntaxError(f"expected {op!r}", offset)
        return self.advance()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ThetaSyntaxError("trailing input", tok[2])
        return node

    def expr(self):
        node = self.term()
        while True:
            tok = self.peek()
            if tok is not None and tok[0] == "op" and tok[1] in "+-":
                self.advance()
                node = BinOp(tok[1], node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            tok = self.peek()
            if tok is not None and tok[0] == "op" and tok[1] in "*/":
                self.advance()
                node = BinOp(tok[1], node, self.factor())
            else:
                return node

    def factor(self):
        tok = self.advance()
        if tok is None:
            raise ThetaSyntaxError("unexpected end of expression", len(self.text))
        kind, value, offset = tok
        if kind == "num":
            return Num(value)
        if kind == "mu":
            if value >= self.p:
                raise ThetaSyntaxError(
                    f"parameter index {value} out of range for p={self.p}", offset
                )
            return Ref(value)
        if value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if value == "-":
            return Neg(self.factor())
        raise ThetaSyntaxError(f"unexpected token {value!r}", offset)


def parse_theta(text: str, p: int) -> ThetaExpression:
    """Parse a coefficient expression with ``p`` available parameters."""
    if not text or not text.strip():
        raise ThetaSyntaxError("empty expression", 0)
    tokens = _tokenize(text)
    root = _Parser(tokens, p, text).parse()
    return ThetaExpression(root, text, p)
