"""Tiny expression grammar for coefficient definitions in config files.

Grammar (no eval, no attribute access)::

    expr   := term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')' | '-' factor
    VAR    := 't' | 'x' | 'y' | 'z' | 'u'
    FUNC   := 'max0' | 'sin'        # max0(e) = max(e, 0)

Compiled expressions are numpy-broadcasting callables ``(t, x, y, z, u)``,
so they slot directly into the vectorized solvers.
"""

from __future__ import annotations

import re
from typing import Callable

import numpy as np

from .errors import ConfigError

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
                    r"|([A-Za-z_][A-Za-z_0-9]*)|(\*|\+|-|\(|\)))")

_VARS = ("t", "x", "y", "z", "u")
_FUNCS = {"max0": lambda v: np.maximum(v, 0.0), "sin": np.sin}


def _tokenize(src: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m:
            if src[pos:].strip() == "":
                break
            raise ConfigError(f"bad character in expression at {src[pos:]!r}")
        num, name, op = m.groups()
        if num is not None:
            tokens.append(("num", num))
        elif name is not None:
            tokens.append(("name", name))
        else:
            tokens.append(("op", op))
        pos = m.end()
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        kind, val = self.take()
        if kind != "op" or val != op:
            raise ConfigError(f"expected {op!r} in expression {self.src!r}")

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ConfigError(f"trailing input in expression {self.src!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.take()
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek() == ("op", "*"):
            self.take()
            node = ("*", node, self.factor())
        return node

    def factor(self):
        kind, val = self.take()
        if kind == "num":
            return ("const", float(val))
        if kind == "name":
            if val in _VARS:
                return ("var", val)
            if val in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return ("call", val, arg)
            raise ConfigError(f"unknown name {val!r} in expression {self.src!r}")
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        if (kind, val) == ("op", "-"):
            return ("neg", self.factor())
        raise ConfigError(f"unexpected token in expression {self.src!r}")


def _evaluate(node, env):
    tag = node[0]
    if tag == "const":
        return node[1]
    if tag == "var":
        return env[node[1]]
    if tag == "neg":
        return -_evaluate(node[1], env)
    if tag == "call":
        return _FUNCS[node[1]](_evaluate(node[2], env))
    a = _evaluate(node[1], env)
    b = _evaluate(node[2], env)
    if tag == "+":
        return a + b
    if tag == "-":
        return a - b
    return a * b


def compile_expression(src: str) -> Callable:
    """Compile ``src`` into a vectorized ``(t, x, y, z, u) -> value`` callable."""
    ast = _Parser(str(src)).parse()

    def fn(t, x, y, z, u, _ast=ast):
        return _evaluate(_ast, {"t": t, "x": x, "y": y, "z": z, "u": u})

    fn.source = str(src)  # type: ignore[attr-defined]
    return fn
