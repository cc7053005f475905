"""Mini scripting engine: arithmetic/boolean expressions plus one-line
statements that can be registered on device timers.

Expression grammar: numbers, ``+ - * /``, parentheses, comparisons
(``< <= > >= == !=``), ``and``/``or``/``not``, and whitelisted reads such
as ``uptime()`` or ``ain(ch)``.  Script statements are either a bare
command or ``if <expr> then <command>``, one per line (or ``;``), where a
command is ``syslog write "text"`` or ``io write <port> <ch> <expr>``.

Expressions compile to closures over an environment object providing
``call(name, args)``, ``syslog_write(text)``, ``io_write(port, ch, v)``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

from .errors import DivByZero, ParseError, UnknownFunction

FUNCTIONS = {"uptime": 0, "ain": 1, "aout": 1, "din": 1, "dout": 1}

_TOKEN = re.compile(r"""
    (?P<num>\d+\.\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?|\d+([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|!=|[-+*/()<>,])
  | (?P<ws>\s+)
""", re.VERBOSE)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"bad character {text[pos]!r} at offset {pos}")
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        if m.lastgroup == "num":
            raw = m.group("num")
            tokens.append(("num", float(raw) if ("." in raw or "e" in raw or "E" in raw) else int(raw)))
        else:
            tokens.append((m.lastgroup, m.group(0)))
    tokens.append(("end", ""))
    return tokens


def _truthy(v) -> bool:
    return bool(v)


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val = self.next()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}, got {val!r}")

    def parse(self) -> Callable:
        fn = self.or_expr()
        kind, val = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing input {val!r}")
        return fn

    def or_expr(self):
        fn = self.and_expr()
        while self.peek() == ("ident", "or"):
            self.next()
            rhs = self.and_expr()
            fn = (lambda a, b: lambda env: _truthy(a(env)) or _truthy(b(env)))(fn, rhs)
        return fn

    def and_expr(self):
        fn = self.not_expr()
        while self.peek() == ("ident", "and"):
            self.next()
            rhs = self.not_expr()
            fn = (lambda a, b: lambda env: _truthy(a(env)) and _truthy(b(env)))(fn, rhs)
        return fn

    def not_expr(self):
        if self.peek() == ("ident", "not"):
            self.next()
            inner = self.not_expr()
            return lambda env: not _truthy(inner(env))
        return self.comparison()

    _CMP = {"<": lambda a, b: a < b, "<=": lambda a, b: a <= b,
            ">": lambda a, b: a > b, ">=": lambda a, b: a >= b,
            "==": lambda a, b: a == b, "!=": lambda a, b: a != b}

    def comparison(self):
        lhs = self.additive()
        kind, val = self.peek()
        if kind == "op" and val in self._CMP:
            self.next()
            rhs = self.additive()
            op = self._CMP[val]
            return lambda env: op(lhs(env), rhs(env))
        return lhs

    def additive(self):
        fn = self.multiplicative()
        while True:
            kind, val = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                rhs = self.multiplicative()
                if val == "+":
                    fn = (lambda a, b: lambda env: a(env) + b(env))(fn, rhs)
                else:
                    fn = (lambda a, b: lambda env: a(env) - b(env))(fn, rhs)
            else:
                return fn

    def multiplicative(self):
        fn = self.unary()
        while True:
            kind, val = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                rhs = self.unary()
                if val == "*":
                    fn = (lambda a, b: lambda env: a(env) * b(env))(fn, rhs)
                else:
                    def div(a, b):
                        def run(env):
                            d = b(env)
                            if d == 0:
                                raise DivByZero("division by zero")
                            return a(env) / d
                        return run
                    fn = div(fn, rhs)
            else:
                return fn

    def unary(self):
        kind, val = self.peek()
        if kind == "op" and val == "-":
            self.next()
            inner = self.unary()
            return lambda env: -inner(env)
        return self.primary()

    def primary(self):
        kind, val = self.next()
        if kind == "num":
            return lambda env, v=val: v
        if kind == "op" and val == "(":
            inner = self.or_expr()
            self.expect_op(")")
            return inner
        if kind == "ident":
            if val == "true":
                return lambda env: True
            if val == "false":
                return lambda env: False
            if val in ("and", "or", "not"):
                raise ParseError(f"unexpected keyword {val!r}")
            self.expect_op("(")
            args = []
            if self.peek() != ("op", ")"):
                args.append(self.or_expr())
                while self.peek() == ("op", ","):
                    self.next()
                    args.append(self.or_expr())
            self.expect_op(")")
            if val not in FUNCTIONS:
                raise UnknownFunction(f"function {val!r} is not available")
            if len(args) != FUNCTIONS[val]:
                raise ParseError(f"{val}() takes {FUNCTIONS[val]} argument(s)")
            return lambda env, name=val, a=tuple(args): env.call(name, [f(env) for f in a])
        raise ParseError(f"unexpected token {val!r}")


def compile_expression(text: str) -> Callable:
    """Compile to a callable(env) -> value."""
    if not text.strip():
        raise ParseError("empty expression")
    return _Parser(_tokenize(text)).parse()


# --- script statements ---

_THEN = re.compile(r"\bthen\b")
_IO_PORTS = ("ain", "aout", "din", "dout")


@dataclass
class Statement:
    condition: Optional[Callable]
    action: Callable  # action(env)
    source: str


class Script:
    def __init__(self, statements: List[Statement], source: str):
        self.statements = statements
        self.source = source

    def run(self, env) -> None:
        for stmt in self.statements:
            if stmt.condition is None or _truthy(stmt.condition(env)):
                stmt.action(env)


def _compile_action(text: str) -> Callable:
    text = text.strip()
    m = re.match(r"^syslog\s+write\s+(\".*\")\s*$", text)
    if m:
        try:
            msg = json.loads(m.group(1))
        except json.JSONDecodeError as e:
            raise ParseError(f"bad string literal: {e}") from None
        return lambda env: env.syslog_write(msg)
    m = re.match(r"^io\s+write\s+([a-z]+)\s+(\d+)\s+(.+)$", text)
    if m:
        port, ch, expr_text = m.group(1), int(m.group(2)), m.group(3)
        if port not in _IO_PORTS:
            raise ParseError(f"unknown io port {port!r}")
        value_fn = compile_expression(expr_text)
        return lambda env: env.io_write(port, ch, value_fn(env))
    raise ParseError(f"unsupported script command: {text!r}")


def compile_script(source: str) -> Script:
    statements: List[Statement] = []
    for raw_line in re.split(r"[\n;]", source):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("if "):
            m = _THEN.search(line)
            if not m:
                raise ParseError("if-statement missing 'then'")
            cond = compile_expression(line[3:m.start()])
            action = _compile_action(line[m.end():])
            statements.append(Statement(cond, action, line))
        else:
            statements.append(Statement(None, _compile_action(line), line))
    if not statements:
        raise ParseError("script has no statements")
    return Script(statements, source)
