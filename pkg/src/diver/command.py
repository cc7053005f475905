"""Command line format used on the wire and in the operator console.

One command per frame payload: ``verb key=value key="quoted text" ...``,
UTF-8, LF-terminated.  Values are ints (decimal or 0x hex), floats,
double-quoted strings with backslash escapes, or bare words (kept as
text, e.g. ``on``/``off``/``all``).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from .errors import ParseError

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"-?(0[xX][0-9a-fA-F]+|\d+\.\d*([eE][+-]?\d+)?|\d+([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?)")
_BAREWORD = re.compile(r"[^\s=]+")


@dataclass
class Command:
    verb: str
    args: Dict[str, Any] = field(default_factory=dict)

    def get_int(self, name: str, default: Optional[int] = None) -> Optional[int]:
        v = self.args.get(name, default)
        if v is default:
            return default
        if isinstance(v, bool) or not isinstance(v, int):
            raise ParseError(f"argument {name} must be an integer")
        return v

    def get_float(self, name: str, default: Optional[float] = None) -> Optional[float]:
        v = self.args.get(name, default)
        if v is default:
            return default
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return float(v)
        raise ParseError(f"argument {name} must be a number")

    def get_str(self, name: str, default: Optional[str] = None) -> Optional[str]:
        v = self.args.get(name, default)
        if v is default:
            return default
        return v if isinstance(v, str) else str(v)


def _scan_value(text: str, pos: int):
    if pos < len(text) and text[pos] == '"':
        # JSON string scan: find the closing unescaped quote.
        i = pos + 1
        while i < len(text):
            if text[i] == "\\":
                i += 2
                continue
            if text[i] == '"':
                try:
                    return json.loads(text[pos:i + 1]), i + 1
                except json.JSONDecodeError as e:
                    raise ParseError(f"bad string literal: {e}") from None
            i += 1
        raise ParseError("unterminated string literal")
    m = _NUMBER.match(text, pos)
    if m and (m.end() == len(text) or text[m.end()].isspace()):
        tok = m.group(0)
        try:
            if re.fullmatch(r"-?0[xX][0-9a-fA-F]+", tok):
                return int(tok, 16), m.end()
            if re.fullmatch(r"-?\d+", tok):
                return int(tok), m.end()
            return float(tok), m.end()
        except ValueError:
            pass
    m = _BAREWORD.match(text, pos)
    if not m:
        raise ParseError(f"expected value at offset {pos}")
    return m.group(0), m.end()


def parse_command(text: str) -> Command:
    text = text.rstrip("\n")
    if not text.strip():
        raise ParseError("empty command")
    pos = 0
    m = _IDENT.match(text, pos)
    if not m:
        raise ParseError("command must start with a verb")
    verb = m.group(0)
    pos = m.end()
    args: Dict[str, Any] = {}
    while pos < len(text):
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _IDENT.match(text, pos)
        if not m or m.end() >= len(text) or text[m.end()] != "=":
            raise ParseError(f"expected key=value at offset {pos}")
        key = m.group(0)
        value, pos = _scan_value(text, m.end() + 1)
        args[key] = value
    return Command(verb, args)


def format_command(verb: str, **args: Any) -> str:
    parts = [verb]
    for k, v in args.items():
        if isinstance(v, str):
            parts.append(f"{k}={json.dumps(v)}")
        elif isinstance(v, bool):
            parts.append(f"{k}={'on' if v else 'off'}")
        elif isinstance(v, float):
            parts.append(f"{k}={v!r}")
        else:
            parts.append(f"{k}={v}")
    return " ".join(parts)
