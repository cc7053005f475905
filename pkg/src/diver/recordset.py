"""Tabular response records and their canonical text serialization.

Every measurer response is a RecordSet rendered as:

    #<kind> tick=<n>
    <col>\\t<col>...
    <cell>\\t<cell>...

Cells are ints, floats, or double-quoted strings with backslash escapes.
The serialization is canonical: same content, same bytes.  Errors use the
single-line form ``#error code=<Name> msg="..."``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, List, Sequence

from .errors import BadFrame, DiverError, error_from_code

Value = Any  # int | float | str


@dataclass
class RecordSet:
    kind: str
    columns: List[str]
    rows: List[List[Value]]
    tick: int = 0

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row arity {len(row)} != {len(self.columns)} columns")

    def column(self, name: str) -> List[Value]:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def dicts(self) -> List[dict]:
        return [dict(zip(self.columns, row)) for row in self.rows]

    def with_sub(self, sub_id: int) -> "RecordSet":
        """Copy with a leading subscription-id column (stream frames)."""
        return RecordSet(self.kind, ["sub"] + self.columns,
                         [[sub_id] + row for row in self.rows], self.tick)


def ack(tick: int = 0, detail: str = "ok", **extra) -> RecordSet:
    cols = ["detail"] + sorted(extra)
    return RecordSet("ack", cols, [[detail] + [extra[k] for k in sorted(extra)]], tick)


def _encode_cell(v: Value) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"unsupported cell type {type(v)!r}")


def _decode_cell(text: str) -> Value:
    if text.startswith('"'):
        return json.loads(text)
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def serialize(rs: RecordSet) -> str:
    lines = [f"#{rs.kind} tick={rs.tick}", "\t".join(rs.columns)]
    for row in rs.rows:
        lines.append("\t".join(_encode_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def serialize_error(err: DiverError) -> str:
    return f'#error code={err.code} msg={json.dumps(err.msg or str(err))}\n'


def parse(text: str) -> RecordSet:
    """Parse canonical text; raises the encoded error for #error records."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith("#"):
        raise BadFrame("record missing #kind header")
    header = lines[0][1:]
    if header.startswith("error "):
        rest = header[len("error "):]
        code, msg = "Error", ""
        if rest.startswith("code="):
            code_part, _, msg_part = rest.partition(" ")
            code = code_part[len("code="):]
            if msg_part.startswith("msg="):
                msg = json.loads(msg_part[len("msg="):])
        raise error_from_code(code, msg)
    kind, _, tick_part = header.partition(" ")
    if not tick_part.startswith("tick="):
        raise BadFrame("record header missing tick")
    tick = int(tick_part[len("tick="):])
    if len(lines) < 2:
        raise BadFrame("record missing column line")
    columns = lines[1].split("\t") if lines[1] else []
    rows = [[_decode_cell(c) for c in line.split("\t")] for line in lines[2:]]
    return RecordSet(kind, columns, rows, tick)


def render_table(rs: RecordSet) -> str:
    """Human-oriented aligned rendering for the REPL."""
    cells = [[str(c) for c in rs.columns]]
    for row in rs.rows:
        cells.append([v if isinstance(v, str) else _encode_cell(v) for v in row])
    widths = [max(len(r[i]) for r in cells) for i in range(len(rs.columns))] if rs.columns else []
    out = [f"[{rs.kind} @ tick {rs.tick}]"]
    for i, r in enumerate(cells):
        out.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        if i == 0 and rs.rows:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)
