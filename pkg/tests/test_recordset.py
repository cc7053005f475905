"""Canonical record serialization and the command line format."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diver.command import Command, format_command, parse_command
from diver.errors import BadArgument, ParseError, UnknownVerb
from diver.recordset import RecordSet, ack, parse, render_table, serialize, \
    serialize_error


def test_serialize_parse_round_trip():
    rs = RecordSet("tasks", ["task_id", "name"], [[1, "tCtrl"], [2, "t\ttab"]], 42)
    again = parse(serialize(rs))
    assert again == rs


def test_canonical_serialization_stable():
    rs = RecordSet("io", ["port", "ch", "value"], [["ain", 3, 2.5]], 7)
    assert serialize(rs) == serialize(RecordSet("io", ["port", "ch", "value"],
                                                [["ain", 3, 2.5]], 7))
    assert serialize(rs) == '#io tick=7\nport\tch\tvalue\n"ain"\t3\t2.5\n'


def test_row_arity_enforced():
    with pytest.raises(ValueError):
        RecordSet("x", ["a", "b"], [[1]], 0)


def test_error_record_round_trip():
    text = serialize_error(UnknownVerb("no such verb: bogus"))
    with pytest.raises(UnknownVerb) as exc:
        parse(text)
    assert "bogus" in exc.value.msg


def test_ack_shape():
    rs = ack(5, "ok", sub=3)
    assert rs.kind == "ack" and rs.dicts()[0]["sub"] == 3


def test_with_sub_prepends_column():
    rs = RecordSet("tasks", ["task_id"], [[1], [2]], 0)
    tagged = rs.with_sub(9)
    assert tagged.columns[0] == "sub"
    assert [row[0] for row in tagged.rows] == [9, 9]


def test_render_table_contains_values():
    text = render_table(RecordSet("tasks", ["task_id", "name"],
                                  [[1, "tCtrl"]], 3))
    assert "task_id" in text and "tCtrl" in text


_cell = st.one_of(
    st.integers(min_value=-2**53, max_value=2**53),
    st.floats(allow_nan=False, allow_infinity=False, width=64),
    st.text(max_size=24),
)


@settings(max_examples=80, deadline=None)
@given(st.lists(_cell, min_size=1, max_size=5), st.integers(0, 2**40))
def test_round_trip_property(row, tick):
    rs = RecordSet("k", [f"c{i}" for i in range(len(row))], [row], tick)
    assert parse(serialize(rs)) == rs


# --- command format ---

def test_parse_simple():
    cmd = parse_command("tasks\n")
    assert cmd.verb == "tasks" and cmd.args == {}


def test_parse_typed_args():
    cmd = parse_command('io action=write port="aout" ch=3 value=2.5')
    assert cmd.args == {"action": "write", "port": "aout", "ch": 3, "value": 2.5}


def test_parse_bareword_and_hex():
    cmd = parse_command("read_memory addr=0x500200 len=16")
    assert cmd.args["addr"] == 0x500200 and cmd.args["len"] == 16
    cmd = parse_command("tasks stream=on rate=1.0")
    assert cmd.args["stream"] == "on" and cmd.args["rate"] == 1.0


def test_parse_quoted_escapes():
    cmd = parse_command('syslog action=write text="a \\"quote\\" and \\t tab"')
    assert cmd.args["text"] == 'a "quote" and \t tab'


def test_parse_errors():
    for bad in ("", "   ", "1abc", "tasks key", "tasks =v", 'x a="unterminated'):
        with pytest.raises(ParseError):
            parse_command(bad)


def test_format_round_trip():
    text = format_command("eval", expr="(2+3)*4", rate=2.0, stream=True, n=7)
    cmd = parse_command(text)
    assert cmd.verb == "eval"
    assert cmd.args == {"expr": "(2+3)*4", "rate": 2.0, "stream": "on", "n": 7}


def test_command_typed_getters():
    cmd = Command("x", {"a": 1, "b": 2.5, "c": "text"})
    assert cmd.get_int("a") == 1
    assert cmd.get_float("b") == 2.5
    assert cmd.get_float("a") == 1.0
    assert cmd.get_str("c") == "text"
    with pytest.raises(ParseError):
        cmd.get_int("b")
