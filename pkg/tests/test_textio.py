import json
import random

import pytest

from tdlstream import Fact, ParseError, parse_dataset, parse_program
from tdlstream.model import PredicateSig, Program, Rule, make_program
from tdlstream.textio import (
    StreamFormatError,
    StreamEvent,
    parse_query,
    parse_source,
    parse_stream,
    render_answer_lines,
    render_dataset,
    render_emission_lines,
    render_program,
    render_stream,
)

from .genutil import random_dataset, random_query


def test_parse_paper_rules(full_program):
    assert len(full_program.rules) == 6
    assert full_program.sig("Temp").arity == 3
    assert full_program.sig("Temp").edb and full_program.sig("Temp").temporal
    assert full_program.sig("Near").arity == 2 and not full_program.sig("Near").temporal
    assert full_program.sig("AtRisk").origin == "idb"


def test_parse_empty_text():
    program = parse_program("   % nothing here\n")
    assert program.rules == ()


def test_missing_comma_is_a_syntax_error():
    with pytest.raises(ParseError) as exc:
        parse_program("Flag(X T) -> Cool(X, T).")
    assert exc.value.line == 1
    assert exc.value.col == 8  # the offending second term


def test_negative_offsets_and_points():
    program = parse_program("Shdn(X, T) -> Malfunc(X, T-2).\nTemp(a, high, -3).")
    (rule, fact) = program.rules
    assert rule.head.time.shift == -2
    assert fact.head.time.shift == -3


def test_at_var_declaration_allows_lowercase_variables():
    program = parse_program(
        "@var x.\n@pred Temp/3 edb temporal.\nTemp(x, high, t) -> Flag(x, t)."
    )
    (rule,) = program.rules
    assert rule.head.args[0].name == "x"
    assert rule.head.time.var == "t"
    assert rule.body[0].args == (rule.head.args[0], "high")


def test_sortless_program_defaults_to_rigid():
    # with no integer, offset or declaration anywhere, everything is rigid
    # and bare names in the trailing slot read as object terms
    program = parse_program("@var x, t.\nTemp(x, high, t) -> Flag(x, t).")
    assert not program.sig("Flag").temporal
    (rule,) = program.rules
    assert rule.head.time is None


def test_arity_conflict_reported():
    with pytest.raises(ParseError):
        parse_program("Flag(X, T) -> Out(X, T).\nFlag(X, Y, T) -> Out(X, T).")


def test_query_directive(shdn_query):
    assert shdn_query.output == "Shdn"
    src = parse_source("@query Nope.\nTemp(a, high, 0).")
    with pytest.raises(Exception):
        parse_query("@query Nope.\nTemp(a, high, 0).")
    assert src.query_name == "Nope"


def test_dataset_requires_ground_facts(shdn_query):
    with pytest.raises(Exception):
        parse_dataset("Temp(X, high, 0).", shdn_query.program)


# -- streams -----------------------------------------------------------------


def test_parse_stream_basic(shdn_query):
    events = parse_stream("#tick 0\nTemp(a, high, 0).\n", shdn_query.program)
    assert events == [
        StreamEvent(0, frozenset({Fact("Temp", ("a", "high"), 0)}))
    ]


def test_parse_stream_tick_order(shdn_query):
    with pytest.raises(StreamFormatError):
        parse_stream("#tick 1\n#tick 0\n", shdn_query.program)


def test_parse_stream_time_mismatch(shdn_query):
    with pytest.raises(StreamFormatError):
        parse_stream("#tick 0\nTemp(a, high, 1).\n", shdn_query.program)


def test_parse_stream_rejects_idb_facts(shdn_query):
    with pytest.raises(StreamFormatError):
        parse_stream("#tick 0\nFlag(a, 0).\n", shdn_query.program)


def test_parse_stream_rejects_rigid_facts(atrisk_query):
    with pytest.raises(StreamFormatError):
        parse_stream("#tick 0\nNear(a, b).\n", atrisk_query.program)


# -- answer records ----------------------------------------------------------


def test_render_answer_lines():
    lines = render_answer_lines("Shdn", frozenset({("a",)}), 2)
    assert lines == ['{"t_out":2,"pred":"Shdn","tuple":["a"]}']
    assert render_answer_lines("Shdn", frozenset(), 2) == []
    two = render_answer_lines("Shdn", frozenset({("b",), ("a",)}), 0)
    assert [json.loads(line)["tuple"] for line in two] == [["a"], ["b"]]


def test_render_emission_marks_definitive_empty():
    (line,) = render_emission_lines("Shdn", frozenset(), 4)
    assert json.loads(line) == {"t_out": 4, "pred": "Shdn", "tuple": None}


# -- round trips --------------------------------------------------------------


def test_program_round_trip_random():
    rng = random.Random(5)
    for i in range(100):
        q = random_query(
            rng,
            rigid_prob=0.3 if i % 3 == 0 else 0.0,
            recursive_prob=0.3 if i % 4 == 0 else 0.0,
            disconnect_prob=0.2 if i % 5 == 0 else 0.0,
        )
        text = render_program(q.program, q.output)
        back = parse_source(text)
        assert back.program == q.program
        assert back.query_name == q.output


def test_dataset_round_trip_random(full_program):
    rng = random.Random(6)
    for _ in range(100):
        data = random_dataset(rng, full_program)
        assert parse_dataset(render_dataset(data), full_program) == data


def test_stream_round_trip_random(shdn_query):
    rng = random.Random(7)
    for _ in range(100):
        ticks = sorted(rng.sample(range(0, 12), rng.randint(1, 5)))
        events = [
            StreamEvent(
                t,
                frozenset(
                    Fact("Temp", (rng.choice("ab"), rng.choice(["high", "low"])), t)
                    for _ in range(rng.randint(0, 2))
                ),
            )
            for t in ticks
        ]
        text = render_stream(events)
        assert parse_stream(text, shdn_query.program) == events


def test_program_round_trip_with_fact_rules():
    program = make_program(
        (Rule(parse_program("Obs(a, 3).").rules[0].head),),
        (PredicateSig("Obs", 2, True, True),),
    )
    assert parse_program(render_program(program)) == program
