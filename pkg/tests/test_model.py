import random

import pytest
from hypothesis import given, strategies as st

from tdlstream import (
    Fact,
    analyze,
    evaluate_at,
    segment,
    validate,
    validate_query,
)
from tdlstream.model import (
    Atom,
    Program,
    Query,
    Rule,
    TimeTerm,
    Var,
    make_program,
    normalize_rigid_atoms,
    normalize_rigid_dataset,
    rigid_rename,
    topological_ranks,
)
from tdlstream.textio import parse_program

from .genutil import random_dataset, random_query


def test_paper_rules_validate(full_program):
    assert validate(full_program).ok


def test_unsafe_rule_reported():
    program = parse_program("Flag(X, T) -> Cool(Y, T).")
    report = validate(program)
    assert not report.ok
    assert any("Y" in e.message and "unsafe" in e.message for e in report.errors)
    assert report.errors[0].rule_index == 0


def test_edb_head_with_body_rejected():
    program = parse_program(
        "@pred Temp/3 edb temporal.\n@pred Obs/2 edb temporal.\n"
        "Obs(X, T) -> Temp(X, high, T).",
    )
    report = validate(program)
    assert any("EDB" in e.message for e in report.errors)


def test_reserved_marker_rejected():
    program = parse_program("Aux__r(X, T) -> Out(X, T).")
    assert any("__" in e.message for e in validate(program).errors)


def test_non_ground_fact_rejected():
    program = parse_program("Flag(X, 0).")
    assert not validate(program).ok


def test_analysis_full_program(full_program):
    a = analyze(full_program)
    assert not a.is_nonrecursive  # AtRisk feeds itself
    assert a.rank_of is None
    assert a.is_connected
    assert a.max_rule_radius == 2  # the malfunction back-offset
    assert a.program_radius == 12
    assert ("AtRisk", "AtRisk") in a.dependency_edges


def test_analysis_shdn(shdn_query):
    a = analyze(shdn_query.program)
    assert a.is_nonrecursive and a.is_connected
    assert a.rank_of == {"Temp": 0, "Flag": 1, "Cool": 2, "Shdn": 3}
    assert a.program_rank == 3
    assert a.program_radius == 3


def test_analysis_empty_program():
    a = analyze(Program((), {}))
    assert a.program_radius == 0
    assert a.is_nonrecursive and a.is_connected
    assert a.program_rank == 0


def test_disconnected_rule_detected():
    program = parse_program(
        "@pred E/2 edb temporal.\n@pred F/2 edb temporal.\n"
        "@pred Out/2 idb temporal.\n"
        "E(X, T), F(Y, U) -> Out(X, T)."
    )
    assert not analyze(program).is_connected


def test_radius_monotone_under_rule_addition():
    rng = random.Random(7)
    for _ in range(20):
        q = random_query(rng, recursive_prob=0.2)
        base = analyze(q.program).program_radius
        extra = Rule(
            Atom("I0", (Var("X"),), TimeTerm("T", 0)),
            (Atom("E0", tuple([Var("X")] * q.program.sig("E0").object_arity), TimeTerm("T", 0)),),
        )
        grown = analyze(Program(q.program.rules + (extra,), q.program.sigs))
        assert grown.program_radius >= base


def test_rank_matches_longest_path():
    rng = random.Random(11)
    for _ in range(20):
        q = random_query(rng, extra_rules=2)
        ranks = analyze(q.program).rank_of
        assert ranks is not None
        # longest dependency path, recomputed directly edge by edge
        edges: dict[str, set[str]] = {}
        for r in q.program.proper_rules():
            edges.setdefault(r.head.pred, set()).update(b.pred for b in r.body)

        def longest(p: str) -> int:
            return max((longest(x) + 1 for x in edges.get(p, ())), default=0)

        for pred in q.program.sigs:
            assert ranks[pred] == longest(pred)
        heads = {r.head.pred for r in q.program.proper_rules()}
        for pred in q.program.sigs:
            assert (ranks[pred] == 0) == (pred not in heads)


def test_rank_undefined_for_recursive(full_program):
    assert topological_ranks(full_program) is None


# -- tau-segments -----------------------------------------------------------


def _facts(items):
    return frozenset(
        Fact("P", (o,), t) if t is not None else Fact("R", (o,), None)
        for o, t in items
    )


def test_segment_examples(shdn_query):
    data = frozenset(
        {Fact("Temp", ("a", "high"), 0), Fact("Temp", ("a", "high"), 1), Fact("Near", ("a", "b"), None)}
    )
    assert segment(data, 0) == frozenset(
        {Fact("Temp", ("a", "high"), 1), Fact("Near", ("a", "b"), None)}
    )
    assert segment(data, -100) == data
    assert segment(frozenset({Fact("Temp", ("a", "high"), 0)}), 0) == frozenset()


fact_sets = st.frozensets(
    st.tuples(st.sampled_from("ab"), st.one_of(st.none(), st.integers(-5, 5))),
    max_size=8,
)


@given(fact_sets, st.integers(-6, 6))
def test_segment_idempotent(items, tau):
    data = _facts(items)
    assert segment(segment(data, tau), tau) == segment(data, tau)


@given(fact_sets, st.integers(-6, 6), st.integers(0, 4))
def test_segment_antitone(items, tau, delta):
    data = _facts(items)
    assert segment(data, tau + delta) <= segment(data, tau)


# -- rigid-atom elimination --------------------------------------------------


def test_normalize_rigid_rewrites_rule(atrisk_query):
    normalized = normalize_rigid_atoms(atrisk_query)
    risky = [r for r in normalized.program.rules if r.head.pred == "AtRisk" and len(r.body) == 2]
    (rule,) = risky
    near = [a for a in rule.body if a.pred == rigid_rename("Near")]
    assert near and near[0].time == TimeTerm(None, 0)
    assert rigid_rename("Near") in normalized.program.sigs
    assert "Near" not in normalized.program.sigs


def test_normalize_rigid_noop_without_rigid(shdn_query):
    assert normalize_rigid_atoms(shdn_query) is shdn_query


def test_normalize_rigid_dataset(full_program):
    data = frozenset({Fact("Near", ("a", "b"), None)})
    assert normalize_rigid_dataset(data, full_program) == frozenset(
        {Fact(rigid_rename("Near"), ("a", "b"), 0)}
    )


def test_normalize_preserves_answers():
    rng = random.Random(23)
    checked = 0
    while checked < 20:
        q = random_query(rng, rigid_prob=1.0, extra_rules=2)
        if not analyze(q.program).is_nonrecursive:
            continue
        data = random_dataset(rng, q.program, times=range(0, 4))
        nq = normalize_rigid_atoms(q)
        ndata = normalize_rigid_dataset(data, q.program)
        for tau in range(-1, 5):
            assert evaluate_at(q, data, tau) == evaluate_at(nq, ndata, tau)
        checked += 1


def test_make_program_shape_conflict():
    with pytest.raises(Exception):
        make_program(
            (
                Rule(Atom("P", (Var("X"),), TimeTerm("T", 0)),
                     (Atom("E", (Var("X"),), TimeTerm("T", 0)),)),
                Rule(Atom("P", (Var("X"), Var("X")), TimeTerm("T", 0)),
                     (Atom("E", (Var("X"),), TimeTerm("T", 0)),)),
            )
        )


def test_validate_query_requires_idb_output(shdn_query):
    bad = Query("Temp", shdn_query.program)
    assert not validate_query(bad).ok
