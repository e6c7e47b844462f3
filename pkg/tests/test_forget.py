import random

import pytest

from tdlstream import Fact, UnsupportedQueryError, parse_dataset, segment
from tdlstream.forget import (
    UPDATE_TAG,
    ForgetInstance,
    build_forget_queries,
    decide_forget,
    forget_oracle,
    relevant_points,
)
from tdlstream.model import analyze, psi_name
from tdlstream.textio import parse_query

from .genutil import random_history, random_query


@pytest.fixture()
def paper_true(shdn_query):
    history = parse_dataset("Temp(a, high, 0). Temp(a, low, 1).", shdn_query.program)
    return ForgetInstance(shdn_query, history, 1, 1, 1)


@pytest.fixture()
def paper_false(shdn_query):
    history = parse_dataset("Temp(a, high, 0). Temp(a, high, 1).", shdn_query.program)
    return ForgetInstance(shdn_query, history, 1, 1, 1)


def test_relevant_points(paper_true, shdn_query):
    output, update = relevant_points(paper_true)
    assert output == (1, 4)  # [tau_out, tau_mem + rad], rad = 3
    assert update == (2, 7)  # (tau_in, tau_mem + 2 rad]

    zero = parse_query("@query Out.\n@pred E/2 edb temporal.\nE(X, T) -> Out(X, T).")
    inst = ForgetInstance(zero, frozenset(), 0, 0, 0)
    output, update = relevant_points(inst)
    assert output == (0, 0)
    assert update[0] > update[1]  # empty


def test_relevant_points_empty_output_interval(shdn_query):
    # tau_out far past tau_mem + rad: nothing to protect
    history = parse_dataset("Temp(a, high, 0).", shdn_query.program)
    inst = ForgetInstance(shdn_query, history, 10, 10, 2)
    output, _ = relevant_points(inst)
    assert output[0] > output[1]
    assert decide_forget(inst) is True


def test_build_structure(paper_true, shdn_query):
    q1, q2 = build_forget_queries(paper_true)
    # tag facts B(2)..B(7)
    tags = [
        r.head.time.shift
        for r in q1.program.fact_rules()
        if r.head.pred == UPDATE_TAG
    ]
    assert sorted(tags) == [2, 3, 4, 5, 6, 7]
    # the kept segment after tau_mem=1 is empty, so q2 embeds no Temp facts
    q2_data = {f.pred for f in q2.program.embedded_facts()}
    assert psi_name("Temp") not in q2_data
    q1_data = {
        f for f in q1.program.embedded_facts() if f.pred == psi_name("Temp")
    }
    assert q1_data == {
        Fact(psi_name("Temp"), ("a", "high"), 0),
        Fact(psi_name("Temp"), ("a", "low"), 1),
    }
    # output rules are grounded at each output-relevant point
    grounded = [
        r for r in q1.program.proper_rules() if r.head.pred == "Shdn"
    ]
    assert sorted(r.head.time.shift for r in grounded) == [1, 2, 3, 4]
    assert all(a.time.var is None for r in grounded for a in (r.head, *r.body))


def test_segment_consistency(shdn_query):
    rng = random.Random(5)
    for _ in range(10):
        history = random_history(rng, shdn_query.program, 2, objects=("a", "b"))
        inst = ForgetInstance(shdn_query, history, 2, 1, 1)
        _, q2 = build_forget_queries(inst)
        expected = {
            Fact(psi_name(f.pred), f.args, f.time)
            for f in segment(history, 1)
        }
        embedded = {
            f for f in q2.program.embedded_facts() if f.pred == psi_name("Temp")
        }
        assert embedded == expected


def test_paper_example(paper_true, paper_false):
    assert decide_forget(paper_true) is True
    assert decide_forget(paper_false) is False


def test_empty_history_trivially_forgettable(shdn_query):
    inst = ForgetInstance(shdn_query, frozenset(), 1, 1, 1)
    q1, q2 = build_forget_queries(inst)
    assert q1 == q2
    assert decide_forget(inst) is True


def test_rigid_facts_only_history():
    q = parse_query(
        "@query Out.\n@pred E/2 edb temporal.\n@pred Near/2 edb rigid.\n"
        "E(X, T) -> Out(X, T)."
    )
    history = frozenset({Fact("Near", ("a", "b"), None)})
    inst = ForgetInstance(q, history, 1, 1, 1)
    assert decide_forget(inst) is True  # segments keep rigid facts: D = D[tau_mem]


def test_fragment_rejections(atrisk_query, shdn_query):
    with pytest.raises(UnsupportedQueryError):
        decide_forget(ForgetInstance(atrisk_query, frozenset(), 1, 1, 1))
    pointy = parse_query(
        "@query Out.\n@pred E/2 edb temporal.\nE(X, 0), E(X, T) -> Out(X, T)."
    )
    with pytest.raises(UnsupportedQueryError):
        decide_forget(ForgetInstance(pointy, frozenset(), 1, 1, 1))
    rigidy = parse_query(
        "@query Out.\n@pred E/2 edb temporal.\n@pred R/1 edb rigid.\n"
        "E(X, T), R(X) -> Out(X, T)."
    )
    with pytest.raises(UnsupportedQueryError):
        decide_forget(ForgetInstance(rigidy, frozenset(), 1, 1, 1))


def test_instance_side_conditions(shdn_query):
    with pytest.raises(ValueError):
        ForgetInstance(shdn_query, frozenset(), 1, 3, 0).check()  # tau_out > tau_in+1
    with pytest.raises(ValueError):
        ForgetInstance(shdn_query, frozenset(), 1, 0, 1).check()  # tau_mem > tau_out
    # the online loop's post-emission state is allowed
    ForgetInstance(shdn_query, frozenset(), 1, 2, 0).check()


def test_oracle_paper_example(paper_true, paper_false):
    assert forget_oracle(paper_true, ["a"]).holds
    verdict = forget_oracle(paper_false, ["a"])
    assert not verdict.holds
    assert verdict.witness_update == frozenset({Fact("Temp", ("a", "high"), 2)})
    assert verdict.witness_time == 2


def test_oracle_empty_update_interval():
    q = parse_query("@query Out.\n@pred E/2 edb temporal.\nE(X, T) -> Out(X, T).")
    history = frozenset({Fact("E", ("a",), 0)})
    inst = ForgetInstance(q, history, 0, 0, 0)
    # rad 0: update interval empty, only U = {} is compared
    verdict = forget_oracle(inst, ["a"])
    assert not verdict.holds and verdict.witness_update == frozenset()
    assert decide_forget(inst) is False


def test_monotone_forgetting(shdn_query):
    rng = random.Random(29)
    for _ in range(12):
        history = random_history(rng, shdn_query.program, 2, objects=("a",))
        for tau_mem in (2, 1):
            inst = ForgetInstance(shdn_query, history, 2, 2, tau_mem)
            if decide_forget(inst):
                for earlier in range(tau_mem):
                    assert decide_forget(
                        ForgetInstance(shdn_query, history, 2, 2, earlier)
                    )


def _random_instances(seed, count, oracle_objects):
    from tdlstream.dtp import candidate_update_facts

    rng = random.Random(seed)
    produced = 0
    while produced < count:
        query = random_query(
            rng,
            n_edb=1,
            n_idb=rng.choice((2, 3)),
            extra_rules=rng.choice((0, 1)),
            edb_arities=(1,),
            constants=("red",),
            constant_prob=0.2,
        )
        rad = analyze(query.program).program_radius
        if rad > 4:
            continue
        tau_in = rng.randint(0, 2)
        tau_out = rng.randint(0, tau_in)
        tau_mem = rng.randint(0, tau_out)
        # keep the brute-force space exhaustible: the oracle must be able to
        # certify True, not just find witnesses
        span = range(tau_in + 1, tau_mem + 2 * rad + 1)
        if len(candidate_update_facts(query.program, oracle_objects, span)) > 10:
            continue
        history = random_history(rng, query.program, tau_in, objects=("a", "b"))
        yield ForgetInstance(query, history, tau_in, tau_out, tau_mem)
        produced += 1


def test_differential_against_oracle():
    # acceptance criterion 5, Forget leg; the oracle domain carries the
    # query constants so constant-guarded routes stay reachable
    objects = ["a", "b", "red"]
    for instance in _random_instances(211, 50, objects):
        verdict = forget_oracle(instance, objects, max_updates=5000)
        assert decide_forget(instance) == verdict.holds, instance
