"""The Definitive Time Point problem: are the answers at tau_out immune to
every future update of the history?

The general decider extends the query with rules that import and propagate
a single saturating update at tau_in + 1 over the critical domain (all
known objects plus one fresh one); answers are stable iff the extended
query sees nothing new.  For nonrecursive connected queries the propagation
rules are unnecessary: a bounded update over the critical time points
tau_in < tau <= tau_0 + rad suffices.  A brute-force oracle enumerates
updates directly from the definition.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .engine import evaluate_at
from .model import (
    Atom,
    EnumerationLimitError,
    Fact,
    PredicateSig,
    Program,
    Query,
    Rule,
    TimeTerm,
    UnsupportedQueryError,
    Var,
    analyze,
    dataset_objects,
    fact_sort_key,
    is_history,
    normalize_rigid_atoms,
    normalize_rigid_dataset,
    psi_name,
    psi_rename,
    validate_query,
)

FRESH_OBJECT = "__fresh_obj"
UPDATE_MARK = "__A"  # fresh unary temporal EDB
PROPAGATE = "__V"  # fresh unary temporal IDB


@dataclass(frozen=True)
class DtpInstance:
    query: Query
    history: frozenset[Fact]
    tau_in: int
    tau_out: int

    def check(self) -> None:
        validate_query(self.query).raise_if_failed()
        if not self.query.output_sig.temporal:
            raise UnsupportedQueryError("DTP is defined for temporal queries")
        if not is_history(self.history, self.tau_in):
            raise ValueError(f"history contains facts after tau_in={self.tau_in}")
        if self.tau_out > self.tau_in:
            raise ValueError("tau_out must be at most tau_in")


def critical_domain(instance: DtpInstance) -> list[str]:
    """All objects of the program and history plus one fresh object; updates
    over fresh objects embed homomorphically into updates over this set."""
    objs = instance.query.program.objects() | dataset_objects(instance.history)
    return sorted(objs) + [FRESH_OBJECT]


def critical_update(instance: DtpInstance) -> frozenset[Fact]:
    """The saturating update at tau_in + 1: the marker fact plus every fact
    of every temporal EDB predicate over the critical domain."""
    domain = critical_domain(instance)
    t = instance.tau_in + 1
    facts = {Fact(UPDATE_MARK, (), t)}
    for pred in instance.query.program.temporal_edb_preds():
        k = instance.query.program.sig(pred).object_arity
        for combo in itertools.product(domain, repeat=k):
            facts.add(Fact(pred, combo, t))
    return frozenset(facts)


def critical_query(instance: DtpInstance) -> Query:
    """The query over the renamed program plus the propagation rules that
    push the critical update forward through every later time point."""
    program = instance.query.program
    renamed = psi_rename(program)
    t = TimeTerm("T", 0)
    t1 = TimeTerm("T", 1)
    rules: list[Rule] = [
        Rule(Atom(PROPAGATE, (), t), (Atom(UPDATE_MARK, (), t),)),
        Rule(Atom(PROPAGATE, (), t1), (Atom(PROPAGATE, (), t),)),
    ]
    for pred in program.temporal_edb_preds():
        k = program.sig(pred).object_arity
        xs = tuple(Var(f"X{i}") for i in range(k))
        rules.append(
            Rule(Atom(psi_name(pred), xs, t), (Atom(pred, xs, t),))
        )
        rules.append(
            Rule(
                Atom(psi_name(pred), xs, t1),
                (Atom(PROPAGATE, (), t1), Atom(psi_name(pred), xs, t)),
            )
        )
    extra_sigs = (
        PredicateSig(UPDATE_MARK, 1, True, True),
        PredicateSig(PROPAGATE, 1, True, False),
    )
    return Query(instance.query.output, renamed.with_rules(rules, extra_sigs))


def decide_dtp_general(instance: DtpInstance, max_horizon: int | None = None) -> bool:
    """DTP via two evaluations of the critical query: it holds iff the
    critical update adds no answer at tau_out."""
    instance.check()
    cq = critical_query(instance)
    with_update = evaluate_at(
        cq, instance.history | critical_update(instance), instance.tau_out, max_horizon
    )
    without = evaluate_at(cq, instance.history, instance.tau_out, max_horizon)
    return with_update <= without


# ---------------------------------------------------------------------------
# Nonrecursive case
# ---------------------------------------------------------------------------


def _normalized(instance: DtpInstance) -> tuple[Query, frozenset[Fact]]:
    at = min(0, instance.tau_in)
    query = normalize_rigid_atoms(instance.query, at)
    history = normalize_rigid_dataset(instance.history, instance.query.program, at)
    return query, history


def _check_nonrecursive(query: Query) -> None:
    analysis = analyze(query.program)
    if not analysis.is_nonrecursive:
        raise UnsupportedQueryError("the bounded critical update needs a nonrecursive query")
    if not analysis.is_connected:
        raise UnsupportedQueryError("the bounded critical update needs a connected query")


def bounded_critical_update(instance: DtpInstance) -> frozenset[Fact]:
    """Every fact of every temporal EDB predicate over the critical domain
    at the critical time points tau_in < tau <= tau_0 + rad, where tau_0 is
    the larger of tau_out and the program's largest time point.  Rigid atoms
    are eliminated first (they become temporal atoms pinned at one point),
    so the update is temporal-only as updates must be."""
    instance.check()
    query, _history = _normalized(instance)
    _check_nonrecursive(query)
    analysis = analyze(query.program)
    domain = critical_domain(instance)
    tau0 = max(instance.tau_out, max(query.program.time_points(), default=instance.tau_out))
    facts: set[Fact] = set()
    for tau in range(instance.tau_in + 1, tau0 + analysis.program_radius + 1):
        for pred in query.program.temporal_edb_preds():
            k = query.program.sig(pred).object_arity
            for combo in itertools.product(domain, repeat=k):
                facts.add(Fact(pred, combo, tau))
    return frozenset(facts)


def decide_dtp_nonrecursive(instance: DtpInstance) -> bool:
    """DTP for nonrecursive connected queries: two plain evaluations against
    the bounded critical update."""
    instance.check()
    query, history = _normalized(instance)
    _check_nonrecursive(query)
    update = bounded_critical_update(instance)
    with_update = evaluate_at(query, history | update, instance.tau_out)
    without = evaluate_at(query, history, instance.tau_out)
    return with_update <= without


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DtpVerdict:
    holds: bool
    witness: frozenset[Fact] | None = None  # an update that changes the answers


def candidate_update_facts(
    program: Program, objects: list[str], times: range
) -> list[Fact]:
    """Ground instances of the temporal EDB body atoms, with variable
    positions ranging over the given objects and constants kept in place.
    A fact matching no body atom can never enter a derivation, so only
    these candidates are worth enumerating as update members."""
    patterns: set[tuple[str, tuple[str | Var, ...]]] = set()
    for rule in program.proper_rules():
        for atom in rule.body:
            if atom.time is not None and program.sig(atom.pred).edb:
                patterns.add((atom.pred, atom.args))
    out: set[Fact] = set()
    for pred, args in patterns:
        variables = sorted({t.name for t in args if isinstance(t, Var)})
        for values in itertools.product(objects, repeat=len(variables)):
            binding = dict(zip(variables, values))
            combo = tuple(
                binding[t.name] if isinstance(t, Var) else t for t in args
            )
            for tau in times:
                out.add(Fact(pred, combo, tau))
    return sorted(out, key=fact_sort_key)


def _stable_under(instance: DtpInstance, update: frozenset[Fact]) -> bool:
    before = evaluate_at(instance.query, instance.history, instance.tau_out)
    after = evaluate_at(instance.query, instance.history | update, instance.tau_out)
    return after <= before


def _shrink_witness(instance: DtpInstance, update: frozenset[Fact]) -> frozenset[Fact]:
    witness = set(update)
    for fact in sorted(update, key=fact_sort_key):
        trial = frozenset(witness - {fact})
        if not _stable_under(instance, trial):
            witness.remove(fact)
    return frozenset(witness)


def dtp_oracle(
    instance: DtpInstance,
    time_bound: int,
    objects: list[str] | None = None,
    max_updates: int = 4096,
    method: str = "auto",
) -> DtpVerdict:
    """Decide DTP straight from the definition over a finite update space.

    Updates range over subsets of the candidate facts with times in
    (tau_in, tau_in + time_bound].  ``method``:

    * ``"enumerate"``: try every subset in increasing size, erroring out
      when there are more than ``max_updates`` of them;
    * ``"monotone"``: check only the maximal candidate update, exact because
      entailment is monotone (any violating update stays violating when
      extended), then shrink the witness greedily;
    * ``"auto"``: enumerate when the subset count fits the cap.

    For a nonrecursive connected query with
    ``time_bound >= tau_0 - tau_in + rad`` the verdict is exact; with a
    smaller bound a False is still definite but True is only "no witness in
    range".
    """
    instance.check()
    if objects is None:
        objects = critical_domain(instance)
    times = range(instance.tau_in + 1, instance.tau_in + time_bound + 1)
    candidates = candidate_update_facts(instance.query.program, objects, times)

    if method not in ("auto", "enumerate", "monotone"):
        raise ValueError(f"unknown method {method!r}")
    enumerable = len(candidates) <= 30 and 2 ** len(candidates) <= max_updates

    if method == "enumerate" or (method == "auto" and enumerable):
        tried = 0
        for size in range(len(candidates) + 1):
            for combo in itertools.combinations(candidates, size):
                tried += 1
                if tried > max_updates:
                    raise EnumerationLimitError(
                        f"no witness among the first {max_updates} updates and "
                        f"2^{len(candidates)} remain; cannot certify True"
                    )
                update = frozenset(combo)
                if not _stable_under(instance, update):
                    return DtpVerdict(False, update)
        return DtpVerdict(True)

    full = frozenset(candidates)
    if _stable_under(instance, full):
        return DtpVerdict(True)
    return DtpVerdict(False, _shrink_witness(instance, full))
