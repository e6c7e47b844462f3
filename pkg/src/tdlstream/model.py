"""Core data model for temporal Datalog: terms, atoms, rules, programs,
queries and datasets, plus validation and the static analyses (rank,
radius, recursivity, connectedness) that the decision procedures rely on.

Time points are 64-bit-ish machine integers (Python ints).  Complexity
results for this language family assume unary-coded numbers; the artifact
stores plain binary integers, so wall-clock behaviour is not tied to those
bounds.  All values here are immutable after construction and every
operation is a pure function.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

FRESH_MARKER = "__"


class TdlError(Exception):
    """Base class for all errors raised by this package."""


class UnsupportedQueryError(TdlError):
    """The query lies outside the fragment a procedure supports."""


class EnumerationLimitError(TdlError):
    """A brute-force oracle was asked to enumerate past its cap."""


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Var:
    """An object variable.  Object constants are plain strings."""

    name: str

    def __repr__(self) -> str:
        return f"Var({self.name!r})"


ObjTerm = str | Var


@dataclass(frozen=True, slots=True)
class TimeTerm:
    """A time point (``var is None``) or a variable plus integer offset.

    ``TimeTerm(None, 3)`` is the point 3; ``TimeTerm("T", -2)`` is T-2.
    """

    var: str | None
    shift: int = 0

    @property
    def is_point(self) -> bool:
        return self.var is None

    @property
    def offset(self) -> int:
        """Offset of the term: 0 for points and bare variables."""
        return 0 if self.var is None else self.shift

    def instantiate(self, value: int) -> int:
        """Time value once the variable is bound to ``value``."""
        return self.shift if self.var is None else value + self.shift

    def shifted(self, delta: int) -> TimeTerm:
        if self.var is None:
            return TimeTerm(None, self.shift + delta)
        return self

    def __repr__(self) -> str:
        if self.var is None:
            return f"TimeTerm(@{self.shift})"
        if self.shift == 0:
            return f"TimeTerm({self.var})"
        return f"TimeTerm({self.var}{self.shift:+d})"


def time_point(value: int) -> TimeTerm:
    return TimeTerm(None, value)


def time_var(name: str, shift: int = 0) -> TimeTerm:
    return TimeTerm(name, shift)


# ---------------------------------------------------------------------------
# Signatures, atoms, rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class PredicateSig:
    """Predicate signature.  ``arity`` counts every position including the
    trailing time position of temporal predicates; mixed sort profiles
    (time anywhere but last, or several time positions) are not
    representable and get rejected at the parsing/inference layer.
    """

    name: str
    arity: int
    temporal: bool
    edb: bool

    @property
    def object_arity(self) -> int:
        return self.arity - 1 if self.temporal else self.arity

    @property
    def origin(self) -> str:
        return "edb" if self.edb else "idb"

    @property
    def sorts(self) -> tuple[str, ...]:
        if self.temporal:
            return ("object",) * (self.arity - 1) + ("time",)
        return ("object",) * self.arity


@dataclass(frozen=True, slots=True)
class Atom:
    """An atom.  ``args`` holds the object positions; ``time`` is the time
    argument of temporal atoms and ``None`` for rigid ones.
    """

    pred: str
    args: tuple[str | Var, ...]
    time: TimeTerm | None = None

    @property
    def is_temporal(self) -> bool:
        return self.time is not None

    @property
    def arity(self) -> int:
        return len(self.args) + (1 if self.time is not None else 0)

    def object_vars(self) -> Iterator[Var]:
        for a in self.args:
            if isinstance(a, Var):
                yield a

    def time_vars(self) -> Iterator[str]:
        if self.time is not None and self.time.var is not None:
            yield self.time.var

    def constants(self) -> Iterator[str]:
        for a in self.args:
            if isinstance(a, str):
                yield a

    def is_ground(self) -> bool:
        return not any(isinstance(a, Var) for a in self.args) and (
            self.time is None or self.time.var is None
        )

    def to_fact(self) -> Fact:
        if not self.is_ground():
            raise ValueError(f"atom {self} is not ground")
        t = None if self.time is None else self.time.shift
        return Fact(self.pred, tuple(self.args), t)  # type: ignore[arg-type]


@dataclass(frozen=True, slots=True)
class Rule:
    """A rule ``body -> head``.  A fact is a rule with an empty body."""

    head: Atom
    body: tuple[Atom, ...] = ()

    @property
    def is_fact(self) -> bool:
        return not self.body

    def atoms(self) -> Iterator[Atom]:
        yield self.head
        yield from self.body

    def head_vars(self) -> set[str]:
        vs = {v.name for v in self.head.object_vars()}
        vs.update(self.head.time_vars())
        return vs

    def body_vars(self) -> set[str]:
        vs: set[str] = set()
        for a in self.body:
            vs.update(v.name for v in a.object_vars())
            vs.update(a.time_vars())
        return vs

    def time_variables(self) -> set[str]:
        vs: set[str] = set()
        for a in self.atoms():
            vs.update(a.time_vars())
        return vs

    def radius(self) -> int:
        """Max gap between the head time offset and a body time offset.

        Zero for rules without a head/body time-variable pair sharing the
        single time variable (in particular for facts and rigid rules).
        """
        if self.head.time is None or self.head.time.var is None:
            return 0
        h = self.head.time.offset
        gaps = [
            abs(h - a.time.offset)
            for a in self.body
            if a.time is not None and a.time.var is not None
        ]
        return max(gaps, default=0)


# ---------------------------------------------------------------------------
# Facts and datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Fact:
    """A ground rigid (``time is None``) or temporal fact."""

    pred: str
    args: tuple[str, ...]
    time: int | None = None

    def to_atom(self) -> Atom:
        t = None if self.time is None else TimeTerm(None, self.time)
        return Atom(self.pred, self.args, t)

    def shifted(self, delta: int) -> Fact:
        if self.time is None:
            return self
        return Fact(self.pred, self.args, self.time + delta)


def fact_sort_key(fact: Fact) -> tuple:
    """Deterministic emission order: predicate, argument tuple, time."""
    return (fact.pred, fact.args, fact.time is not None, fact.time or 0)


Dataset = frozenset  # frozenset[Fact]


def dataset(facts: Iterable[Fact]) -> frozenset[Fact]:
    return frozenset(facts)


def segment(data: frozenset[Fact], tau: int) -> frozenset[Fact]:
    """The tau-segment: all rigid facts plus temporal facts strictly after tau."""
    return frozenset(f for f in data if f.time is None or f.time > tau)


def shift_dataset(data: frozenset[Fact], delta: int) -> frozenset[Fact]:
    return frozenset(f.shifted(delta) for f in data)


def dataset_objects(data: Iterable[Fact]) -> set[str]:
    objs: set[str] = set()
    for f in data:
        objs.update(f.args)
    return objs


def dataset_times(data: Iterable[Fact]) -> set[int]:
    return {f.time for f in data if f.time is not None}


def is_history(data: Iterable[Fact], tau_in: int) -> bool:
    """Rigid facts plus temporal facts with time argument at most tau_in."""
    return all(f.time is None or f.time <= tau_in for f in data)


def is_update(data: Iterable[Fact], tau_in: int) -> bool:
    """Temporal facts only, all strictly after tau_in."""
    return all(f.time is not None and f.time > tau_in for f in data)


# ---------------------------------------------------------------------------
# Programs and queries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Program:
    rules: tuple[Rule, ...]
    sigs: Mapping[str, PredicateSig] = field(default_factory=dict)

    def sig(self, name: str) -> PredicateSig:
        return self.sigs[name]

    def proper_rules(self) -> Iterator[Rule]:
        return (r for r in self.rules if not r.is_fact)

    def fact_rules(self) -> Iterator[Rule]:
        return (r for r in self.rules if r.is_fact)

    def embedded_facts(self) -> frozenset[Fact]:
        return frozenset(r.head.to_fact() for r in self.fact_rules())

    def temporal_edb_preds(self) -> list[str]:
        return sorted(
            s.name for s in self.sigs.values() if s.edb and s.temporal
        )

    def objects(self) -> set[str]:
        objs: set[str] = set()
        for r in self.rules:
            for a in r.atoms():
                objs.update(a.constants())
        return objs

    def time_points(self) -> set[int]:
        pts: set[int] = set()
        for r in self.rules:
            for a in r.atoms():
                if a.time is not None and a.time.var is None:
                    pts.add(a.time.shift)
        return pts

    def with_rules(self, extra: Iterable[Rule],
                   extra_sigs: Iterable[PredicateSig] = ()) -> Program:
        sigs = dict(self.sigs)
        for s in extra_sigs:
            sigs[s.name] = s
        return Program(self.rules + tuple(extra), sigs)


def infer_signatures(
    rules: Iterable[Rule],
    declared: Iterable[PredicateSig] = (),
) -> dict[str, PredicateSig]:
    """Derive signatures from atom shapes.

    A predicate is temporal iff its atoms carry a time argument, and IDB iff
    it heads some rule with a non-empty body.  Explicit declarations win;
    shape conflicts raise, inference/declaration conflicts are left for
    ``validate`` to report.
    """
    sigs: dict[str, PredicateSig] = {s.name: s for s in declared}
    seen: dict[str, tuple[int, bool]] = {}
    idb: set[str] = set()
    for r in rules:
        if not r.is_fact:
            idb.add(r.head.pred)
        for a in r.atoms():
            shape = (len(a.args), a.time is not None)
            prev = seen.setdefault(a.pred, shape)
            if prev != shape:
                raise TdlError(
                    f"predicate {a.pred} used with conflicting shapes "
                    f"{prev} and {shape}"
                )
    for name, (nobj, temporal) in seen.items():
        if name not in sigs:
            sigs[name] = PredicateSig(
                name, nobj + (1 if temporal else 0), temporal, name not in idb
            )
    return sigs


def make_program(
    rules: Iterable[Rule],
    declared: Iterable[PredicateSig] = (),
) -> Program:
    rules = tuple(rules)
    return Program(rules, infer_signatures(rules, declared))


@dataclass(frozen=True)
class Query:
    """A query: an output predicate paired with the program defining it."""

    output: str
    program: Program

    @property
    def output_sig(self) -> PredicateSig:
        return self.program.sig(self.output)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationError:
    rule_index: int | None
    message: str

    def __str__(self) -> str:
        where = "program" if self.rule_index is None else f"rule {self.rule_index}"
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[ValidationError, ...]

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_if_failed(self) -> None:
        if self.errors:
            raise TdlError(
                "invalid program: " + "; ".join(str(e) for e in self.errors)
            )


def validate(program: Program) -> ValidationReport:
    """Check the well-formedness rules; violations are reported as data."""
    errors: list[ValidationError] = []

    def err(idx: int | None, msg: str) -> None:
        errors.append(ValidationError(idx, msg))

    for name, sig in program.sigs.items():
        if FRESH_MARKER in name:
            err(None, f"predicate name {name!r} uses the reserved '__' marker")
        if sig.temporal and sig.arity < 1:
            err(None, f"temporal predicate {name} needs a time position")

    for i, rule in enumerate(program.rules):
        for atom in rule.atoms():
            sig = program.sigs.get(atom.pred)
            if sig is None:
                err(i, f"undeclared predicate {atom.pred}")
                continue
            if atom.arity != sig.arity or (atom.time is not None) != sig.temporal:
                err(i, f"atom {atom.pred}/{atom.arity} does not match "
                       f"declared {sig.name}/{sig.arity} ({'temporal' if sig.temporal else 'rigid'})")
            for c in atom.constants():
                if FRESH_MARKER in c:
                    err(i, f"object name {c!r} uses the reserved '__' marker")

        head_sig = program.sigs.get(rule.head.pred)
        if rule.body and head_sig is not None and head_sig.edb:
            err(i, f"EDB predicate {rule.head.pred} may not head a rule with a body")

        unbound = rule.head_vars() - rule.body_vars()
        if unbound:
            # covers non-ground facts too: a fact has an empty body
            names = ", ".join(sorted(unbound))
            err(i, f"unsafe rule: head variable(s) {names} not bound in the body")

    return ValidationReport(tuple(errors))


def validate_query(query: Query) -> ValidationReport:
    report = validate(query.program)
    errors = list(report.errors)
    sig = query.program.sigs.get(query.output)
    if sig is None:
        errors.append(ValidationError(None, f"output predicate {query.output} not in program"))
    elif sig.edb:
        errors.append(ValidationError(None, f"output predicate {query.output} must be IDB"))
    return ValidationReport(tuple(errors))


# ---------------------------------------------------------------------------
# Static analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProgramAnalysis:
    rank_of: Mapping[str, int] | None  # None when the program is recursive
    program_rank: int | None
    max_rule_radius: int
    program_radius: int
    is_nonrecursive: bool
    is_connected: bool
    has_time_points: bool
    has_objects: bool
    dependency_edges: frozenset[tuple[str, str]]


def rule_is_connected(rule: Rule) -> bool:
    """At most one time variable, in the head whenever it is in the body."""
    tvars = rule.time_variables()
    if len(tvars) > 1:
        return False
    if not tvars:
        return True
    (tv,) = tvars
    in_body = any(tv in a.time_vars() for a in rule.body)
    in_head = tv in set(rule.head.time_vars())
    return in_head or not in_body


def analyze(program: Program) -> ProgramAnalysis:
    """Populate the static measures used by the decision procedures."""
    edges: set[tuple[str, str]] = set()
    for r in program.proper_rules():
        for b in r.body:
            edges.add((r.head.pred, b.pred))

    order = topological_ranks(program)
    nonrec = order is not None

    radii = [r.radius() for r in program.rules]
    max_radius = max(radii, default=0)

    return ProgramAnalysis(
        rank_of=order,
        program_rank=max(order.values(), default=0) if order is not None else None,
        max_rule_radius=max_radius,
        program_radius=len(program.rules) * max_radius,
        is_nonrecursive=nonrec,
        is_connected=all(rule_is_connected(r) for r in program.rules),
        has_time_points=bool(program.time_points()),
        has_objects=bool(program.objects()),
        dependency_edges=frozenset(edges),
    )


def topological_ranks(program: Program) -> dict[str, int] | None:
    """Rank of every predicate, or None if the dependency graph is cyclic.

    rank(P) is the length of the longest dependency chain down from P;
    predicates never in proper-head position (and embedded facts) get 0.
    """
    deps: dict[str, set[str]] = {name: set() for name in program.sigs}
    for r in program.proper_rules():
        deps.setdefault(r.head.pred, set()).update(b.pred for b in r.body)
        for b in r.body:
            deps.setdefault(b.pred, set())

    ranks: dict[str, int] = {}
    visiting: set[str] = set()

    def visit(p: str) -> int | None:
        if p in ranks:
            return ranks[p]
        if p in visiting:
            return None  # cycle
        visiting.add(p)
        best = 0
        for q in deps.get(p, ()):
            rq = visit(q)
            if rq is None:
                return None
            best = max(best, rq + 1)
        visiting.discard(p)
        ranks[p] = best
        return best

    for p in deps:
        if visit(p) is None:
            return None
    return ranks


# ---------------------------------------------------------------------------
# Rigid-atom elimination
# ---------------------------------------------------------------------------

RIGID_SUFFIX = "__t"


def rigid_rename(name: str) -> str:
    return name + RIGID_SUFFIX


def normalize_rigid_atoms(query: Query, at: int = 0) -> Query:
    """Replace every rigid predicate with a temporal twin anchored at ``at``.

    Answer semantics are preserved when accompanying datasets are rewritten
    with :func:`normalize_rigid_dataset`; rigid outputs are renamed too, so
    compare answers modulo the renaming.
    """
    rigid = sorted(s.name for s in query.program.sigs.values() if not s.temporal)
    if not rigid:
        return query
    rigid_set = set(rigid)
    point = TimeTerm(None, at)

    def conv(atom: Atom) -> Atom:
        if atom.pred in rigid_set:
            return Atom(rigid_rename(atom.pred), atom.args, point)
        return atom

    rules = tuple(
        Rule(conv(r.head), tuple(conv(b) for b in r.body)) for r in query.program.rules
    )
    sigs = dict(query.program.sigs)
    for name in rigid:
        old = sigs.pop(name)
        sigs[rigid_rename(name)] = PredicateSig(
            rigid_rename(name), old.arity + 1, True, old.edb
        )
    out = query.output if query.output not in rigid_set else rigid_rename(query.output)
    return Query(out, Program(rules, sigs))


def normalize_rigid_dataset(
    data: frozenset[Fact], program: Program, at: int = 0
) -> frozenset[Fact]:
    """Rewrite rigid facts for a query normalized with the same ``at``."""
    rigid = {s.name for s in program.sigs.values() if not s.temporal}
    return frozenset(
        Fact(rigid_rename(f.pred), f.args, at) if f.pred in rigid and f.time is None else f
        for f in data
    )


# ---------------------------------------------------------------------------
# The psi renaming shared by the decision constructions
# ---------------------------------------------------------------------------

PSI_SUFFIX = "__r"


def psi_name(name: str) -> str:
    return name + PSI_SUFFIX


def psi_rename(program: Program) -> Program:
    """Rename every temporal EDB predicate P to a fresh temporal IDB twin.

    The original signatures stay registered so constructions can add rules
    that import real data into the renamed predicates.
    """
    temporal_edb = set(program.temporal_edb_preds())

    def conv(atom: Atom) -> Atom:
        if atom.pred in temporal_edb:
            return Atom(psi_name(atom.pred), atom.args, atom.time)
        return atom

    rules = tuple(
        Rule(conv(r.head), tuple(conv(b) for b in r.body)) for r in program.rules
    )
    sigs = dict(program.sigs)
    for name in temporal_edb:
        old = sigs[name]
        sigs[psi_name(name)] = PredicateSig(psi_name(name), old.arity, True, False)
    return Program(rules, sigs)


def psi_rename_facts(data: Iterable[Fact], program: Program) -> frozenset[Fact]:
    temporal_edb = set(program.temporal_edb_preds())
    return frozenset(
        Fact(psi_name(f.pred), f.args, f.time) if f.pred in temporal_edb else f
        for f in data
    )


# ---------------------------------------------------------------------------
# Misc helpers shared by the decision modules
# ---------------------------------------------------------------------------


def all_objects(query: Query, data: Iterable[Fact] = ()) -> set[str]:
    return query.program.objects() | dataset_objects(data)


def object_tuples(domain: Iterable[str], arity: int) -> Iterator[tuple[str, ...]]:
    return itertools.product(sorted(domain), repeat=arity)
