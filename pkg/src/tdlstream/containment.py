"""Containment of nonrecursive temporal queries.

Two routes are provided and cross-checked: the unfolding route turns each
query into a union of conjunctive queries at a set of anchor atoms and
searches for containment mappings disjunct by disjunct; the grounding route
rewrites a connected time-point-free query into a time-grounded one over
[0, 2m] so that containment at the single anchor time m coincides with
containment everywhere.  A sampling oracle based on canonical databases and
random datasets double-checks both.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

from .engine import evaluate, evaluate_at, ground_rules, TimeWindow
from .model import (
    Atom,
    Fact,
    PredicateSig,
    Program,
    Query,
    Rule,
    TdlError,
    TimeTerm,
    UnsupportedQueryError,
    Var,
    analyze,
)


class UnfoldingLimitError(TdlError):
    """The unfolding produced more distinct disjuncts than the cap allows."""


DEFAULT_UNFOLD_CAP = 100_000


# ---------------------------------------------------------------------------
# Time values inside conjunctive queries
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SymTime:
    """The symbolic anchor time plus an offset (anchor + k)."""

    offset: int


@dataclass(frozen=True, slots=True)
class FreeTime:
    """A still-free time variable plus an offset (only arises when a body
    time variable is not connected to the head)."""

    name: str
    offset: int


TimeVal = "int | None | SymTime | FreeTime"


def _time_add(value, delta: int):
    if isinstance(value, int):
        return value + delta
    if isinstance(value, SymTime):
        return SymTime(value.offset + delta)
    if isinstance(value, FreeTime):
        return FreeTime(value.name, value.offset + delta)
    raise TypeError(value)


def _time_key(value) -> tuple:
    if value is None:
        return (0, 0, "")
    if isinstance(value, int):
        return (1, value, "")
    if isinstance(value, SymTime):
        return (2, value.offset, "")
    return (3, value.offset, value.name)


# ---------------------------------------------------------------------------
# Substitutions for unfolding
# ---------------------------------------------------------------------------


class _Subst:
    """Bindings for object variables (to terms) and time variables (to
    time values), with path compression on resolve."""

    __slots__ = ("obj", "time")

    def __init__(self, obj=None, time=None) -> None:
        self.obj: dict[str, str | Var] = obj or {}
        self.time: dict[str, object] = time or {}

    def branch(self) -> _Subst:
        return _Subst(dict(self.obj), dict(self.time))

    def resolve_obj(self, term: str | Var) -> str | Var:
        while isinstance(term, Var) and term.name in self.obj:
            term = self.obj[term.name]
        return term

    def unify_obj(self, a: str | Var, b: str | Var) -> bool:
        a = self.resolve_obj(a)
        b = self.resolve_obj(b)
        if a == b:
            return True
        if isinstance(a, Var):
            self.obj[a.name] = b
            return True
        if isinstance(b, Var):
            self.obj[b.name] = a
            return True
        return False

    def resolve_time(self, value):
        while isinstance(value, FreeTime) and value.name in self.time:
            value = _time_add(self.time[value.name], value.offset)
        return value

    def unify_time(self, a, b) -> bool:
        a = self.resolve_time(a)
        b = self.resolve_time(b)
        if a == b:
            return True
        if isinstance(a, FreeTime):
            self.time[a.name] = _time_add(b, -a.offset)
            return True
        if isinstance(b, FreeTime):
            self.time[b.name] = _time_add(a, -b.offset)
            return True
        return False


def _term_time_value(time: TimeTerm | None):
    if time is None:
        return None
    if time.var is None:
        return time.shift
    return FreeTime(time.var, time.shift)


# ---------------------------------------------------------------------------
# Conjunctive queries
# ---------------------------------------------------------------------------

CQAtom = tuple  # (pred, args: tuple[str | Var, ...], time: TimeVal)


@dataclass(frozen=True)
class CQ:
    """One disjunct: a head tuple and a set of EDB body atoms, with
    variables renamed canonically (head variables first)."""

    head: tuple
    atoms: frozenset


def _atom_sort_key(atom: CQAtom) -> tuple:
    pred, args, time = atom
    return (
        pred,
        _time_key(time),
        tuple(("v", a.name) if isinstance(a, Var) else ("c", a) for a in args),
    )


def canonical_cq(head_terms: tuple, atoms: list[CQAtom]) -> CQ:
    renaming: dict[str, Var] = {}

    def rename(term, assign: bool):
        if not isinstance(term, Var):
            return term
        if term.name not in renaming:
            if not assign:
                return Var("?")
            renaming[term.name] = Var(f"h{len(renaming)}")
        return renaming[term.name]

    head = tuple(rename(t, True) for t in head_terms)
    # stable order with unnamed variables masked, then name in that order
    masked = sorted(
        atoms,
        key=lambda a: (
            a[0],
            _time_key(a[2]),
            tuple(("v", rename(t, False).name) if isinstance(t, Var) else ("c", t) for t in a[1]),
        ),
    )
    counter = itertools.count()
    out: list[CQAtom] = []
    for pred, args, time in masked:
        new_args = []
        for t in args:
            if isinstance(t, Var):
                if t.name not in renaming:
                    renaming[t.name] = Var(f"c{next(counter)}")
                new_args.append(renaming[t.name])
            else:
                new_args.append(t)
        if isinstance(time, FreeTime) and time.name not in renaming:
            renaming[time.name] = Var(f"c{next(counter)}")
        if isinstance(time, FreeTime):
            time = FreeTime(renaming[time.name].name, time.offset)
        out.append((pred, tuple(new_args), time))
    return CQ(head, frozenset(out))


class _CQPool:
    """Collects distinct disjuncts; with pruning enabled it keeps, per head,
    only the subset-minimal atom sets.  Dropping a superset is sound on both
    sides of a containment check: on the forall side the kept subset implies
    it (identity mapping), on the exists side any mapping restricts to it."""

    def __init__(self, cap: int, prune: bool) -> None:
        self.cap = cap
        self.prune = prune
        self.seen: set[CQ] = set()
        self.by_head: dict[tuple, list[CQ]] = {}
        self.distinct = 0

    def insert(self, cq: CQ) -> None:
        if cq in self.seen:
            return
        self.seen.add(cq)
        self.distinct += 1
        if self.distinct > self.cap:
            raise UnfoldingLimitError(
                f"unfolding exceeded {self.cap} distinct disjuncts"
            )
        group = self.by_head.setdefault(cq.head, [])
        if self.prune:
            for kept in group:
                if kept.atoms <= cq.atoms:
                    return
            group[:] = [k for k in group if not (cq.atoms < k.atoms)]
        group.append(cq)

    def result(self) -> list[CQ]:
        out = [cq for group in self.by_head.values() for cq in group]
        out.sort(key=lambda cq: (len(cq.atoms), sorted(map(_atom_sort_key, cq.atoms))))
        return out


# ---------------------------------------------------------------------------
# Unfolding
# ---------------------------------------------------------------------------


def _antichain(sets: set[frozenset]) -> set[frozenset]:
    """Keep only the subset-minimal elements."""
    kept: list[frozenset] = []
    for s in sorted(sets, key=len):
        if not any(k <= s for k in kept):
            kept.append(s)
    return set(kept)


def unfold(
    query: Query,
    anchor: Atom,
    cap: int = DEFAULT_UNFOLD_CAP,
    prune: bool = False,
) -> list[CQ]:
    """All maximal unfoldings of the query starting from the anchor atom.

    IDB atoms are repeatedly replaced by freshly renamed rule bodies;
    embedded facts unify away to the empty conjunction; EDB atoms either
    stay as leaves (to be matched by external data) or unify with embedded
    facts.  The anchor's time may be a point or a variable: a variable is
    treated as the symbolic anchor time, which requires a time-point-free
    program.

    Ground subgoals expand independently of their context, so their leaf
    alternatives are memoized and multiplied in at the end of each branch;
    with ``prune`` the product keeps only subset-minimal leaf sets at every
    step, which loses nothing a containment check can see.
    """
    program = query.program
    analysis = analyze(program)
    if not analysis.is_nonrecursive:
        raise UnsupportedQueryError("unfolding requires a nonrecursive query")
    symbolic = anchor.time is not None and anchor.time.var is not None
    if symbolic and analysis.has_time_points:
        raise UnsupportedQueryError(
            "symbolic anchors require a time-point-free program"
        )

    rules_by_pred: dict[str, list[Rule]] = {}
    for rule in program.rules:
        rules_by_pred.setdefault(rule.head.pred, []).append(rule)

    pool = _CQPool(cap, prune)
    counter = itertools.count()
    memo: dict[CQAtom, tuple[frozenset, ...]] = {}

    anchor_time = (
        SymTime(anchor.time.shift)
        if symbolic
        else _term_time_value(anchor.time)
    )
    head_terms = anchor.args

    def rename_rule(rule: Rule) -> Rule:
        mapping: dict[str, str] = {}

        def ren_obj(term):
            if isinstance(term, Var):
                if term.name not in mapping:
                    mapping[term.name] = f"v{next(counter)}"
                return Var(mapping[term.name])
            return term

        def ren_time(time: TimeTerm | None):
            if time is None or time.var is None:
                return time
            if time.var not in mapping:
                mapping[time.var] = f"v{next(counter)}"
            return TimeTerm(mapping[time.var], time.shift)

        def ren_atom(a: Atom) -> Atom:
            return Atom(a.pred, tuple(ren_obj(t) for t in a.args), ren_time(a.time))

        return Rule(ren_atom(rule.head), tuple(ren_atom(b) for b in rule.body))

    def freshen(leafset: frozenset) -> frozenset:
        if not any(
            isinstance(t, Var) or isinstance(time, FreeTime)
            for _p, args, time in leafset
            for t in (*args, time)
        ):
            return leafset
        names: dict[str, str] = {}

        def ren(t):
            if isinstance(t, Var):
                return Var(names.setdefault(t.name, f"v{next(counter)}"))
            return t

        out = set()
        for pred, args, time in leafset:
            if isinstance(time, FreeTime):
                time = FreeTime(names.setdefault(time.name, f"v{next(counter)}"), time.offset)
            out.add((pred, tuple(ren(a) for a in args), time))
        return frozenset(out)

    def combine(leaves: list[CQAtom], deferred: list, subst: _Subst, sink) -> None:
        base = frozenset(
            (p, tuple(subst.resolve_obj(t) for t in args), subst.resolve_time(tv))
            for p, args, tv in leaves
        )
        acc: set[frozenset] = {base}
        for bucket in deferred:
            nxt: set[frozenset] = set()
            for core in acc:
                for alt in bucket:
                    nxt.add(core | freshen(alt))
            acc = _antichain(nxt) if prune else nxt
            if len(acc) > cap:
                raise UnfoldingLimitError(
                    f"unfolding exceeded {cap} in-progress disjuncts"
                )
        for atoms in acc:
            sink(atoms, subst)

    def ground_alternatives(key: CQAtom) -> tuple[frozenset, ...]:
        cached = memo.get(key)
        if cached is not None:
            return cached
        pred, args, tval = key
        collected: set[frozenset] = set()
        sink = lambda atoms, _s: collected.add(atoms)  # noqa: E731
        for rule in rules_by_pred.get(pred, ()):
            s2 = _Subst()
            fresh = rename_rule(rule)
            if not all(s2.unify_obj(a, b) for a, b in zip(args, fresh.head.args)):
                continue
            if not s2.unify_time(tval, _term_time_value(fresh.head.time)):
                continue
            expand(
                [(b.pred, b.args, _term_time_value(b.time)) for b in fresh.body],
                [], [], s2, sink,
            )
        if program.sig(pred).edb:
            collected.add(frozenset({key}))
        alts = tuple(_antichain(collected) if prune else collected)
        memo[key] = alts
        return alts

    def expand(goals, leaves, deferred, subst: _Subst, sink) -> None:
        if not goals:
            combine(leaves, deferred, subst, sink)
            return
        (pred, args, tval), rest = goals[0], goals[1:]
        args = tuple(subst.resolve_obj(a) for a in args)
        tval = subst.resolve_time(tval)
        sig = program.sig(pred)
        if not any(isinstance(a, Var) for a in args) and not isinstance(tval, FreeTime):
            alts = ground_alternatives((pred, args, tval))
            if alts:
                expand(rest, leaves, deferred + [alts], subst, sink)
            return
        for rule in rules_by_pred.get(pred, ()):
            s2 = subst.branch()
            fresh = rename_rule(rule)
            if not all(
                s2.unify_obj(a, b) for a, b in zip(args, fresh.head.args)
            ):
                continue
            if not s2.unify_time(tval, _term_time_value(fresh.head.time)):
                continue
            new_goals = [
                (b.pred, b.args, _term_time_value(b.time)) for b in fresh.body
            ]
            expand(new_goals + rest, leaves, deferred, s2, sink)
        if sig.edb:
            expand(rest, leaves + [(pred, args, tval)], deferred, subst, sink)

    def top_sink(atoms: frozenset, subst: _Subst) -> None:
        head = tuple(subst.resolve_obj(t) for t in head_terms)
        pool.insert(canonical_cq(head, list(atoms)))

    expand([(anchor.pred, anchor.args, anchor_time)], [], [], _Subst(), top_sink)
    return pool.result()


# ---------------------------------------------------------------------------
# Containment mappings
# ---------------------------------------------------------------------------


def find_containment_mapping(src: CQ, dst: CQ) -> dict | None:
    """A head-preserving, constant-fixing homomorphism from ``src`` into
    ``dst``, or None.  A mapping from Q2' to Q1' witnesses Q1' <= Q2'."""
    mapping: dict[str, object] = {}

    def bind_obj(term, target) -> bool:
        if isinstance(term, Var):
            prev = mapping.get(("o", term.name))
            if prev is None:
                mapping[("o", term.name)] = target
                return True
            return prev == target
        return term == target

    def bind_time(tv, target) -> bool:
        if isinstance(tv, FreeTime):
            key = ("t", tv.name)
            want_base = _time_add(target, -tv.offset) if target is not None else None
            if want_base is None:
                return False
            prev = mapping.get(key)
            if prev is None:
                mapping[key] = want_base
                return True
            return prev == want_base
        return tv == target

    for s_term, d_term in zip(src.head, dst.head):
        if not bind_obj(s_term, d_term):
            return None

    dst_by_pred: dict[str, list[CQAtom]] = {}
    for atom in dst.atoms:
        dst_by_pred.setdefault(atom[0], []).append(atom)
    for group in dst_by_pred.values():
        group.sort(key=_atom_sort_key)

    src_atoms = sorted(
        src.atoms,
        key=lambda a: (len(dst_by_pred.get(a[0], ())), _atom_sort_key(a)),
    )

    def assign(idx: int) -> bool:
        if idx == len(src_atoms):
            return True
        pred, args, tval = src_atoms[idx]
        for cand in dst_by_pred.get(pred, ()):
            saved = dict(mapping)
            if bind_time(tval, cand[2]) and all(
                bind_obj(a, b) for a, b in zip(args, cand[1])
            ):
                if assign(idx + 1):
                    return True
            mapping.clear()
            mapping.update(saved)
        return False

    return dict(mapping) if assign(0) else None


def decide_containment_unfolded(
    q1: Query,
    q2: Query,
    anchors: list[Atom],
    cap: int = DEFAULT_UNFOLD_CAP,
    prune: bool = True,
) -> bool:
    """Q1 contained in Q2 over the given anchors: every disjunct of Q1's
    unfolding must admit a containment mapping from some disjunct of Q2's
    unfolding at the same anchor (single-disjunct witness, valid because the
    left side is a single CQ)."""
    for anchor in anchors:
        u1 = unfold(q1, anchor, cap, prune)
        if not u1:
            continue
        u2 = unfold(q2, anchor, cap, prune)
        for cq1 in u1:
            if not any(
                find_containment_mapping(cq2, cq1) is not None for cq2 in u2
            ):
                return False
    return True


# ---------------------------------------------------------------------------
# Temporal grounding
# ---------------------------------------------------------------------------

GROUND_OUTPUT_SUFFIX = "__g"


@dataclass(frozen=True)
class GroundedQuery:
    query: Query
    anchor: Atom
    span: TimeWindow | None  # None for the rigid-output bypass


def temporal_grounding(query: Query, m: int | None = None) -> GroundedQuery:
    """Ground a connected, time-point-free, nonrecursive query over the time
    points [0, 2m] and route the output through a fresh predicate anchored
    at m.  Containment of two queries coincides with containment of their
    groundings when m is the larger of the two radii, since derivations of
    facts at m only involve time points within m +/- radius and datasets
    shift into the interval without changing answers.
    """
    analysis = analyze(query.program)
    if not analysis.is_nonrecursive:
        raise UnsupportedQueryError("temporal grounding requires a nonrecursive query")
    if not analysis.is_connected:
        raise UnsupportedQueryError("temporal grounding requires a connected query")
    if analysis.has_time_points:
        raise UnsupportedQueryError("temporal grounding requires time-point-free rules")

    sig = query.output_sig
    if not sig.temporal:
        rigid_rules = tuple(
            r for r in query.program.rules
            if r.head.time is None and all(b.time is None for b in r.body)
        )
        sub = Program(
            rigid_rules,
            {n: s for n, s in query.program.sigs.items() if not s.temporal},
        )
        anchor = Atom(query.output, tuple(Var(f"X{i}") for i in range(sig.arity)), None)
        return GroundedQuery(Query(query.output, sub), anchor, None)

    if m is None:
        m = analysis.program_radius
    span = TimeWindow(0, 2 * m) if m > 0 else TimeWindow(0, 0)
    grounded = ground_rules(query.program, span)
    grounded += [r for r in query.program.rules if r.is_fact]

    out_name = query.output + GROUND_OUTPUT_SUFFIX
    xs = tuple(Var(f"X{i}") for i in range(sig.object_arity))
    bridge = Rule(
        Atom(out_name, xs, TimeTerm(None, m)),
        (Atom(query.output, xs, TimeTerm(None, m)),),
    )
    sigs = dict(query.program.sigs)
    sigs[out_name] = PredicateSig(out_name, sig.arity, True, False)
    program = Program(tuple(grounded) + (bridge,), sigs)
    anchor = Atom(out_name, xs, TimeTerm(None, m))
    return GroundedQuery(Query(out_name, program), anchor, span)


def contained_via_grounding(
    q1: Query, q2: Query, cap: int = DEFAULT_UNFOLD_CAP
) -> bool:
    """Containment through the materialized groundings of both queries."""
    m = max(analyze(q1.program).program_radius, analyze(q2.program).program_radius)
    g1 = temporal_grounding(q1, m)
    g2 = temporal_grounding(q2, m)
    if (g1.span is None) != (g2.span is None):
        return False
    anchor = g1.anchor
    return decide_containment_unfolded(g1.query, g2.query, [anchor], cap)


# ---------------------------------------------------------------------------
# Sampling oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContainmentVerdict:
    holds: bool
    witness: frozenset | None = None  # dataset on which Q1 produced more
    witness_time: int | None = None
    witness_tuple: tuple | None = None


def _freeze_cq(cq: CQ) -> tuple[frozenset[Fact], tuple]:
    env: dict[str, str] = {}

    def freeze_obj(term) -> str:
        if isinstance(term, Var):
            return env.setdefault(term.name, f"w_{term.name}")
        return term

    facts = set()
    for pred, args, tval in sorted(cq.atoms, key=_atom_sort_key):
        if isinstance(tval, (SymTime, FreeTime)):
            raise UnsupportedQueryError(
                "canonical databases need concrete anchor times"
            )
        facts.add(Fact(pred, tuple(freeze_obj(a) for a in args), tval))
    head = tuple(freeze_obj(t) for t in cq.head)
    return frozenset(facts), head


def containment_oracle(
    q1: Query,
    q2: Query,
    trials: int = 25,
    rng: random.Random | None = None,
    cap: int = DEFAULT_UNFOLD_CAP,
) -> ContainmentVerdict:
    """Evaluation-based check of Q1 <= Q2: every canonical database of Q1's
    unfoldings, then ``trials`` random datasets.  A returned False carries a
    witness; True means no counterexample was found (exact for nonrecursive
    queries on the canonical databases alone)."""
    rng = rng or random.Random(0)
    sig1 = q1.output_sig
    if sig1.temporal:
        m = max(analyze(q1.program).program_radius, analyze(q2.program).program_radius)
        anchor = Atom(
            q1.output,
            tuple(Var(f"X{i}") for i in range(sig1.object_arity)),
            TimeTerm(None, m),
        )
        anchor_time: int | None = m
    else:
        anchor = Atom(q1.output, tuple(Var(f"X{i}") for i in range(sig1.arity)), None)
        anchor_time = None

    for cq in unfold(q1, anchor, cap):
        data, head = _freeze_cq(cq)
        if head not in evaluate_at(q2, data, anchor_time):
            return ContainmentVerdict(False, data, anchor_time, head)

    edb_sigs = {
        s.name: s
        for s in list(q1.program.sigs.values()) + list(q2.program.sigs.values())
        if s.edb
    }
    objects = sorted(q1.program.objects() | q2.program.objects() | {"a", "b"})
    lo, hi = 0, max(2, analyze(q1.program).program_radius)
    for _ in range(trials):
        facts = set()
        for s in edb_sigs.values():
            for _k in range(rng.randint(0, 3)):
                args = tuple(rng.choice(objects) for _ in range(s.object_arity))
                t = rng.randint(lo, hi) if s.temporal else None
                facts.add(Fact(s.name, args, t))
        data = frozenset(facts)
        answers = evaluate(q1, data)
        for t, tuples in answers.by_time.items():
            for tup in tuples:
                if tup not in evaluate_at(q2, data, t):
                    return ContainmentVerdict(False, data, t, tup)
    return ContainmentVerdict(True)
