"""Bottom-up evaluation of temporal Datalog.

Rules are never fully grounded up front: the semi-naive loop instantiates a
rule's single-per-variable time bindings from the delta fact that triggers
it and joins the remaining body atoms through a per-(predicate, time-slice)
index, discarding derived facts outside the evaluation window.  Nonrecursive
programs get an exact window from the radius/rank locality bounds; recursive
programs are evaluated under an expanding horizon with repetition detection
and a hard cap.  A deliberately naive evaluator (eager grounding, fixpoint
by full re-application) is kept alongside as the test oracle.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field

from .model import (
    Atom,
    Fact,
    Program,
    Query,
    Rule,
    TdlError,
    TimeTerm,
    UnsupportedQueryError,
    Var,
    analyze,
    dataset_times,
    fact_sort_key,
    make_program,
)

DEFAULT_HORIZON_CAP = 256
HORIZON_ENV = "TDL_MAX_HORIZON"


class EngineError(TdlError):
    pass


class HorizonError(EngineError):
    """Recursive evaluation hit the horizon cap without stabilizing."""


@dataclass(frozen=True, slots=True)
class TimeWindow:
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"empty window [{self.lo}, {self.hi}]")

    def __contains__(self, t: int) -> bool:
        return self.lo <= t <= self.hi

    def points(self) -> range:
        return range(self.lo, self.hi + 1)


class FactStore:
    """Facts split into rigid ones and per-time-point slices, with an exact
    (predicate, time) lookup index.  Tracks the wave at which each fact was
    first derived so derivation trees can be rebuilt without cycles."""

    def __init__(self) -> None:
        self.rigid: set[Fact] = set()
        self.slices: dict[int, set[Fact]] = {}
        self._by_key: dict[tuple[str, int | None], list[Fact]] = {}
        self._times_of: dict[str, set[int]] = {}
        self.rounds: dict[Fact, int] = {}

    def __contains__(self, fact: Fact) -> bool:
        return fact in self.rounds

    def __len__(self) -> int:
        return len(self.rounds)

    def add(self, fact: Fact, rnd: int) -> bool:
        if fact in self.rounds:
            return False
        self.rounds[fact] = rnd
        if fact.time is None:
            self.rigid.add(fact)
        else:
            self.slices.setdefault(fact.time, set()).add(fact)
            self._times_of.setdefault(fact.pred, set()).add(fact.time)
        self._by_key.setdefault((fact.pred, fact.time), []).append(fact)
        return True

    def lookup(self, pred: str, time: int | None) -> list[Fact]:
        return self._by_key.get((pred, time), [])

    def times_of(self, pred: str) -> set[int]:
        return self._times_of.get(pred, set())

    def facts(self) -> list[Fact]:
        return sorted(self.rounds, key=fact_sort_key)

    def answers(self, pred: str, time: int | None) -> frozenset[tuple[str, ...]]:
        return frozenset(f.args for f in self.lookup(pred, time))


@dataclass(frozen=True)
class AnswerSet:
    """Query answers per time point over the window they were computed on.

    Rigid queries use the single key ``None``.
    """

    window: TimeWindow | None
    by_time: dict[int | None, frozenset[tuple[str, ...]]] = field(default_factory=dict)

    def at(self, tau: int | None) -> frozenset[tuple[str, ...]]:
        return self.by_time.get(tau, frozenset())


# ---------------------------------------------------------------------------
# Matching helpers
# ---------------------------------------------------------------------------


def _match_object_args(
    args: tuple[str | Var, ...], values: tuple[str, ...], subst: dict[str, str]
) -> dict[str, str] | None:
    if len(args) != len(values):
        return None
    out = subst
    for term, val in zip(args, values):
        if isinstance(term, Var):
            bound = out.get(term.name)
            if bound is None:
                if out is subst:
                    out = dict(subst)
                out[term.name] = val
            elif bound != val:
                return None
        elif term != val:
            return None
    return out


def _atom_time_value(
    time: TimeTerm | None, tsubst: dict[str, int]
) -> int | None | str:
    """Concrete time of a body atom, None for rigid, or the unbound var name."""
    if time is None:
        return None
    if time.var is None:
        return time.shift
    if time.var in tsubst:
        return tsubst[time.var] + time.shift
    return time.var


def _bind_time(
    time: TimeTerm | None, value: int | None, tsubst: dict[str, int]
) -> dict[str, int] | None:
    if time is None:
        return tsubst if value is None else None
    if value is None:
        return None
    if time.var is None:
        return tsubst if time.shift == value else None
    bound = tsubst.get(time.var)
    want = value - time.shift
    if bound is None:
        new = dict(tsubst)
        new[time.var] = want
        return new
    return tsubst if bound == want else None


def _join(
    atoms: list[Atom],
    store: FactStore,
    subst: dict[str, str],
    tsubst: dict[str, int],
    used: list[Fact],
    out: list[tuple[dict[str, str], dict[str, int], tuple[Fact, ...]]],
) -> None:
    """All ways to satisfy ``atoms`` from the store, extending the bindings."""
    if not atoms:
        out.append((subst, tsubst, tuple(used)))
        return
    atom, rest = atoms[0], atoms[1:]
    t = _atom_time_value(atom.time, tsubst)
    if isinstance(t, str):  # unbound time variable: scan the predicate's slices
        candidate_times: list[int | None] = sorted(store.times_of(atom.pred))
    else:
        candidate_times = [t]
    for ct in candidate_times:
        for fact in store.lookup(atom.pred, ct):
            s2 = _match_object_args(atom.args, fact.args, subst)
            if s2 is None:
                continue
            t2 = _bind_time(atom.time, fact.time, tsubst)
            if t2 is None:
                continue
            used.append(fact)
            _join(rest, store, s2, t2, used, out)
            used.pop()


# ---------------------------------------------------------------------------
# Semi-naive saturation (lazy grounding)
# ---------------------------------------------------------------------------


def saturate(
    program: Program,
    seeds: frozenset[Fact] | set[Fact],
    window: TimeWindow,
) -> FactStore:
    """Least model of the program's proper rules over the seeds, keeping
    only temporal facts inside the window."""
    rules = [r for r in program.rules if not r.is_fact]
    trigger: dict[str, list[tuple[int, int]]] = {}
    for ri, rule in enumerate(rules):
        for pi, atom in enumerate(rule.body):
            trigger.setdefault(atom.pred, []).append((ri, pi))

    store = FactStore()
    agenda: list[Fact] = []
    for fact in sorted(seeds, key=fact_sort_key):
        if fact.time is not None and fact.time not in window:
            continue
        if store.add(fact, 0):
            agenda.append(fact)

    while agenda:
        fact = agenda.pop()
        for ri, pi in trigger.get(fact.pred, ()):
            rule = rules[ri]
            pivot = rule.body[pi]
            subst = _match_object_args(pivot.args, fact.args, {})
            if subst is None:
                continue
            tsubst = _bind_time(pivot.time, fact.time, {})
            if tsubst is None:
                continue
            rest = [a for j, a in enumerate(rule.body) if j != pi]
            matches: list[tuple[dict[str, str], dict[str, int], tuple[Fact, ...]]] = []
            _join(rest, store, subst, tsubst, [fact], matches)
            for s, ts, used in matches:
                head = rule.head
                if head.time is None:
                    ht: int | None = None
                else:
                    ht = head.time.shift if head.time.var is None else ts[head.time.var] + head.time.shift
                    if ht not in window:
                        continue
                args = tuple(
                    s[a.name] if isinstance(a, Var) else a for a in head.args
                )
                new = Fact(head.pred, args, ht)
                rnd = 1 + max(store.rounds[u] for u in used)
                if store.add(new, rnd):
                    agenda.append(new)
    return store


# ---------------------------------------------------------------------------
# Naive oracle: eager grounding, fixpoint by whole-program re-application
# ---------------------------------------------------------------------------


def ground_rules(program: Program, window: TimeWindow) -> list[Rule]:
    """All time-instantiations of the proper rules whose atoms stay inside
    the window (object variables are left symbolic)."""
    out: list[Rule] = []
    for rule in program.rules:
        if rule.is_fact:
            continue
        points_ok = all(
            a.time is None or a.time.var is not None or a.time.shift in window
            for a in rule.atoms()
        )
        if not points_ok:
            continue
        tvars = sorted(rule.time_variables())
        ranges: list[range] = []
        feasible = True
        for tv in tvars:
            lo, hi = window.lo, window.hi
            for a in rule.atoms():
                if a.time is not None and a.time.var == tv:
                    lo = max(lo, window.lo - a.time.shift)
                    hi = min(hi, window.hi - a.time.shift)
            if lo > hi:
                feasible = False
                break
            ranges.append(range(lo, hi + 1))
        if not feasible:
            continue

        def fix(atom: Atom, binding: dict[str, int]) -> Atom:
            if atom.time is None or atom.time.var is None:
                return atom
            return Atom(atom.pred, atom.args, TimeTerm(None, binding[atom.time.var] + atom.time.shift))

        for combo in itertools.product(*ranges):
            binding = dict(zip(tvars, combo))
            out.append(
                Rule(fix(rule.head, binding), tuple(fix(b, binding) for b in rule.body))
            )
    return out


def naive_saturate(
    program: Program,
    seeds: frozenset[Fact] | set[Fact],
    window: TimeWindow,
) -> FactStore:
    grounded = ground_rules(program, window)
    store = FactStore()
    for fact in sorted(seeds, key=fact_sort_key):
        if fact.time is None or fact.time in window:
            store.add(fact, 0)
    rnd = 0
    changed = True
    while changed:
        changed = False
        rnd += 1
        fresh: list[Fact] = []
        for rule in grounded:
            matches: list[tuple[dict[str, str], dict[str, int], tuple[Fact, ...]]] = []
            _join(list(rule.body), store, {}, {}, [], matches)
            for s, _ts, _used in matches:
                args = tuple(
                    s[a.name] if isinstance(a, Var) else a for a in rule.head.args
                )
                ht = None if rule.head.time is None else rule.head.time.shift
                fresh.append(Fact(rule.head.pred, args, ht))
        for f in fresh:
            if store.add(f, rnd):
                changed = True
    return store


# ---------------------------------------------------------------------------
# Windows
# ---------------------------------------------------------------------------


def relevant_window(query: Query, data: frozenset[Fact], tau: int) -> TimeWindow:
    """Exact evaluation window for answers at ``tau`` of a nonrecursive
    connected query: facts at or before min(T) - a*rank(P) - 1 cannot reach
    an answer inside T, and facts after max(T) + rad cannot either."""
    analysis = analyze(query.program)
    if not analysis.is_nonrecursive:
        raise UnsupportedQueryError("relevant_window requires a nonrecursive query")
    if not analysis.is_connected:
        raise UnsupportedQueryError("relevant_window requires a connected query")
    return _locality_window(query.program, data, {tau})


def _locality_window(
    program: Program, data: frozenset[Fact], focus: set[int]
) -> TimeWindow:
    analysis = analyze(program)
    times = set(focus) | program.time_points() | dataset_times(data)
    if not times:
        times = {0}
    a = analysis.max_rule_radius
    rank = analysis.program_rank or 0
    return TimeWindow(min(times) - a * rank, max(times) + analysis.program_radius)


def _horizon_cap(explicit: int | None) -> int:
    if explicit is not None:
        return explicit
    env = os.environ.get(HORIZON_ENV)
    return int(env) if env else DEFAULT_HORIZON_CAP


def _boundary_state(store: FactStore, window: TimeWindow, width: int) -> tuple:
    top = frozenset(
        (f.pred, f.args, window.hi - f.time)
        for t in range(window.hi - width + 1, window.hi + 1)
        for f in store.slices.get(t, ())
        if f.time is not None
    )
    bottom = frozenset(
        (f.pred, f.args, f.time - window.lo)
        for t in range(window.lo, window.lo + width)
        for f in store.slices.get(t, ())
        if f.time is not None
    )
    return top, bottom


def _stable_store(
    program: Program,
    seeds: frozenset[Fact],
    focus: set[int],
    probe,
    max_horizon: int | None = None,
) -> tuple[FactStore, TimeWindow]:
    """Saturate over a window large enough that ``probe``'s verdict is final.

    Nonrecursive programs use the locality window directly.  Recursive ones
    expand a symmetric horizon, doubling it until the probe result and the
    relative states of the boundary slices repeat; the least model of this
    language is ultimately periodic, but with no constructive bound the cap
    turns non-stabilization into an explicit error.
    """
    analysis = analyze(program)
    all_seeds = frozenset(seeds) | program.embedded_facts()
    if analysis.is_nonrecursive:
        window = _locality_window(program, all_seeds, focus)
        return saturate(program, all_seeds, window), window

    times = set(focus) | program.time_points() | dataset_times(all_seeds)
    if not times:
        times = {0}
    width = max(analysis.max_rule_radius, 1)
    cap = _horizon_cap(max_horizon)
    prev: tuple | None = None
    horizon = 8
    while horizon <= cap:
        window = TimeWindow(min(times) - horizon, max(times) + horizon)
        store = saturate(program, all_seeds, window)
        state = (probe(store), _boundary_state(store, window, width))
        if state == prev:
            return store, window
        prev = state
        horizon *= 2
    raise HorizonError(
        f"evaluation did not stabilize within horizon {cap} "
        f"(set {HORIZON_ENV} to raise the cap)"
    )


# ---------------------------------------------------------------------------
# Public evaluation API
# ---------------------------------------------------------------------------


def evaluate_at(
    query: Query,
    data: frozenset[Fact],
    tau: int | None,
    max_horizon: int | None = None,
) -> frozenset[tuple[str, ...]]:
    """Answers to the query at time point ``tau`` (``None`` for a rigid
    output): the tuples whose output fact is entailed by program plus data."""
    focus = {tau} if tau is not None else set()
    store, _ = _stable_store(
        query.program,
        frozenset(data),
        focus,
        lambda s: s.answers(query.output, tau),
        max_horizon,
    )
    return store.answers(query.output, tau)


def evaluate(
    query: Query,
    data: frozenset[Fact],
    max_horizon: int | None = None,
) -> AnswerSet:
    """Windowed evaluation: answers for every time point of the computed
    window (recursive programs may have infinitely many answers overall, so
    only the windowed form is offered).  Stabilization is probed on the
    span anchored by the data and rule time points; answers propagated
    beyond it repeat the boundary pattern."""
    seeds = frozenset(data) | query.program.embedded_facts()
    base = query.program.time_points() | dataset_times(seeds) or {0}
    lo, hi = min(base), max(base)

    def probe(s: FactStore) -> frozenset:
        spanned = {
            (t, f.args)
            for t in s.times_of(query.output)
            if lo <= t <= hi
            for f in s.lookup(query.output, t)
        }
        spanned.update((None, f.args) for f in s.lookup(query.output, None))
        return frozenset(spanned)

    store, window = _stable_store(
        query.program,
        frozenset(data),
        set(),
        probe,
        max_horizon,
    )
    sig = query.program.sig(query.output)
    if not sig.temporal:
        return AnswerSet(window, {None: store.answers(query.output, None)})
    by_time: dict[int | None, frozenset[tuple[str, ...]]] = {}
    for t in sorted(store.times_of(query.output)):
        by_time[t] = store.answers(query.output, t)
    return AnswerSet(window, by_time)


def entails(
    program: Program, fact: Fact, max_horizon: int | None = None
) -> bool:
    """Whether the fact holds in the least Herbrand model of the program
    (embedded facts included)."""
    focus = {fact.time} if fact.time is not None else set()
    store, _ = _stable_store(
        program, frozenset(), focus, lambda s: fact in s, max_horizon
    )
    return fact in store


def embed_dataset(program: Program, data: frozenset[Fact]) -> Program:
    """Program extended with the dataset's facts as empty-body rules."""
    extra = tuple(Rule(f.to_atom()) for f in sorted(data, key=fact_sort_key))
    return make_program(program.rules + extra, program.sigs.values())


# ---------------------------------------------------------------------------
# Derivation trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DerivationTree:
    """Witness tree: each node is a ground rule instance whose body atoms
    are the heads of its children; leaves are facts."""

    head: Fact
    body: tuple[Fact, ...]
    children: tuple[DerivationTree, ...]

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children), default=0)


def derivation(
    program: Program, fact: Fact, max_horizon: int | None = None
) -> DerivationTree | None:
    """A derivation of the fact, or None when it is not entailed.  Node
    choices take the lexicographically least ground instance among those
    whose body facts were derived strictly earlier, so output is stable."""
    focus = {fact.time} if fact.time is not None else set()
    store, _ = _stable_store(
        program, frozenset(), focus, lambda s: fact in s, max_horizon
    )
    if fact not in store:
        return None
    rules = [r for r in program.rules if not r.is_fact]

    def instances(target: Fact, before: int) -> list[tuple[tuple, tuple[Fact, ...]]]:
        found: list[tuple[tuple, tuple[Fact, ...]]] = []
        for ri, rule in enumerate(rules):
            if rule.head.pred != target.pred:
                continue
            subst = _match_object_args(rule.head.args, target.args, {})
            if subst is None:
                continue
            tsubst = _bind_time(rule.head.time, target.time, {})
            if tsubst is None:
                continue
            matches: list[tuple[dict[str, str], dict[str, int], tuple[Fact, ...]]] = []
            _join(list(rule.body), store, subst, tsubst, [], matches)
            for _s, _ts, used in matches:
                if all(store.rounds[u] < before for u in used):
                    key = (ri, tuple(fact_sort_key(u) for u in used))
                    found.append((key, used))
        return found

    def build(target: Fact) -> DerivationTree:
        rnd = store.rounds[target]
        if rnd == 0:
            return DerivationTree(target, (), ())
        key, used = min(instances(target, rnd))
        return DerivationTree(target, used, tuple(build(u) for u in used))

    return build(fact)


def check_derivation(program: Program, tree: DerivationTree) -> bool:
    """Re-check the three derivation-tree conditions against the program."""

    def node_ok(node: DerivationTree) -> bool:
        if len(node.body) != len(node.children):
            return False
        for child, atom in zip(node.children, node.body):
            if child.head != atom:
                return False
        if not node.body:
            return any(
                r.is_fact and r.head.to_fact() == node.head for r in program.rules
            )
        for rule in program.rules:
            if rule.is_fact or rule.head.pred != node.head.pred:
                continue
            if len(rule.body) != len(node.body):
                continue
            subst = _match_object_args(rule.head.args, node.head.args, {})
            if subst is None:
                continue
            tsubst = _bind_time(rule.head.time, node.head.time, {})
            if tsubst is None:
                continue
            ok = True
            for atom, bf in zip(rule.body, node.body):
                if atom.pred != bf.pred:
                    ok = False
                    break
                subst = _match_object_args(atom.args, bf.args, subst)
                tsubst = _bind_time(atom.time, bf.time, tsubst) if subst is not None else None
                if subst is None or tsubst is None:
                    ok = False
                    break
            if ok:
                return True
        return False

    stack = [tree]
    while stack:
        node = stack.pop()
        if not node_ok(node):
            return False
        stack.extend(node.children)
    return True
