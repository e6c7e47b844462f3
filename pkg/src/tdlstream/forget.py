"""The Forget problem: can the history slices at and before tau_mem be
dropped without disturbing any answer at or after tau_out, whatever arrives
later?

Undecidable in general; decided here for nonrecursive connected queries
whose rules contain neither time points nor rigid atoms, by the two-query
construction: both queries share tag facts over the update-relevant points,
rules that only produce the output at output-relevant points, and import
rules that filter update facts through the tags; one embeds the full
(renamed) history, the other only its kept segment.  Forget holds iff the
first query is contained in the second.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .containment import DEFAULT_UNFOLD_CAP, decide_containment_unfolded
from .dtp import candidate_update_facts
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
    is_history,
    psi_name,
    psi_rename,
    psi_rename_facts,
    segment,
    validate_query,
)

UPDATE_TAG = "__B"  # fresh unary temporal IDB tagging update-relevant points


@dataclass(frozen=True)
class ForgetInstance:
    query: Query
    history: frozenset[Fact]
    tau_in: int
    tau_out: int
    tau_mem: int

    def check(self) -> None:
        validate_query(self.query).raise_if_failed()
        if not self.query.output_sig.temporal:
            raise UnsupportedQueryError("Forget is defined for temporal queries")
        if not is_history(self.history, self.tau_in):
            raise ValueError(f"history contains facts after tau_in={self.tau_in}")
        # tau_out may exceed tau_in by one: the online loop checks
        # forgettability after advancing past a fully definitive tick.
        if not self.tau_mem <= self.tau_out <= self.tau_in + 1:
            raise ValueError("need tau_mem <= tau_out <= tau_in + 1")


def _check_fragment(query: Query) -> None:
    analysis = analyze(query.program)
    if not analysis.is_nonrecursive:
        raise UnsupportedQueryError("Forget is undecidable for recursive queries")
    if not analysis.is_connected:
        raise UnsupportedQueryError("the Forget procedure needs a connected query")
    if analysis.has_time_points:
        raise UnsupportedQueryError(
            "the Forget procedure needs rules without time points"
        )
    if any(
        a.time is None for r in query.program.proper_rules() for a in r.atoms()
    ):
        raise UnsupportedQueryError(
            "the Forget procedure needs rules without rigid atoms"
        )


def relevant_points(instance: ForgetInstance) -> tuple[tuple[int, int], tuple[int, int]]:
    """Inclusive (lo, hi) intervals of output-relevant and update-relevant
    time points; lo > hi means empty.  Answers later than tau_mem + rad
    can't see the forgotten slices and updates later than tau_mem + 2 rad
    can't reach the protected answers."""
    instance.check()
    _check_fragment(instance.query)
    rad = analyze(instance.query.program).program_radius
    output = (instance.tau_out, instance.tau_mem + rad)
    update = (instance.tau_in + 1, instance.tau_mem + 2 * rad)
    return output, update


def build_forget_queries(instance: ForgetInstance) -> tuple[Query, Query]:
    """The containment pair: shared rules and tag facts, plus the renamed
    full history on the left and the renamed kept segment on the right."""
    (out_lo, out_hi), (upd_lo, upd_hi) = relevant_points(instance)
    program = instance.query.program
    renamed = psi_rename(program)
    out_pred = instance.query.output

    shared: list[Rule] = []
    for rule in renamed.proper_rules():
        if rule.head.pred != out_pred:
            shared.append(rule)
            continue
        # ground the single time variable so the head lands on each
        # output-relevant point
        tvar = rule.head.time.var  # type: ignore[union-attr]
        offset = rule.head.time.shift  # type: ignore[union-attr]
        for tau in range(out_lo, out_hi + 1):
            binding = tau - offset

            def pin(atom: Atom) -> Atom:
                if atom.time is None or atom.time.var != tvar:
                    return atom
                return Atom(atom.pred, atom.args, TimeTerm(None, binding + atom.time.shift))

            shared.append(Rule(pin(rule.head), tuple(pin(b) for b in rule.body)))

    t = TimeTerm("T", 0)
    for pred in program.temporal_edb_preds():
        k = program.sig(pred).object_arity
        xs = tuple(Var(f"X{i}") for i in range(k))
        shared.append(
            Rule(
                Atom(psi_name(pred), xs, t),
                (Atom(pred, xs, t), Atom(UPDATE_TAG, (), t)),
            )
        )
    tags = [
        Rule(Atom(UPDATE_TAG, (), TimeTerm(None, tau)))
        for tau in range(upd_lo, upd_hi + 1)
    ]

    base = Program((), renamed.sigs).with_rules(
        shared + tags, (PredicateSig(UPDATE_TAG, 1, True, False),)
    )
    left = psi_rename_facts(instance.history, program)
    right = psi_rename_facts(segment(instance.history, instance.tau_mem), program)
    q1 = Query(out_pred, base.with_rules(Rule(f.to_atom()) for f in sorted(left, key=str)))
    q2 = Query(out_pred, base.with_rules(Rule(f.to_atom()) for f in sorted(right, key=str)))
    return q1, q2


def decide_forget(instance: ForgetInstance, cap: int = DEFAULT_UNFOLD_CAP) -> bool:
    """Forget holds iff Q1 is contained in Q2, checked at the
    output-relevant anchor points; vacuously true when none exist."""
    (out_lo, out_hi), _ = relevant_points(instance)
    if out_lo > out_hi:
        return True
    q1, q2 = build_forget_queries(instance)
    k = instance.query.output_sig.object_arity
    xs = tuple(Var(f"X{i}") for i in range(k))
    anchors = [
        Atom(instance.query.output, xs, TimeTerm(None, tau))
        for tau in range(out_lo, out_hi + 1)
    ]
    return decide_containment_unfolded(q1, q2, anchors, cap)


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForgetVerdict:
    holds: bool
    witness_update: frozenset[Fact] | None = None
    witness_time: int | None = None
    witness_tuple: tuple[str, ...] | None = None


def forget_oracle(
    instance: ForgetInstance,
    objects: list[str] | None = None,
    max_updates: int = 4096,
) -> ForgetVerdict:
    """Check the definition directly: enumerate every update over the
    update-relevant points (these ranges suffice by the radius locality
    bounds) and compare answers over the full history against the kept
    segment at every output-relevant point.

    Equality is not monotone in the update, so unlike the DTP oracle this
    one genuinely enumerates subsets; keep the object set small.
    """
    (out_lo, out_hi), (upd_lo, upd_hi) = relevant_points(instance)
    if out_lo > out_hi:
        return ForgetVerdict(True)
    if objects is None:
        objects = sorted(
            instance.query.program.objects() | dataset_objects(instance.history)
        ) or ["a"]
    candidates = candidate_update_facts(
        instance.query.program, objects, range(upd_lo, upd_hi + 1)
    )
    kept = segment(instance.history, instance.tau_mem)
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
            for tau in range(out_lo, out_hi + 1):
                full = evaluate_at(instance.query, instance.history | update, tau)
                trimmed = evaluate_at(instance.query, kept | update, tau)
                if full != trimmed:
                    extra = sorted(full - trimmed)
                    return ForgetVerdict(False, update, tau, extra[0] if extra else None)
    return ForgetVerdict(True)
