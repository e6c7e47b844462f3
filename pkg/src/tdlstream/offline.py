"""Data-independent guarantees for the offline runtime: Delay (answers at
tau_in - d are always definitive) and Window (slices before tau_in - s are
always forgettable for the outputs a delay-d runtime still owes).

Both reduce to query containment.  The delay pair restricts answers to
marked time points on the left and additionally filters the usable input
facts to a [-rad, d] band around the mark on the right; the window pair
does the same with separate bands for constrained outputs and usable
facts.  Minimal values are found by linear search under derived upper
bounds (d = rad and s = d + rad are always valid), which the test suite
re-verifies against the brute-force oracles.
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
    psi_name,
    psi_rename,
    segment,
    validate_query,
)

OUTPUT_WRAP = "__G"
DELAY_MARK = "__A"  # fresh unary temporal EDB
BAND_TAG = "__B"  # fresh unary temporal IDB
WINDOW_IN = "__In"  # fresh unary temporal EDB
WINDOW_OUT = "__Out"  # fresh unary temporal IDB


def check_offline_fragment(query: Query) -> int:
    """Reject queries outside the decidable fragment and return the radius.

    Recursive (and disconnected or time-point-bearing) queries are refused
    outright: Delay and Window are undecidable in general, so the artifact
    never guesses there.  Object constants are fine; rigid atoms are not
    part of the supported fragment.
    """
    validate_query(query).raise_if_failed()
    analysis = analyze(query.program)
    if not analysis.is_nonrecursive:
        raise UnsupportedQueryError(
            "Delay/Window are undecidable for recursive queries; "
            "no bounded window exists in general"
        )
    if not analysis.is_connected:
        raise UnsupportedQueryError("Delay/Window need a connected query")
    if analysis.has_time_points:
        raise UnsupportedQueryError("Delay/Window need time-point-free rules")
    if any(a.time is None for r in query.program.proper_rules() for a in r.atoms()):
        raise UnsupportedQueryError("Delay/Window need rules without rigid atoms")
    if not query.output_sig.temporal:
        raise UnsupportedQueryError("Delay/Window are defined for temporal queries")
    return analysis.program_radius


def _wrap_sig(query: Query) -> PredicateSig:
    return PredicateSig(OUTPUT_WRAP, query.output_sig.arity, True, False)


def _output_vars(query: Query) -> tuple[Var, ...]:
    return tuple(Var(f"X{i}") for i in range(query.output_sig.object_arity))


def _import_rules(program: Program, tag: str) -> list[Rule]:
    t = TimeTerm("T", 0)
    rules = []
    for pred in program.temporal_edb_preds():
        xs = tuple(Var(f"X{i}") for i in range(program.sig(pred).object_arity))
        rules.append(
            Rule(Atom(psi_name(pred), xs, t), (Atom(pred, xs, t), Atom(tag, (), t)))
        )
    return rules


# ---------------------------------------------------------------------------
# Delay
# ---------------------------------------------------------------------------


def build_delay_queries(query: Query, d: int) -> tuple[Query, Query]:
    """Left: answers at marked points.  Right: the same, but every input
    fact must sit within [mark - rad, mark + d]; containment says facts
    outside that band, in particular anything after mark + d, never matter."""
    rad = check_offline_fragment(query)
    xs = _output_vars(query)
    t = TimeTerm("T", 0)
    wrap = Rule(
        Atom(OUTPUT_WRAP, xs, t),
        (Atom(query.output, xs, t), Atom(DELAY_MARK, (), t)),
    )
    mark_sig = PredicateSig(DELAY_MARK, 1, True, True)
    q1 = Query(
        OUTPUT_WRAP,
        query.program.with_rules([wrap], (mark_sig, _wrap_sig(query))),
    )

    renamed = psi_rename(query.program)
    band = [
        Rule(Atom(BAND_TAG, (), TimeTerm("T", k)), (Atom(DELAY_MARK, (), t),))
        for k in range(-rad, d + 1)
    ]
    extra = (
        mark_sig,
        _wrap_sig(query),
        PredicateSig(BAND_TAG, 1, True, False),
    )
    q2 = Query(
        OUTPUT_WRAP,
        renamed.with_rules([wrap] + band + _import_rules(query.program, BAND_TAG), extra),
    )
    return q1, q2


def decide_delay(query: Query, d: int, cap: int = DEFAULT_UNFOLD_CAP) -> bool:
    """Delay holds for (Q, d) iff Q1 is contained in Q2.

    Decided at the single anchor G(x, m), m the larger program radius of
    the pair: by the grounding lemma this one anchor is as good as all of
    them for connected time-point-free queries (every unfolding stays
    within [0, 2m] and shifting datasets moves derivations isomorphically).
    """
    if d < 0:
        raise ValueError("delay must be nonnegative")
    q1, q2 = build_delay_queries(query, d)
    m = max(analyze(q1.program).program_radius, analyze(q2.program).program_radius)
    anchor = Atom(OUTPUT_WRAP, _output_vars(query), TimeTerm(None, m))
    return decide_containment_unfolded(q1, q2, [anchor], cap)


def minimal_delay(query: Query, cap: int = DEFAULT_UNFOLD_CAP) -> int:
    """Least valid delay; d = rad(Q) always works because facts beyond
    tau_out + rad can never reach answers at tau_out."""
    rad = check_offline_fragment(query)
    for d in range(rad + 1):
        if decide_delay(query, d, cap):
            return d
    raise AssertionError(
        "decide_delay rejected the guaranteed bound d = rad(Q); "
        "this is a bug, not a property of the query"
    )


# ---------------------------------------------------------------------------
# Window
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowReduction:
    q1: Query
    q2: Query
    degenerate: bool  # no constrained tau_out at all: Window vacuously true


def _window_program(
    query: Query, ks: range, ells: range
) -> Program:
    t = TimeTerm("T", 0)
    xs = _output_vars(query)
    renamed = psi_rename(query.program)
    rules: list[Rule] = [
        Rule(Atom(WINDOW_OUT, (), TimeTerm("T", k)), (Atom(WINDOW_IN, (), t),))
        for k in ks
    ]
    rules.append(
        Rule(
            Atom(OUTPUT_WRAP, xs, t),
            (Atom(query.output, xs, t), Atom(WINDOW_OUT, (), t)),
        )
    )
    rules.extend(
        Rule(Atom(BAND_TAG, (), TimeTerm("T", ell)), (Atom(WINDOW_IN, (), t),))
        for ell in ells
    )
    rules.extend(_import_rules(query.program, BAND_TAG))
    extra = (
        PredicateSig(WINDOW_IN, 1, True, True),
        PredicateSig(WINDOW_OUT, 1, True, False),
        PredicateSig(BAND_TAG, 1, True, False),
        _wrap_sig(query),
    )
    return renamed.with_rules(rules, extra)


def build_window_queries(query: Query, d: int, s: int) -> WindowReduction:
    """For a mark at tau, both queries constrain outputs to
    (tau - d, tau - s + rad]; the left lets facts from (tau - d - rad,
    tau - s + 2 rad] through, the right only facts after tau - s.  The
    k-range is empty iff s >= d + rad, in which case no output is
    constrained and Window holds vacuously."""
    rad = check_offline_fragment(query)
    if d < 0 or s < 0:
        raise ValueError("delay and window size must be nonnegative")
    ks = range(-d + 1, -s + rad + 1)
    ell_hi = -s + 2 * rad
    q1 = Query(OUTPUT_WRAP, _window_program(query, ks, range(-(d + rad) + 1, ell_hi + 1)))
    q2 = Query(OUTPUT_WRAP, _window_program(query, ks, range(-s + 1, ell_hi + 1)))
    return WindowReduction(q1, q2, degenerate=len(ks) == 0)


def decide_window(query: Query, d: int, s: int, cap: int = DEFAULT_UNFOLD_CAP) -> bool:
    """Window holds for (Q, d, s) iff Q1 is contained in Q2 (vacuously true
    when the construction constrains no output point)."""
    reduction = build_window_queries(query, d, s)
    if reduction.degenerate:
        return True
    m = max(
        analyze(reduction.q1.program).program_radius,
        analyze(reduction.q2.program).program_radius,
    )
    anchor = Atom(OUTPUT_WRAP, _output_vars(query), TimeTerm(None, m))
    return decide_containment_unfolded(reduction.q1, reduction.q2, [anchor], cap)


def minimal_window(query: Query, d: int, cap: int = DEFAULT_UNFOLD_CAP) -> int:
    """Least valid window size for a valid delay d; s = d + rad always
    works (answers at tau_out > tau_in - d only need facts after
    tau_out - rad - 1 >= tau_in - d - rad)."""
    rad = check_offline_fragment(query)
    if not decide_delay(query, d, cap):
        raise ValueError(f"d={d} is not a valid delay for this query")
    for s in range(d + rad + 1):
        if decide_window(query, d, s, cap):
            return s
    raise AssertionError(
        "decide_window rejected the guaranteed bound s = d + rad(Q); "
        "this is a bug, not a property of the query"
    )


# ---------------------------------------------------------------------------
# Brute-force oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OfflineVerdict:
    holds: bool
    witness_history: frozenset[Fact] | None = None
    witness_update: frozenset[Fact] | None = None
    witness_time: int | None = None


def _subset_pairs(ds: list[Fact], us: list[Fact]):
    """All (history-subset, update-subset) pairs by increasing total size."""
    for total in range(len(ds) + len(us) + 1):
        for i in range(total + 1):
            if i > len(ds) or total - i > len(us):
                continue
            for dsub in itertools.combinations(ds, i):
                for usub in itertools.combinations(us, total - i):
                    yield frozenset(dsub), frozenset(usub)


def delay_oracle(
    query: Query,
    d: int,
    objects: list[str] | None = None,
    fresh_objects: int = 1,
    max_histories: int = 65536,
) -> OfflineVerdict:
    """Exhaustive check of the Delay definition at tau_in = 0, which is
    enough by shift invariance of time-point-free queries.  Histories range
    over subsets of the candidate facts in [-d - rad, 0]; for each history
    the single maximal update suffices because entailment is monotone.

    Variable positions range over the query's object constants plus
    ``fresh_objects`` fresh ones by default (constant-guarded joins need
    the constants; make ``fresh_objects`` at least the largest variable
    count of a rule for a trustworthy True).
    """
    rad = check_offline_fragment(query)
    if objects is None:
        objects = sorted(query.program.objects()) + [
            f"w{i}" for i in range(fresh_objects)
        ]
    tau_out = -d
    hist_candidates = candidate_update_facts(
        query.program, objects, range(tau_out - rad, 1)
    )
    update_hi = tau_out + rad
    full_update = frozenset(
        candidate_update_facts(query.program, objects, range(1, update_hi + 1))
    )
    tried = 0
    for size in range(len(hist_candidates) + 1):
        for combo in itertools.combinations(hist_candidates, size):
            tried += 1
            if tried > max_histories:
                raise EnumerationLimitError(
                    f"no witness among the first {max_histories} histories and "
                    f"2^{len(hist_candidates)} remain; cannot certify True"
                )
            history = frozenset(combo)
            before = evaluate_at(query, history, tau_out)
            after = evaluate_at(query, history | full_update, tau_out)
            if not after <= before:
                return OfflineVerdict(False, history, full_update, tau_out)
    return OfflineVerdict(True)


def window_oracle(
    query: Query,
    d: int,
    s: int,
    objects: list[str] | None = None,
    fresh_objects: int = 1,
    max_pairs: int = 65536,
) -> OfflineVerdict:
    """Exhaustive check of the Window definition at tau_in = 0 (shift
    invariance again): for every history/update pair within the radius
    bounds and every constrained tau_out, the kept segment must yield the
    same answers.  The condition is an equality, not monotone in the
    update, so both sides are genuinely enumerated; objects are handled as
    in :func:`delay_oracle`."""
    rad = check_offline_fragment(query)
    if objects is None:
        objects = sorted(query.program.objects()) + [
            f"w{i}" for i in range(fresh_objects)
        ]
    tau_outs = range(-d + 1, rad - s + 1)
    if not tau_outs:
        return OfflineVerdict(True)
    hist_candidates = candidate_update_facts(
        query.program, objects, range(min(tau_outs) - rad, 1)
    )
    upd_candidates = candidate_update_facts(
        query.program, objects, range(1, max(tau_outs) + rad + 1)
    )
    tried = 0
    for history, update in _subset_pairs(hist_candidates, upd_candidates):
        tried += 1
        if tried > max_pairs:
            raise EnumerationLimitError(
                f"no witness among the first {max_pairs} history/update pairs "
                f"and more remain; cannot certify True"
            )
        kept = segment(history, -s)
        for tau in tau_outs:
            full = evaluate_at(query, history | update, tau)
            trimmed = evaluate_at(query, kept | update, tau)
            if full != trimmed:
                return OfflineVerdict(False, history, update, tau)
    return OfflineVerdict(True)
