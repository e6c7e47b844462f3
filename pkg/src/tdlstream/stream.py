"""Online and offline stream-reasoning runtimes.

The online loop decides per tick which answer time points have become
definitive (emit them) and which history slices have become forgettable
(drop them).  The offline loop precomputes a delay d and window size s once
and then emits answers at tau_in - d and drops the slice at tau_in - s
unconditionally.  A reference runner evaluates the query over the complete
stream for replay comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from .dtp import DtpInstance, decide_dtp_general, decide_dtp_nonrecursive
from .engine import evaluate_at
from .forget import ForgetInstance, decide_forget, _check_fragment as _forget_fragment
from .model import (
    Fact,
    Query,
    TdlError,
    UnsupportedQueryError,
    analyze,
    validate_query,
)
from .offline import decide_delay, decide_window
from .textio import StreamEvent


class StreamOrderError(TdlError):
    pass


@dataclass(frozen=True)
class EmittedAnswer:
    tau_out: int
    tuples: frozenset[tuple[str, ...]]


@dataclass
class SessionSummary:
    mode: str
    ticks: int = 0
    tau_in: int = 0
    tau_out: int = 0
    tau_mem: int = 0
    emissions: int = 0
    peak_slices: int = 0
    forgetting: bool = False
    slice_counts: list[int] = field(default_factory=list)  # per tick, after forgetting
    lags: list[int] = field(default_factory=list)  # per tick, tau_in - tau_out + 1


class _History:
    """The kept history: rigid facts plus per-time slices of temporal facts."""

    def __init__(self) -> None:
        self.rigid: set[Fact] = set()
        self.slices: dict[int, set[Fact]] = {}
        self._frozen: frozenset[Fact] | None = None

    def absorb(self, facts: Iterable[Fact]) -> None:
        for f in facts:
            if f.time is None:
                self.rigid.add(f)
            else:
                self.slices.setdefault(f.time, set()).add(f)
        self._frozen = None

    def drop_slice(self, tau: int) -> None:
        if self.slices.pop(tau, None) is not None:
            self._frozen = None

    def as_dataset(self) -> frozenset[Fact]:
        if self._frozen is None:
            self._frozen = frozenset(self.rigid).union(
                *self.slices.values()
            ) if self.slices else frozenset(self.rigid)
        return self._frozen

    def slice_count(self) -> int:
        return sum(1 for facts in self.slices.values() if facts)


def _ordered_events(events: Iterable[StreamEvent]) -> list[StreamEvent]:
    out = list(events)
    last = None
    for ev in out:
        if ev.tick < 0:
            raise StreamOrderError(f"tick {ev.tick} is negative; sessions start at 0")
        if last is not None and ev.tick <= last:
            raise StreamOrderError(f"tick {ev.tick} does not increase past {last}")
        for f in ev.facts:
            if f.time != ev.tick:
                raise StreamOrderError(f"fact at {f.time} under tick {ev.tick}")
        last = ev.tick
    return out


def reference_run(
    query: Query,
    events: Iterable[StreamEvent],
    max_horizon: int | None = None,
) -> dict[int, frozenset[tuple[str, ...]]]:
    """Answers over the full final dataset at every tick of the stream span;
    the runtimes must agree with this wherever they emit."""
    ordered = _ordered_events(events)
    full: set[Fact] = set()
    for ev in ordered:
        full |= ev.facts
    data = frozenset(full)
    span = ordered[-1].tick + 1 if ordered else 0
    return {
        tau: evaluate_at(query, data, tau, max_horizon) for tau in range(span)
    }


def run_online(
    query: Query,
    events: Iterable[StreamEvent],
    emit: Callable[[EmittedAnswer], None],
    enable_forgetting: bool | None = None,
    max_horizon: int | None = None,
) -> SessionSummary:
    """The online loop: per tick, absorb the tick's facts, advance tau_out
    while it is definitive (emitting as it goes), then advance tau_mem while
    it is forgettable (dropping slices as it goes).

    Definitiveness uses the bounded critical update for nonrecursive
    connected queries and the general critical query otherwise.  Forgetting
    requires the decidable fragment (nonrecursive, connected, no time
    points, no rigid atoms in rules); by default it is enabled exactly when
    available, and a recursive query runs DTP-only rather than guess at an
    undecidable problem.
    """
    validate_query(query).raise_if_failed()
    analysis = analyze(query.program)
    nonrec = analysis.is_nonrecursive and analysis.is_connected

    if enable_forgetting is None:
        try:
            _forget_fragment(query)
            forgetting = True
        except UnsupportedQueryError:
            forgetting = False
    elif enable_forgetting:
        _forget_fragment(query)
        forgetting = True
    else:
        forgetting = False

    ordered = _ordered_events(events)
    by_tick = {ev.tick: ev.facts for ev in ordered}
    span = ordered[-1].tick + 1 if ordered else 0

    history = _History()
    summary = SessionSummary(mode="online", forgetting=forgetting)
    tau_in = tau_out = tau_mem = 0
    for tick in range(span):
        tau_in = tick
        history.absorb(by_tick.get(tick, ()))
        summary.peak_slices = max(summary.peak_slices, history.slice_count())

        while tau_out <= tau_in:
            instance = DtpInstance(query, history.as_dataset(), tau_in, tau_out)
            definitive = (
                decide_dtp_nonrecursive(instance)
                if nonrec
                else decide_dtp_general(instance, max_horizon)
            )
            if not definitive:
                break
            emit(EmittedAnswer(
                tau_out, evaluate_at(query, history.as_dataset(), tau_out, max_horizon)
            ))
            summary.emissions += 1
            tau_out += 1

        while forgetting and tau_mem < tau_out:
            instance = ForgetInstance(
                query, history.as_dataset(), tau_in, tau_out, tau_mem
            )
            if not decide_forget(instance):
                break
            history.drop_slice(tau_mem)
            tau_mem += 1

        summary.slice_counts.append(history.slice_count())
        summary.lags.append(tau_in - tau_out + 1)
        summary.ticks += 1

    summary.tau_in = span
    summary.tau_out = tau_out
    summary.tau_mem = tau_mem
    return summary


def run_offline(
    query: Query,
    d: int,
    s: int,
    events: Iterable[StreamEvent],
    emit: Callable[[EmittedAnswer], None],
    trust: bool = False,
    max_horizon: int | None = None,
) -> SessionSummary:
    """The offline loop with a fixed delay d and window size s: per tick,
    absorb, emit answers at tau_in - d once that is nonnegative, and drop
    the slice at tau_in - s.  Unless ``trust`` is set, (d, s) are first
    verified by the Delay/Window procedures."""
    validate_query(query).raise_if_failed()
    if d < 0 or s < 0:
        raise ValueError("delay and window size must be nonnegative")
    if not trust:
        if not decide_delay(query, d):
            raise TdlError(f"d={d} is not a valid delay for this query")
        if not decide_window(query, d, s):
            raise TdlError(f"s={s} is not a valid window size at delay {d}")

    ordered = _ordered_events(events)
    by_tick = {ev.tick: ev.facts for ev in ordered}
    span = ordered[-1].tick + 1 if ordered else 0

    history = _History()
    summary = SessionSummary(mode=f"offline(d={d}, s={s})", forgetting=True)
    tau_out = 0
    for tick in range(span):
        history.absorb(by_tick.get(tick, ()))
        summary.peak_slices = max(summary.peak_slices, history.slice_count())
        if tick - d >= 0:
            tau_out = tick - d
            emit(EmittedAnswer(
                tau_out, evaluate_at(query, history.as_dataset(), tau_out, max_horizon)
            ))
            summary.emissions += 1
        history.drop_slice(tick - s)
        summary.slice_counts.append(history.slice_count())
        summary.lags.append(d)
        summary.ticks += 1

    summary.tau_in = span
    summary.tau_out = tau_out + 1 if summary.emissions else 0
    summary.tau_mem = max(0, span - s)
    return summary
