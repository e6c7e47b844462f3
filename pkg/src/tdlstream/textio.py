"""Surface syntax: parser and renderer for programs, datasets, stream event
files, and the newline-delimited answer records.

One rule per statement, '.'-terminated, '%' comments::

    @pred Temp/3 edb temporal.
    @query Shdn.
    Temp(X, high, T) -> Flag(X, T).
    Flag(X, T), Flag(X, T+1) -> Cool(X, T+1).
    Temp(a, high, 0).

Identifiers starting with an uppercase letter are variables in object
positions; lowercase identifiers are objects unless opted in with
``@var x.``.  Time positions are recognized by position, not spelling: any
bare identifier in a time slot is a time variable, an integer is a time
point, and ``T+1`` / ``T-2`` are offsets.  Sorts are inferred per predicate
slot (an integer or offset anywhere makes the slot a time slot, and
time-ness propagates through shared rule variables); ``@pred`` declarations
override and conflicts are reported.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .model import (
    Atom,
    Fact,
    PredicateSig,
    Program,
    Query,
    Rule,
    TdlError,
    TimeTerm,
    Var,
    fact_sort_key,
)


class ParseError(TdlError):
    def __init__(self, message: str, line: int, col: int) -> None:
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


class StreamFormatError(TdlError):
    pass


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>%[^\n]*)
  | (?P<name>[A-Za-z][A-Za-z0-9_]*)
  | (?P<int>\d+)
  | (?P<arrow>->)
  | (?P<sym>[(),.+\-/@&])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    line: int
    col: int


def _lex(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup or ""
        value = m.group()
        if kind not in ("ws", "comment"):
            if kind == "sym":
                kind = value
            tokens.append(Token(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            col = len(value) - value.rfind("\n")
        else:
            col += len(value)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Raw statements (before sort inference)
# ---------------------------------------------------------------------------

# raw term kinds: ("int", value), ("name", ident), ("offset", ident, shift)
RawTerm = tuple
RawAtom = tuple  # (pred, tuple[RawTerm, ...], Token)


@dataclass
class _RawProgram:
    rules: list[tuple[tuple[RawAtom, ...], RawAtom]] = field(default_factory=list)
    declared: dict[str, PredicateSig] = field(default_factory=dict)
    declared_vars: set[str] = field(default_factory=set)
    query_name: str | None = None


class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = _lex(text)
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.next()
        if tok.kind != kind:
            raise ParseError(f"expected {kind!r}, found {tok.value or tok.kind!r}",
                             tok.line, tok.col)
        return tok

    def fail(self, message: str) -> ParseError:
        tok = self.peek()
        return ParseError(message, tok.line, tok.col)

    # -- grammar ------------------------------------------------------------

    def parse(self) -> _RawProgram:
        raw = _RawProgram()
        while self.peek().kind != "eof":
            if self.peek().kind == "@":
                self.next()
                self._directive(raw)
            else:
                self._rule(raw)
        return raw

    def _directive(self, raw: _RawProgram) -> None:
        kw = self.expect("name").value
        if kw == "pred":
            name = self.expect("name").value
            self.expect("/")
            arity = int(self.expect("int").value)
            origin = self.expect("name").value
            kind = self.expect("name").value
            if origin not in ("edb", "idb") or kind not in ("temporal", "rigid"):
                raise self.fail("@pred expects 'edb|idb' and 'temporal|rigid'")
            if name in raw.declared:
                raise self.fail(f"duplicate declaration for {name}")
            raw.declared[name] = PredicateSig(name, arity, kind == "temporal", origin == "edb")
        elif kw == "query":
            raw.query_name = self.expect("name").value
        elif kw == "var":
            raw.declared_vars.add(self.expect("name").value)
            while self.peek().kind == ",":
                self.next()
                raw.declared_vars.add(self.expect("name").value)
        else:
            raise self.fail(f"unknown directive @{kw}")
        self.expect(".")

    def _rule(self, raw: _RawProgram) -> None:
        atoms = [self._atom()]
        while self.peek().kind in (",", "&"):
            self.next()
            atoms.append(self._atom())
        if self.peek().kind == "arrow":
            self.next()
            head = self._atom()
            raw.rules.append((tuple(atoms), head))
        else:
            if len(atoms) != 1:
                raise self.fail("a fact is a single atom")
            raw.rules.append(((), atoms[0]))
        self.expect(".")

    def _atom(self) -> RawAtom:
        name = self.expect("name")
        self.expect("(")
        terms: list[RawTerm] = []
        if self.peek().kind != ")":
            terms.append(self._term())
            while self.peek().kind == ",":
                self.next()
                terms.append(self._term())
        self.expect(")")
        return (name.value, tuple(terms), name)

    def _term(self) -> RawTerm:
        tok = self.peek()
        if tok.kind == "-":
            self.next()
            value = self.expect("int")
            return ("int", -int(value.value))
        if tok.kind == "int":
            self.next()
            return ("int", int(tok.value))
        if tok.kind == "name":
            self.next()
            if self.peek().kind in ("+", "-"):
                sign = -1 if self.next().kind == "-" else 1
                value = self.expect("int")
                return ("offset", tok.value, sign * int(value.value))
            return ("name", tok.value)
        raise self.fail(f"expected a term, found {tok.value or tok.kind!r}")


# ---------------------------------------------------------------------------
# Sort inference
# ---------------------------------------------------------------------------


def _infer_slot_sorts(raw: _RawProgram) -> dict[tuple[str, int], str]:
    """Fixpoint: a slot is a time slot if it ever holds an integer or an
    offset expression, if declared so, or if it shares a rule variable with
    a time slot; everything else defaults to object."""
    slots: dict[tuple[str, int], str] = {}
    for sig in raw.declared.values():
        for i, sort in enumerate(sig.sorts):
            slots[(sig.name, i)] = sort

    def mark(key: tuple[str, int]) -> bool:
        if slots.get(key) == "time":
            return False
        slots[key] = "time"
        return True

    changed = True
    for body, head in raw.rules:
        for pred, terms, _tok in (*body, head):
            for i, term in enumerate(terms):
                if term[0] in ("int", "offset"):
                    mark((pred, i))
    while changed:
        changed = False
        for body, head in raw.rules:
            time_names: set[str] = set()
            atoms = (*body, head)
            for pred, terms, _tok in atoms:
                for i, term in enumerate(terms):
                    if term[0] == "offset":
                        time_names.add(term[1])
                    elif term[0] == "name" and slots.get((pred, i)) == "time":
                        time_names.add(term[1])
            for pred, terms, _tok in atoms:
                for i, term in enumerate(terms):
                    if term[0] == "name" and term[1] in time_names:
                        changed |= mark((pred, i))
    return slots


def _elaborate(raw: _RawProgram) -> Program:
    slots = _infer_slot_sorts(raw)

    arities: dict[str, int] = {s.name: s.arity for s in raw.declared.values()}
    heads_proper: set[str] = set()
    for body, head in raw.rules:
        if body:
            heads_proper.add(head[0])
        for pred, terms, tok in (*body, head):
            prev = arities.setdefault(pred, len(terms))
            if prev != len(terms):
                raise ParseError(
                    f"predicate {pred} used with arity {len(terms)} but expected {prev}",
                    tok.line, tok.col,
                )

    sigs: dict[str, PredicateSig] = {}
    for pred, arity in arities.items():
        sorts = [slots.get((pred, i), "object") for i in range(arity)]
        temporal = bool(sorts) and sorts[-1] == "time"
        if "time" in sorts[:-1] or (sorts and sorts[-1] == "time" and sorts.count("time") > 1):
            raise TdlError(
                f"predicate {pred} mixes sorts: time positions are only allowed last"
            )
        declared = raw.declared.get(pred)
        if declared is not None:
            if declared.temporal != temporal and temporal:
                raise TdlError(
                    f"predicate {pred} declared rigid but used with a time argument"
                )
            temporal = declared.temporal
            edb = declared.edb
        else:
            edb = pred not in heads_proper
        sigs[pred] = PredicateSig(pred, arity, temporal, edb)

    def build_atom(atom: RawAtom) -> Atom:
        pred, terms, tok = atom
        sig = sigs[pred]
        nobj = sig.object_arity
        if len(terms) != sig.arity:
            raise ParseError(
                f"predicate {pred} used with arity {len(terms)} but declared {sig.arity}",
                tok.line, tok.col,
            )
        args: list[str | Var] = []
        for term in terms[:nobj]:
            if term[0] == "int":
                raise ParseError(f"integer in object position of {pred}", tok.line, tok.col)
            if term[0] == "offset":
                raise ParseError(f"offset term in object position of {pred}", tok.line, tok.col)
            name = term[1]
            if name[0].isupper() or name in raw.declared_vars:
                args.append(Var(name))
            else:
                args.append(name)
        time = None
        if sig.temporal:
            term = terms[-1]
            if term[0] == "int":
                time = TimeTerm(None, term[1])
            elif term[0] == "offset":
                time = TimeTerm(term[1], term[2])
            else:
                time = TimeTerm(term[1], 0)
        return Atom(pred, tuple(args), time)

    rules = tuple(
        Rule(build_atom(head), tuple(build_atom(a) for a in body))
        for body, head in raw.rules
    )
    return Program(rules, sigs)


# ---------------------------------------------------------------------------
# Public parsing API
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParsedSource:
    program: Program
    query_name: str | None


def parse_source(text: str) -> ParsedSource:
    raw = _Parser(text).parse()
    return ParsedSource(_elaborate(raw), raw.query_name)


def parse_program(text: str) -> Program:
    return parse_source(text).program


def parse_query(text: str) -> Query:
    src = parse_source(text)
    if src.query_name is None:
        raise TdlError("no @query directive in program text")
    if src.query_name not in src.program.sigs:
        raise TdlError(f"@query names unknown predicate {src.query_name}")
    return Query(src.query_name, src.program)


def parse_dataset(text: str, program: Program | None = None) -> frozenset[Fact]:
    """Parse a file of ground facts; with a program, its signatures fix the
    sorts and every fact must match them."""
    declared = (
        "".join(
            f"@pred {s.name}/{s.arity} {s.origin} {'temporal' if s.temporal else 'rigid'}.\n"
            for s in sorted(program.sigs.values(), key=lambda s: s.name)
        )
        if program is not None
        else ""
    )
    parsed = parse_program(declared + text)
    facts: set[Fact] = set()
    for rule in parsed.rules:
        if not rule.is_fact or not rule.head.is_ground():
            raise TdlError("dataset files may contain ground facts only")
        facts.add(rule.head.to_fact())
    return frozenset(facts)


# ---------------------------------------------------------------------------
# Stream event files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StreamEvent:
    """Facts received at one tick; each fact's time argument equals the tick."""

    tick: int
    facts: frozenset[Fact]


_TICK_RE = re.compile(r"#tick\s+(-?\d+)\s*$")


def parse_stream(text: str, program: Program | None = None) -> list[StreamEvent]:
    """Events grouped under ``#tick N`` headers, ticks strictly increasing.
    With a program, facts must be temporal EDB facts of its signature."""
    events: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        if stripped.startswith("#"):
            m = _TICK_RE.match(stripped)
            if m is None:
                raise StreamFormatError(f"line {lineno}: malformed tick header {stripped!r}")
            tick = int(m.group(1))
            if events and tick <= events[-1][0]:
                raise StreamFormatError(
                    f"line {lineno}: tick {tick} does not increase past {events[-1][0]}"
                )
            events.append((tick, []))
        else:
            if not events:
                raise StreamFormatError(f"line {lineno}: fact before any #tick header")
            events[-1][1].append(line)

    out: list[StreamEvent] = []
    for tick, lines in events:
        facts = parse_dataset("\n".join(lines), program)
        for f in facts:
            if f.time is None:
                raise StreamFormatError(f"rigid fact {f.pred} in stream at tick {tick}")
            if f.time != tick:
                raise StreamFormatError(
                    f"fact {f.pred} at time {f.time} under #tick {tick}"
                )
            if program is not None and not program.sig(f.pred).edb:
                raise StreamFormatError(
                    f"stream fact {f.pred} at tick {tick} is not an EDB predicate"
                )
        out.append(StreamEvent(tick, facts))
    return out


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render_time(t: TimeTerm) -> str:
    if t.var is None:
        return str(t.shift)
    if t.shift == 0:
        return t.var
    return f"{t.var}{t.shift:+d}"


def render_atom(atom: Atom) -> str:
    parts = [a.name if isinstance(a, Var) else a for a in atom.args]
    if atom.time is not None:
        parts.append(render_time(atom.time))
    return f"{atom.pred}({', '.join(parts)})"


def render_rule(rule: Rule) -> str:
    if rule.is_fact:
        return f"{render_atom(rule.head)}."
    body = ", ".join(render_atom(a) for a in rule.body)
    return f"{body} -> {render_atom(rule.head)}."


def render_fact(fact: Fact) -> str:
    return f"{render_atom(fact.to_atom())}."


def render_program(program: Program, query_name: str | None = None) -> str:
    lines = [
        f"@pred {s.name}/{s.arity} {s.origin} {'temporal' if s.temporal else 'rigid'}."
        for s in sorted(program.sigs.values(), key=lambda s: s.name)
    ]
    if query_name is not None:
        lines.append(f"@query {query_name}.")
    lines.extend(render_rule(r) for r in program.rules)
    return "\n".join(lines) + "\n"


def render_query(query: Query) -> str:
    return render_program(query.program, query.output)


def render_dataset(facts: frozenset[Fact]) -> str:
    return "".join(render_fact(f) + "\n" for f in sorted(facts, key=fact_sort_key))


def render_stream(events: list[StreamEvent]) -> str:
    chunks = []
    for ev in events:
        chunks.append(f"#tick {ev.tick}\n")
        chunks.append(render_dataset(ev.facts))
    return "".join(chunks)


def render_answer_lines(
    pred: str, tuples: frozenset[tuple[str, ...]], tau_out: int
) -> list[str]:
    """One compact JSON record per answer tuple, in deterministic order."""
    return [
        json.dumps({"t_out": tau_out, "pred": pred, "tuple": list(t)},
                   separators=(",", ":"))
        for t in sorted(tuples)
    ]


def render_emission_lines(
    pred: str, tuples: frozenset[tuple[str, ...]], tau_out: int
) -> list[str]:
    """Like :func:`render_answer_lines`, but a definitive-and-empty answer
    set becomes one record with ``"tuple": null`` so consumers can tell it
    apart from "not yet definitive" (and from a 0-ary answer, whose tuple
    is ``[]``)."""
    if not tuples:
        return [
            json.dumps({"t_out": tau_out, "pred": pred, "tuple": None},
                       separators=(",", ":"))
        ]
    return render_answer_lines(pred, tuples, tau_out)
