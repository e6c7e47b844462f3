"""The ``tdl`` command line: stream sessions plus the four decision
procedures and query containment.

Exit codes: 0 clean, 2 validation/input error, 3 decision-procedure
failure (horizon cap, unfolding blow-up, oracle enumeration cap).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .containment import UnfoldingLimitError, contained_via_grounding
from .dtp import DtpInstance, decide_dtp_general, decide_dtp_nonrecursive
from .engine import HorizonError
from .forget import ForgetInstance, decide_forget
from .model import (
    EnumerationLimitError,
    Query,
    TdlError,
    UnsupportedQueryError,
    validate_query,
)
from .offline import decide_delay, decide_window, minimal_delay, minimal_window
from .stream import run_offline, run_online
from .textio import (
    ParseError,
    parse_dataset,
    parse_source,
    parse_stream,
    render_emission_lines,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_PROCEDURE = 3


class _CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _load_query(path: str, output: str | None) -> Query:
    src = parse_source(Path(path).read_text(encoding="utf-8"))
    name = output or src.query_name
    if name is None:
        raise _CliError(
            f"{path}: no @query directive and no --query given", EXIT_INVALID
        )
    if name not in src.program.sigs:
        raise _CliError(f"{path}: unknown query predicate {name}", EXIT_INVALID)
    query = Query(name, src.program)
    report = validate_query(query)
    if not report.ok:
        for err in report.errors:
            print(f"{path}: {err}", file=sys.stderr)
        raise _CliError(f"{path}: invalid program", EXIT_INVALID)
    return query


def _load_history(path: str, query: Query):
    return parse_dataset(Path(path).read_text(encoding="utf-8"), query.program)


def _print_bool(value: bool) -> None:
    print("true" if value else "false")


def _cmd_run(args: argparse.Namespace) -> int:
    query = _load_query(args.program, args.query)
    text = (
        sys.stdin.read()
        if args.stream in (None, "-")
        else Path(args.stream).read_text(encoding="utf-8")
    )
    events = parse_stream(text, query.program)

    emitted = []

    def emit(ans) -> None:
        emitted.append(ans)
        for line in render_emission_lines(query.output, ans.tuples, ans.tau_out):
            print(line)

    if args.mode == "online":
        summary = run_online(
            query, events, emit,
            enable_forgetting=False if args.no_forget else None,
        )
    else:
        if args.d is None or args.s is None:
            raise _CliError("offline mode needs --d and --s", EXIT_INVALID)
        summary = run_offline(query, args.d, args.s, events, emit, trust=args.trust)

    print(
        f"session: {summary.mode} ticks={summary.ticks} "
        f"tau_in={summary.tau_in} tau_out={summary.tau_out} "
        f"tau_mem={summary.tau_mem} peak_slices={summary.peak_slices}",
        file=sys.stderr,
    )
    if args.report:
        from .report import write_report

        for path in write_report(args.report, query.output, emitted, summary):
            print(f"report: {path}", file=sys.stderr)
    return EXIT_OK


def _cmd_dtp(args: argparse.Namespace) -> int:
    query = _load_query(args.program, args.query)
    history = _load_history(args.history, query)
    instance = DtpInstance(query, history, args.t_in, args.t_out)
    if args.nonrecursive:
        _print_bool(decide_dtp_nonrecursive(instance))
    else:
        _print_bool(decide_dtp_general(instance))
    return EXIT_OK


def _cmd_forget(args: argparse.Namespace) -> int:
    query = _load_query(args.program, args.query)
    history = _load_history(args.history, query)
    instance = ForgetInstance(query, history, args.t_in, args.t_out, args.t_mem)
    _print_bool(decide_forget(instance))
    return EXIT_OK


def _cmd_delay(args: argparse.Namespace) -> int:
    query = _load_query(args.program, args.query)
    if args.minimal:
        print(minimal_delay(query))
    elif args.d is not None:
        _print_bool(decide_delay(query, args.d))
    else:
        raise _CliError("delay needs --d N or --minimal", EXIT_INVALID)
    return EXIT_OK


def _cmd_window(args: argparse.Namespace) -> int:
    query = _load_query(args.program, args.query)
    if args.minimal:
        print(minimal_window(query, args.d))
    elif args.s is not None:
        _print_bool(decide_window(query, args.d, args.s))
    else:
        raise _CliError("window needs --s M or --minimal", EXIT_INVALID)
    return EXIT_OK


def _cmd_contain(args: argparse.Namespace) -> int:
    q1 = _load_query(args.q1, None)
    q2 = _load_query(args.q2, None)
    _print_bool(contained_via_grounding(q1, q2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdl",
        description="Temporal Datalog stream reasoning toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a streaming session")
    run.add_argument("--mode", choices=("online", "offline"), required=True)
    run.add_argument("--program", required=True)
    run.add_argument("--query", help="output predicate (overrides @query)")
    run.add_argument("--stream", help="stream file, or - for stdin")
    run.add_argument("--d", type=int, help="delay (offline mode)")
    run.add_argument("--s", type=int, help="window size (offline mode)")
    run.add_argument("--trust", action="store_true",
                     help="skip validating --d/--s against the query")
    run.add_argument("--no-forget", action="store_true",
                     help="online mode: keep the full history")
    run.add_argument("--report", metavar="DIR",
                     help="write answers, summary and figures to DIR")
    run.set_defaults(func=_cmd_run)

    dtp = sub.add_parser("dtp", help="decide a Definitive Time Point instance")
    dtp.add_argument("--program", required=True)
    dtp.add_argument("--query")
    dtp.add_argument("--history", required=True)
    dtp.add_argument("--t-in", type=int, required=True)
    dtp.add_argument("--t-out", type=int, required=True)
    dtp.add_argument("--nonrecursive", action="store_true",
                     help="use the bounded critical update procedure")
    dtp.set_defaults(func=_cmd_dtp)

    forget = sub.add_parser("forget", help="decide a Forget instance")
    forget.add_argument("--program", required=True)
    forget.add_argument("--query")
    forget.add_argument("--history", required=True)
    forget.add_argument("--t-in", type=int, required=True)
    forget.add_argument("--t-out", type=int, required=True)
    forget.add_argument("--t-mem", type=int, required=True)
    forget.set_defaults(func=_cmd_forget)

    delay = sub.add_parser("delay", help="decide Delay or find the minimal delay")
    delay.add_argument("--program", required=True)
    delay.add_argument("--query")
    delay.add_argument("--d", type=int)
    delay.add_argument("--minimal", action="store_true")
    delay.set_defaults(func=_cmd_delay)

    window = sub.add_parser("window", help="decide Window or find the minimal size")
    window.add_argument("--program", required=True)
    window.add_argument("--query")
    window.add_argument("--d", type=int, required=True)
    window.add_argument("--s", type=int)
    window.add_argument("--minimal", action="store_true")
    window.set_defaults(func=_cmd_window)

    contain = sub.add_parser("contain", help="decide query containment Q1 <= Q2")
    contain.add_argument("--q1", required=True)
    contain.add_argument("--q2", required=True)
    contain.set_defaults(func=_cmd_contain)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (HorizonError, UnfoldingLimitError, EnumerationLimitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROCEDURE
    except (ParseError, UnsupportedQueryError, TdlError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
