"""Temporal Datalog stream reasoning toolkit."""

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
    ValidationReport,
    Var,
    analyze,
    dataset,
    make_program,
    normalize_rigid_atoms,
    segment,
    validate,
    validate_query,
)
from .engine import (
    AnswerSet,
    DerivationTree,
    FactStore,
    HorizonError,
    TimeWindow,
    derivation,
    entails,
    evaluate,
    evaluate_at,
    relevant_window,
)
from .textio import (
    ParseError,
    StreamEvent,
    parse_dataset,
    parse_program,
    parse_query,
    parse_stream,
    render_program,
)
from .containment import (
    CQ,
    ContainmentVerdict,
    UnfoldingLimitError,
    containment_oracle,
    decide_containment_unfolded,
    find_containment_mapping,
    temporal_grounding,
    unfold,
)
from .dtp import (
    DtpInstance,
    bounded_critical_update,
    critical_query,
    critical_update,
    decide_dtp_general,
    decide_dtp_nonrecursive,
    dtp_oracle,
)
from .forget import (
    ForgetInstance,
    build_forget_queries,
    decide_forget,
    forget_oracle,
    relevant_points,
)
from .offline import (
    build_delay_queries,
    build_window_queries,
    decide_delay,
    decide_window,
    delay_oracle,
    minimal_delay,
    minimal_window,
    window_oracle,
)
from .stream import (
    EmittedAnswer,
    SessionSummary,
    reference_run,
    run_offline,
    run_online,
)

__version__ = "0.1.0"
