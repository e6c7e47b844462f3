import pytest

from tdlstream import parse_dataset, parse_query
from tdlstream.textio import parse_stream

MONITOR_RULES = """
Temp(X, high, T) -> Flag(X, T).
Flag(X, T), Flag(X, T+1) -> Cool(X, T+1).
Cool(X, T), Flag(X, T+1) -> Shdn(X, T+1).
"""

FULL_RULES = MONITOR_RULES + """
Shdn(X, T) -> Malfunc(X, T-2).
Shdn(X, T), Near(X, Y) -> AtRisk(Y, T).
AtRisk(X, T) -> AtRisk(X, T+1).
"""

MALFUNC_RULES = MONITOR_RULES + """
Shdn(X, T) -> Malfunc(X, T-2).
Temp(X, na, T) -> Malfunc(X, T).
"""


@pytest.fixture(scope="session")
def shdn_query():
    return parse_query("@query Shdn.\n" + MONITOR_RULES)


@pytest.fixture(scope="session")
def malfunc_query():
    return parse_query("@query Malfunc.\n" + MALFUNC_RULES)


@pytest.fixture(scope="session")
def atrisk_query():
    return parse_query("@query AtRisk.\n" + FULL_RULES)


@pytest.fixture(scope="session")
def full_program(atrisk_query):
    return atrisk_query.program


@pytest.fixture()
def three_highs(shdn_query):
    return parse_dataset(
        "Temp(a, high, 0). Temp(a, high, 1). Temp(a, high, 2).",
        shdn_query.program,
    )


@pytest.fixture()
def three_high_stream(shdn_query):
    text = """
#tick 0
Temp(a, high, 0).
#tick 1
Temp(a, high, 1).
#tick 2
Temp(a, high, 2).
"""
    return parse_stream(text, shdn_query.program)
