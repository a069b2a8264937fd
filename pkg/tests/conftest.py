import datetime as dt

import pytest

from mdmerge.records import CanonicalRecord
from mdmerge.synthgen import CorpusSpec, generate_canonical


def rec(rid, **kw):
    """Shorthand for a CanonicalRecord with ISO strings accepted for dates."""
    if isinstance(kw.get("birth_date"), str):
        kw["birth_date"] = dt.date.fromisoformat(kw["birth_date"])
    if isinstance(kw.get("source_timestamp"), str):
        kw["source_timestamp"] = dt.datetime.fromisoformat(kw["source_timestamp"])
    return CanonicalRecord(rid, **kw)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_canonical(CorpusSpec(n_entities=1500, seed=11))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
