import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from trace_model import Event, EventKind, Trace, parse_trace

QC_TRACES = Path(__file__).parent / "QCTraces"

settings.register_profile("default", max_examples=100, deadline=None)
settings.register_profile(
    "acceptance",
    max_examples=10_000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def sample_trace():
    """Loader for the traces in QCTraces/, by file name."""

    def load(name: str) -> Trace:
        return parse_trace((QC_TRACES / name).read_text(encoding="utf-8"))

    return load


@pytest.fixture
def build_trace():
    """Build a trace from (tid, op, target) rows; positions follow row order."""

    def build(*rows: tuple[str, str, str]) -> Trace:
        return Trace.from_events(Event(pos=0, tid=tid, kind=EventKind(op), target=target) for tid, op, target in rows)

    return build
