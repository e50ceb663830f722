from __future__ import annotations

import sys
import textwrap
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from auditbot.events import Event, EventLog
from auditbot.fixture import write_fixture
from auditbot.policy_dsl import compile_policy, parse_policy

T0 = datetime(2024, 3, 4, 9, 0, tzinfo=timezone.utc)  # a Monday
CLOCK = "2025-01-01T00:00:00Z"


def ev(seq: int, type_: str, project: str = "p", actor: str | None = None, ts: datetime | None = None, **payload) -> Event:
    return Event(seq=seq, ts=ts or T0 + timedelta(minutes=seq), type=type_, project=project, actor=actor, payload=payload)


def log_of(*events: Event) -> EventLog:
    return EventLog(events)


HEADER = 'policy "t" {\n  version = "1"\n}\n'


def policy_from(body: str, base_dir: Path | None = None, header: str = HEADER):
    return compile_policy(parse_policy(header + textwrap.dedent(body)), base_dir=base_dir)


def rule_from(body: str, base_dir: Path | None = None, header: str = HEADER):
    return policy_from(body, base_dir, header).rules[0]


@pytest.fixture(scope="session")
def fixture42(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("fixture42")
    write_fixture(out, seed=42, n_events=10000)
    return out


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("fixture7")
    write_fixture(out, seed=7, n_events=600)
    return out


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        terminalreporter.write_line(verdicts[number])
