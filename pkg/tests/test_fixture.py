from __future__ import annotations

import json

import pytest

from auditbot.engine import run_audit
from auditbot.events import load_registers, read_event_file
from auditbot.fixture import write_fixture
from auditbot.policy_dsl import load_policy


def audit(directory):
    policy = load_policy(directory / "policy.pol")
    return policy, run_audit(policy, read_event_file(directory / "events.jsonl"), load_registers(directory / "registers"))


def truth_of(directory):
    return json.loads((directory / "ground_truth.json").read_text())


@pytest.mark.parametrize("seed, n", [(1, 400), (2, 1500), (3, 57)])
def test_run_recovers_ground_truth(tmp_path, seed, n):
    write_fixture(tmp_path, seed=seed, n_events=n)
    _, result = audit(tmp_path)
    truth = truth_of(tmp_path)
    assert truth["events"] == n and len(read_event_file(tmp_path / "events.jsonl")) == n
    expected = {t["id"]: t for t in truth["findings"]}
    assert set(result.ids()) == set(expected)
    for f in result.findings:
        t = expected[f.id]
        assert (f.rule_id, f.trigger_seq, f.harm) == (t["rule_id"], t["trigger_seq"], t["harm"])
        if f.kind == "exception":
            assert f.justified == t["justified"]


def test_scenario_covers_all_rule_kinds(small_fixture):
    policy, result = audit(small_fixture)
    assert {r.kind for r in policy.rules} == {"obligation", "legitimacy", "exception", "hours", "gate", "drift"}
    assert {f.kind for f in result.findings} == {r.kind for r in policy.rules}
    assert any(f.justified for f in result.findings) and any(f.justified is False for f in result.findings)


def test_seeds_differ(tmp_path):
    write_fixture(tmp_path / "a", seed=1, n_events=200)
    write_fixture(tmp_path / "b", seed=2, n_events=200)
    assert (tmp_path / "a" / "events.jsonl").read_bytes() != (tmp_path / "b" / "events.jsonl").read_bytes()


def test_negative_count(tmp_path):
    with pytest.raises(ValueError):
        write_fixture(tmp_path, n_events=-1)
