from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from auditbot.accountability import (
    ACTOR_INACTION,
    NO_RESPONSIBILITY,
    ROLE_UNFILLED,
    escalation_chain,
    jobdesc_warnings,
    locate_failure,
    most_senior_member,
    responsible_party,
    trace_all,
)
from auditbot.engine import eval_obligation, run_audit
from auditbot.events import JobDescriptionEntry, OrgEntry, RegisterSet, load_registers, read_event_file
from auditbot.policy_dsl import load_policy
from conftest import ev, log_of, policy_from

BIAS = """
rule bias {
  kind = obligation harm = 4
  trigger = build.training_run require = dataset.bias_assessment
  mode = exists_before join_on = dataset_id
}
"""
ORG = (
    OrgEntry("alice", "qa-lead", "P", "bob"),
    OrgEntry("bob", "manager", "P", "carol"),
    OrgEntry("carol", "director", "P", None),
)
JOBS = (JobDescriptionEntry("qa-lead", ("bias",)),)


def bias_case(*extra):
    rule = policy_from(BIAS).rules[0]
    log = log_of(*extra, ev(10, "build.training_run", "P", actor="dev", build_id="b", dataset_id="d1"))
    (finding,) = eval_obligation(rule, log)
    return rule, log, finding


class TestResponsibleParty:
    def test_from_job_descriptions(self):
        rule = policy_from(BIAS).rules[0]
        assert responsible_party(rule, "P", RegisterSet(orgchart=ORG, jobdesc=JOBS)) == ("qa-lead", ["alice"])

    def test_role_without_holder(self):
        rule = policy_from(BIAS).rules[0]
        assert responsible_party(rule, "Q", RegisterSet(orgchart=ORG, jobdesc=JOBS)) == ("qa-lead", [])

    def test_tie_break_warns(self):
        rule = policy_from(BIAS).rules[0]
        jobs = (JobDescriptionEntry("zeta", ("bias",)), JobDescriptionEntry("alpha", ("bias",)))
        warnings: list[str] = []
        assert responsible_party(rule, "P", RegisterSet(jobdesc=jobs), warnings) == ("alpha", [])
        assert warnings == ["rule bias appears in several job descriptions (alpha, zeta); using alpha"]

    def test_rule_role_overrides_job_descriptions(self):
        rule = policy_from(BIAS.replace("harm = 4", 'harm = 4 responsible_role = "director"')).rules[0]
        assert responsible_party(rule, "P", RegisterSet(orgchart=ORG, jobdesc=JOBS)) == ("director", ["carol"])


class TestLocateFailure:
    def test_actor_inaction_with_chain(self):
        rule, log, finding = bias_case()
        fp = locate_failure(finding, rule, log, RegisterSet(orgchart=ORG, jobdesc=JOBS))
        assert fp.located_at == ACTOR_INACTION
        assert fp.responsible_actors == ("alice",) and fp.escalation_chain == ("alice", "bob", "carol")
        assert "no dataset.bias_assessment for dataset_id=d1" in fp.narrative

    def test_role_unfilled_starts_at_most_senior(self):
        rule, log, finding = bias_case()
        org = ORG[1:] + (OrgEntry("dana", "dev", "P", "bob"),)
        fp = locate_failure(finding, rule, log, RegisterSet(orgchart=org, jobdesc=JOBS))
        assert fp.located_at == ROLE_UNFILLED and fp.responsible_actors == ()
        assert fp.escalation_chain == ("carol",)
        assert most_senior_member("P", RegisterSet(orgchart=org)) == "carol"

    def test_no_responsibility(self):
        rule, log, finding = bias_case()
        fp = locate_failure(finding, rule, log, RegisterSet(orgchart=ORG))
        assert fp.located_at == NO_RESPONSIBILITY and fp.escalation_chain == () and fp.responsible_role is None
        assert "job description" in fp.narrative and "incomplete" in fp.narrative

    def test_near_miss_on_other_subject(self):
        other = ev(4, "dataset.bias_assessment", "P", actor="alice", dataset_id="d2", method="m")
        rule, log, finding = bias_case(other)
        fp = locate_failure(finding, rule, log, RegisterSet(orgchart=ORG, jobdesc=JOBS))
        assert fp.located_at == ACTOR_INACTION and "near miss" in fp.narrative and "seq 4" in fp.narrative

    def test_justified_override_narrative(self):
        policy = policy_from(
            "rule ov { kind = exception harm = 3 override_type = rule.override "
            "justification_type = rule.justification join_on = override_id }"
        )
        log = log_of(
            ev(1, "rule.override", "P", actor="alice", rule_ref="bias", override_id="o"),
            ev(2, "rule.justification", "P", actor="alice", override_id="o", reason="r"),
        )
        (finding,) = run_audit(policy, log).findings
        regs = RegisterSet(orgchart=ORG, jobdesc=(JobDescriptionEntry("qa-lead", ("ov",)),))
        fp = locate_failure(finding, policy.rules[0], log, regs)
        assert fp.located_at == ACTOR_INACTION and "justified it in time" in fp.narrative

    def test_to_dict_omits_empty_optionals(self):
        rule, log, finding = bias_case()
        d = locate_failure(finding, rule, log, RegisterSet(orgchart=ORG)).to_dict()
        assert "responsible_role" not in d and "warnings" not in d


def test_jobdesc_warnings():
    policy = policy_from(BIAS)
    regs = RegisterSet(jobdesc=(JobDescriptionEntry("x", ("bias", "ghost")),))
    assert jobdesc_warnings(policy, regs) == ["job description x lists unknown rule ghost"]


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.sampled_from("abcdef"), st.sampled_from("abcdef"), max_size=6), st.sampled_from("abcdef"))
def test_escalation_chain_is_acyclic_and_follows_edges(edges, start):
    org = tuple(OrgEntry(a, "r", "P", b) for a, b in edges.items())
    chain = escalation_chain(start, "P", RegisterSet(orgchart=org))
    assert chain[0] == start and len(set(chain)) == len(chain) <= len(org) + 1
    assert all(edges.get(a) == b for a, b in zip(chain, chain[1:]))


def test_trace_is_total_and_consistent(small_fixture):
    policy = load_policy(small_fixture / "policy.pol")
    log = read_event_file(small_fixture / "events.jsonl")
    regs = load_registers(small_fixture / "registers")
    findings = run_audit(policy, log, regs).findings
    traces = trace_all(findings, policy, log, regs)
    assert [t.finding_id for t in traces] == [f.id for f in findings]
    for t in traces:
        assert (t.located_at == ROLE_UNFILLED) == (not t.responsible_actors and t.responsible_role is not None)
        assert (t.located_at == NO_RESPONSIBILITY) == (t.responsible_role is None)
    assert traces == trace_all(findings, policy, log, regs)
