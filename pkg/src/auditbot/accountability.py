"""Trace a finding to the role, actors and reporting line responsible for the missed step."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .engine import Finding
from .events import EventLog, OrgEntry, RegisterSet
from .policy_dsl import CompiledPolicy, CompiledRule

ACTOR_INACTION = "actor_inaction"
ROLE_UNFILLED = "role_unfilled"
NO_RESPONSIBILITY = "no_responsibility_defined"


@dataclass(frozen=True)
class FailurePoint:
    finding_id: str
    responsible_role: str | None
    responsible_actors: tuple[str, ...]
    located_at: str
    escalation_chain: tuple[str, ...]
    narrative: str
    warnings: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "finding_id": self.finding_id,
            "responsible_actors": list(self.responsible_actors),
            "located_at": self.located_at,
            "escalation_chain": list(self.escalation_chain),
            "narrative": self.narrative,
        }
        if self.responsible_role is not None:
            out["responsible_role"] = self.responsible_role
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out


def responsible_party(
    rule: CompiledRule, project: str, registers: RegisterSet, warnings: list[str] | None = None
) -> tuple[str | None, list[str]]:
    """Role from the rule itself, else the lexicographically first job description listing it."""
    role = rule.responsible_role
    if role is None:
        roles = sorted({jd.role for jd in registers.jobdesc if rule.id in jd.rule_ids})
        if len(roles) > 1 and warnings is not None:
            warnings.append(f"rule {rule.id} appears in several job descriptions ({', '.join(roles)}); using {roles[0]}")
        role = roles[0] if roles else None
    if role is None:
        return None, []
    actors = sorted({e.actor for e in registers.orgchart if e.role == role and e.project == project})
    return role, actors


def _entry_for(actor: str, project: str | None, orgchart: tuple[OrgEntry, ...]) -> OrgEntry | None:
    entries = sorted((e for e in orgchart if e.actor == actor), key=lambda e: (e.project != project, e.project or "", e.role))
    return entries[0] if entries else None


def escalation_chain(start: str, project: str | None, registers: RegisterSet) -> list[str]:
    chain = [start]
    seen = {start}
    current = start
    while True:
        entry = _entry_for(current, project, registers.orgchart)
        boss = entry.reports_to if entry else None
        if boss is None or boss in seen:
            return chain
        chain.append(boss)
        seen.add(boss)
        current = boss


def _depth(actor: str, project: str | None, registers: RegisterSet) -> int:
    return len(escalation_chain(actor, project, registers))


def most_senior_member(project: str, registers: RegisterSet) -> str | None:
    members = sorted({e.actor for e in registers.orgchart if e.project == project})
    if not members:
        return None
    return min(members, key=lambda a: (_depth(a, project, registers), a))


def _subjects(finding: Finding, rule: CompiledRule, log: EventLog) -> list[tuple[str, Any]]:
    """(field, value) pairs identifying what the expected activity should have referred to."""
    p = rule.params
    if p["mode"] == "exists_before":
        trigger = log.by_seq(finding.trigger_seq)
        if trigger is None or p["join_on"] not in trigger.payload:
            return []
        return [(p["join_on"], trigger.payload[p["join_on"]])]
    out = []
    for seq in finding.evidence_seqs:
        e = log.by_seq(seq)
        if e is not None and seq != finding.trigger_seq and p["join_on"] in e.payload:
            out.append((p["join_on"], e.payload[p["join_on"]]))
    return out


def locate_failure(finding: Finding, rule: CompiledRule, log: EventLog, registers: RegisterSet) -> FailurePoint:
    """Pin a finding on actors who did not act, an unfilled role, or a missing responsibility mapping."""
    warnings: list[str] = []
    role, actors = responsible_party(rule, finding.project, registers, warnings)
    if role is None:
        return FailurePoint(
            finding.id, None, (), NO_RESPONSIBILITY, (),
            f"rule {rule.id} is not assigned to any job description; the mapping from policy to "
            f"job descriptions is incomplete, so no one was expected to perform this step",
            tuple(warnings),
        )
    if not actors:
        senior = most_senior_member(finding.project, registers)
        chain = escalation_chain(senior, finding.project, registers) if senior else []
        where = f"; escalate from {senior}, the most senior member of {finding.project}" if senior else ""
        return FailurePoint(
            finding.id, role, (), ROLE_UNFILLED, tuple(chain),
            f"role {role} is responsible for rule {rule.id} but nobody holds it on project {finding.project}{where}",
            tuple(warnings),
        )

    if finding.justified:
        narrative = (
            f"{', '.join(actors)} ({role}) on project {finding.project} overrode rule {rule.id} at seq "
            f"{finding.trigger_seq} and justified it in time; recorded for review only"
        )
        chain = escalation_chain(actors[0], finding.project, registers)
        return FailurePoint(finding.id, role, tuple(actors), ACTOR_INACTION, tuple(chain), narrative, tuple(warnings))

    expected = rule.expected_event_type()
    narrative = (
        f"{', '.join(actors)} ({role}) on project {finding.project} did not perform the step required by "
        f"rule {rule.id} before seq {finding.trigger_seq}"
    )
    if expected is not None:
        subjects = _subjects(finding, rule, log)
        near_misses = []
        for actor in actors:
            for e in log.events_before(finding.trigger_seq, expected):
                if e.actor != actor:
                    continue
                if any(e.payload.get(k) == v for k, v in subjects):
                    continue
                near_misses.append(e.seq)
        subject_text = ", ".join(f"{k}={v}" for k, v in subjects) or "the required subject"
        narrative = f"{narrative}: no {expected} for {subject_text}"
        if near_misses:
            narrative += (
                f"; near miss: {expected} by the responsible actor(s) for a different subject at seq "
                + ", ".join(str(s) for s in sorted(near_misses))
            )
    chain = escalation_chain(actors[0], finding.project, registers)
    return FailurePoint(finding.id, role, tuple(actors), ACTOR_INACTION, tuple(chain), narrative, tuple(warnings))


def trace_all(findings, policy: CompiledPolicy, log: EventLog, registers: RegisterSet) -> list[FailurePoint]:
    rules: Mapping[str, CompiledRule] = {r.id: r for r in policy.rules}
    return [locate_failure(f, rules[f.rule_id], log, registers) for f in findings]


def jobdesc_warnings(policy: CompiledPolicy, registers: RegisterSet) -> list[str]:
    known = {r.id for r in policy.rules}
    return [
        f"job description {jd.role} lists unknown rule {rid}"
        for jd in registers.jobdesc
        for rid in jd.rule_ids
        if rid not in known
    ]
