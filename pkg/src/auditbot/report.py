"""Run reports: assembling findings, assessments and traces, and rendering them as JSON or text."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable

from .accountability import FailurePoint, trace_all
from .alarp import INTOLERABLE, REGIONS, AlarpParams, RiskAssessment, triage_all
from .engine import Finding, FindingSet
from .events import EventLog, RegisterSet
from .policy_dsl import CompiledPolicy, policy_to_dict
from .vault import EvidenceVault


@dataclass
class RunReport:
    meta: dict[str, Any]
    findings: list[Finding]
    assessments: list[RiskAssessment]
    traces: list[FailurePoint] = field(default_factory=list)

    @property
    def summary(self) -> dict[str, Any]:
        regions = Counter(a.region for a in self.assessments)
        return {
            "findings": len(self.findings),
            "by_region": {r: regions.get(r, 0) for r in REGIONS},
            "by_rule": dict(sorted(Counter(f.rule_id for f in self.findings).items())),
        }

    def intolerable(self) -> list[tuple[Finding, RiskAssessment]]:
        return [(f, a) for f, a in zip(self.findings, self.assessments) if a.region == INTOLERABLE]

    def exit_code(self) -> int:
        if not self.findings:
            return 0
        return 2 if self.intolerable() else 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "meta": self.meta,
            "findings": [f.to_dict() for f in self.findings],
            "assessments": [a.to_dict() for a in self.assessments],
            "summary": self.summary,
            "traces": [t.to_dict() for t in self.traces],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_text(self) -> str:
        return render_text(self.to_dict())


def rule_costs(policy: CompiledPolicy) -> dict[str, tuple[float | None, float | None]]:
    return {r.id: (r.risk_cost, r.mitigation_cost) for r in policy.rules}


def build_report(
    policy: CompiledPolicy,
    result: FindingSet,
    log: EventLog | None = None,
    registers: RegisterSet | None = None,
    trace: bool = False,
) -> RunReport:
    params = AlarpParams.from_settings(policy.source.settings)
    findings = list(result.findings)
    assessments = triage_all(findings, params, rule_costs(policy))
    traces: list[FailurePoint] = []
    if trace and log is not None:
        traces = trace_all(findings, policy, log, registers or RegisterSet())
    meta = dict(result.meta)
    meta["alarp"] = params.to_dict()
    return RunReport(meta, findings, assessments, traces)


def alert_line(finding: Finding, assessment: RiskAssessment) -> str:
    return (
        f"ALERT {assessment.region} {finding.id} rule={finding.rule_id} project={finding.project} "
        f"harm={finding.harm} likelihood={assessment.likelihood} score={assessment.score}: {finding.message}"
    )


def record_run(vault: EvidenceVault, policy: CompiledPolicy, report: RunReport) -> int:
    """Append run_meta, then each finding with its assessment (and trace); returns the run_meta index."""
    meta_record = vault.append("run_meta", {"meta": report.meta, "policy": policy_to_dict(policy.source)})
    run_index = meta_record.index
    traces = {t.finding_id: t for t in report.traces}
    for finding, assessment in zip(report.findings, report.assessments):
        vault.append("finding", {"run_index": run_index, "finding": finding.to_dict()})
        vault.append("assessment", {"run_index": run_index, "assessment": assessment.to_dict()})
        if finding.id in traces:
            vault.append("trace", {"run_index": run_index, "trace": traces[finding.id].to_dict()})
    return run_index


def _fmt_metric(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    if isinstance(value, list):
        return "[" + ", ".join(_fmt_metric(v) for v in value) + "]"
    return str(value)


def render_text(report: dict[str, Any]) -> str:
    meta, summary = report["meta"], report["summary"]
    lines = [
        f"Ethics audit report: {meta.get('policy_name', '')}",
        f"  policy sha256 {meta.get('policy_hash', '')}",
        f"  log sha256    {meta.get('log_hash', '')} ({meta.get('events', 0)} events)",
    ]
    if meta.get("clock"):
        lines.append(f"  run at        {meta['clock']}")
    window = meta.get("window") or {}
    if window:
        lines.append(f"  window        seq {window.get('from_seq', 'start')}..{window.get('to_seq', 'end')}")
    by_region = summary["by_region"]
    lines.append(
        f"\n{summary['findings']} finding(s): "
        + ", ".join(f"{by_region[r]} {r.replace('_', ' ')}" for r in reversed(REGIONS))
    )
    assessments = {a["finding_id"]: a for a in report["assessments"]}
    traces = {t["finding_id"]: t for t in report.get("traces", [])}
    for f in report["findings"]:
        a = assessments[f["id"]]
        lines.append(f"\n[{a['region'].upper()}] {f['id']} (harm {f['harm']}, likelihood {a['likelihood']}, score {a['score']})")
        lines.append(f"  {f['message']}")
        lines.append(f"  project {f['project']}; evidence seq {', '.join(map(str, f['evidence_seqs']))}")
        if f.get("metrics"):
            lines.append("  " + ", ".join(f"{k}={_fmt_metric(v)}" for k, v in sorted(f["metrics"].items())))
        if "justified" in f:
            lines.append(f"  justified: {'yes' if f['justified'] else 'no'}")
        lines.append(f"  {a['rationale']}")
        t = traces.get(f["id"])
        if t:
            chain = " -> ".join(t["escalation_chain"]) or "(none)"
            lines.append(f"  accountability: {t['located_at']}; chain {chain}")
            lines.append(f"  {t['narrative']}")
    if summary["by_rule"]:
        lines.append("\nFindings per rule:")
        for rid, n in summary["by_rule"].items():
            lines.append(f"  {rid:<32} {n}")
    return "\n".join(lines) + "\n"


def finding_pairs(report: RunReport) -> Iterable[tuple[Finding, RiskAssessment]]:
    return zip(report.findings, report.assessments)
