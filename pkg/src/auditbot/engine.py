"""Rule evaluation over event logs: obligations, legitimacy lookups, exceptions and the analytic checks.

Every rule is evaluated by a small stateful evaluator that sees events in
seq order. A finding's trigger is always the event being observed, and
(apart from exception justifications, which may arrive later and upgrade
an existing finding) it depends only on events with a lower seq. Batch
audits simply feed the whole log; watch mode feeds one line at a time.
"""

from __future__ import annotations

import fnmatch
import hashlib
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from typing import Any, Iterable, Mapping

from .analytics import Histogram, iso_week_label, lexicon_imbalance, psi, split_by_week
from .events import Event, EventLog, RegisterSet, parse_histogram, parse_timestamp
from .policy_dsl import CompiledPolicy, CompiledRule

Window = tuple[int | None, int | None]


@dataclass(frozen=True)
class Finding:
    id: str
    rule_id: str
    kind: str
    harm: int
    project: str
    trigger_seq: int
    evidence_seqs: tuple[int, ...]
    message: str
    subject_actor: str | None = None
    metrics: Mapping[str, Any] = field(default_factory=dict)
    justified: bool | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "rule_id": self.rule_id,
            "kind": self.kind,
            "harm": self.harm,
            "project": self.project,
            "trigger_seq": self.trigger_seq,
            "evidence_seqs": list(self.evidence_seqs),
            "message": self.message,
        }
        if self.subject_actor is not None:
            out["subject_actor"] = self.subject_actor
        if self.metrics:
            out["metrics"] = dict(self.metrics)
        if self.justified is not None:
            out["justified"] = self.justified
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Finding:
        return cls(
            id=d["id"],
            rule_id=d["rule_id"],
            kind=d["kind"],
            harm=d["harm"],
            project=d["project"],
            trigger_seq=d["trigger_seq"],
            evidence_seqs=tuple(d["evidence_seqs"]),
            message=d["message"],
            subject_actor=d.get("subject_actor"),
            metrics=dict(d.get("metrics", {})),
            justified=d.get("justified"),
        )


@dataclass(frozen=True)
class FindingSet:
    findings: tuple[Finding, ...]
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.findings)

    def __len__(self) -> int:
        return len(self.findings)

    def ids(self) -> list[str]:
        return [f.id for f in self.findings]


def _finding(rule: CompiledRule, event: Event, evidence: Iterable[int], message: str, **kw: Any) -> Finding:
    return Finding(
        id=f"{rule.id}:{event.seq}",
        rule_id=rule.id,
        kind=rule.kind,
        harm=kw.pop("harm", rule.harm),
        project=event.project,
        trigger_seq=event.seq,
        evidence_seqs=tuple(sorted(set(evidence) | {event.seq})),
        message=message,
        **kw,
    )


def _scalar_text(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _join_value(value: Any) -> Any:
    return ("bool", value) if isinstance(value, bool) else value


class Evaluator:
    """Base class: ``observe`` returns findings created or updated by one event."""

    def __init__(self, rule: CompiledRule, in_window=lambda seq: True):
        self.rule = rule
        self.in_window = in_window

    def in_scope(self, event: Event) -> bool:
        return self.rule.scope is None or fnmatch.fnmatchcase(event.project, self.rule.scope)

    def observe(self, event: Event) -> list[Finding]:
        raise NotImplementedError


class ExistsBeforeEvaluator(Evaluator):
    def __init__(self, rule, in_window=lambda seq: True):
        super().__init__(rule, in_window)
        p = rule.params
        self.trigger, self.require, self.join_on = p["trigger"], p["require"], p["join_on"]
        self.seen: dict[Any, list[tuple[int, str]]] = {}

    def observe(self, event: Event) -> list[Finding]:
        out: list[Finding] = []
        if event.type == self.trigger and self.in_scope(event):
            value = event.payload.get(self.join_on)
            if value is None:
                out.append(_finding(self.rule, event, (), f"{self.trigger} at seq {event.seq} lacks {self.join_on}; "
                                    f"cannot confirm an earlier {self.require}"))
            else:
                examined = self.seen.get(_join_value(value), [])
                if not any(project == event.project for _, project in examined):
                    out.append(_finding(
                        self.rule, event, (s for s, _ in examined),
                        f"{self.trigger} with {self.join_on}={_scalar_text(value)} at seq {event.seq} "
                        f"has no earlier {self.require} in project {event.project}",
                    ))
        if event.type == self.require and self.join_on in event.payload:
            self.seen.setdefault(_join_value(event.payload[self.join_on]), []).append((event.seq, event.project))
        return out


class AllClosedBeforeEvaluator(Evaluator):
    def __init__(self, rule, in_window=lambda seq: True):
        super().__init__(rule, in_window)
        p = rule.params
        self.trigger, self.require, self.close = p["trigger"], p["require"], p["close_type"]
        self.join_on = p["join_on"]
        self.filter = p.get("filter")
        # project -> join value -> seqs of still-open events
        self.pending: dict[str, dict[Any, list[int]]] = {}

    def _passes(self, event: Event) -> bool:
        if self.filter is None:
            return True
        key, want = self.filter
        return key in event.payload and _scalar_text(event.payload[key]) == want

    def observe(self, event: Event) -> list[Finding]:
        out: list[Finding] = []
        if event.type == self.trigger and self.in_scope(event):
            still_open = sorted(s for seqs in self.pending.get(event.project, {}).values() for s in seqs)
            if still_open:
                out.append(_finding(
                    self.rule, event, still_open,
                    f"{self.trigger} at seq {event.seq} while {len(still_open)} {self.require} item(s) "
                    f"had no {self.close} (open at seq {', '.join(map(str, still_open))})",
                ))
        if event.type == self.close:
            key = _join_value(event.payload.get(self.join_on))
            self.pending.get(event.project, {}).pop(key, None)
        if event.type == self.require and self._passes(event):
            key = _join_value(event.payload.get(self.join_on))
            self.pending.setdefault(event.project, {}).setdefault(key, []).append(event.seq)
        return out


class LegitimacyEvaluator(Evaluator):
    def __init__(self, rule, registers: RegisterSet, severity_map: Mapping[str, int], in_window=lambda seq: True):
        super().__init__(rule, in_window)
        p = rule.params
        self.check = p["check"]
        self.trigger = p["trigger"]
        self.registers = registers
        self.severity_map = dict(severity_map)
        self.config_reported = False
        needed = {
            "reviewer_competence": ("competence",),
            "reviewer_independence": ("independence",),
            "team_qualification": ("competence", "orgchart"),
            "register_lookup": (p.get("register"),),
        }[self.check]
        self.missing = [name for name in needed if not registers.get(name)]
        self.competence: dict[tuple[str, str], list] = {}
        for entry in registers.competence:
            self.competence.setdefault((entry.actor, entry.qualification), []).append(entry)
        self.independence: dict[tuple[str, str], int] = {}
        for entry in registers.independence:
            key = (entry.actor, entry.subject)
            self.independence[key] = max(entry.level, self.independence.get(key, entry.level))
        self.members: dict[str | None, set[str]] = {}
        for entry in registers.orgchart:
            self.members.setdefault(entry.project, set()).add(entry.actor)
        self.lookup_keys = registers.keys_of(p["register"]) if self.check == "register_lookup" else set()

    def _competent(self, actor: str | None, qualification: Any, when: datetime) -> bool:
        if actor is None or qualification is None:
            return False
        return any(e.valid_at(when) for e in self.competence.get((actor, _scalar_text(qualification)), ()))

    def observe(self, event: Event) -> list[Finding]:
        if event.type != self.trigger or not self.in_scope(event):
            return []
        if self.missing:
            if self.config_reported or not self.in_window(event.seq):
                return []
            self.config_reported = True
            return [_finding(self.rule, event, (), "register unavailable: " + ", ".join(self.missing)
                             + f"; {self.check} cannot be checked")]
        p = self.rule.params
        if self.check == "reviewer_competence":
            q = event.payload.get(p["qualification_field"])
            if self._competent(event.actor, q, event.ts):
                return []
            return [_finding(self.rule, event, (),
                             f"reviewer {event.actor} holds no competence entry for {_scalar_text(q)!s} valid at {event.ts.date()}",
                             subject_actor=event.actor, metrics={"qualification": _scalar_text(q)})]
        if self.check == "reviewer_independence":
            label = event.payload.get(p["severity_field"])
            org = event.payload.get("author_org")
            required = self.severity_map.get(_scalar_text(label)) if label is not None else None
            actual = self.independence.get((event.actor, _scalar_text(org))) if event.actor and org is not None else None
            if required is None:
                return [_finding(self.rule, event, (),
                                 f"severity {_scalar_text(label)!s} is not in the severity map; independence cannot be confirmed",
                                 subject_actor=event.actor, metrics={"severity": _scalar_text(label)})]
            if actual is not None and actual >= required:
                return []
            metrics: dict[str, Any] = {"required": required}
            if actual is not None:
                metrics["actual"] = actual
            detail = "no independence entry" if actual is None else f"independence level {actual}"
            return [_finding(self.rule, event, (),
                             f"reviewer {event.actor} has {detail} against {_scalar_text(org)}; "
                             f"severity {_scalar_text(label)} requires {required}",
                             subject_actor=event.actor, metrics=metrics)]
        if self.check == "team_qualification":
            q = p["qualification"]
            team = sorted(self.members.get(event.project, ()))
            if any(self._competent(a, q, event.ts) for a in team):
                return []
            return [_finding(self.rule, event, (),
                             f"no member of project {event.project} holds a valid {q} qualification",
                             metrics={"qualification": q, "team_size": len(team)})]
        key = event.payload.get(p["key_field"])
        if key is not None and _scalar_text(key) in self.lookup_keys:
            return []
        return [_finding(self.rule, event, (),
                         f"{p['key_field']}={_scalar_text(key) if key is not None else '<missing>'} "
                         f"is absent from the {p['register']} register")]


class ExceptionEvaluator(Evaluator):
    def __init__(self, rule, in_window=lambda seq: True):
        super().__init__(rule, in_window)
        p = rule.params
        self.override, self.justification, self.join_on = p["override_type"], p["justification_type"], p["join_on"]
        self.window = timedelta(days=p["justify_within_days"])
        self.pending: dict[Any, list[tuple[Event, Finding]]] = {}

    def observe(self, event: Event) -> list[Finding]:
        out: list[Finding] = []
        if event.type == self.justification:
            key = _join_value(event.payload.get(self.join_on))
            remaining = []
            for override, finding in self.pending.get(key, []):
                if event.ts - override.ts < self.window:
                    updated = replace(
                        finding,
                        harm=1,
                        justified=True,
                        evidence_seqs=tuple(sorted(set(finding.evidence_seqs) | {event.seq})),
                        message=f"override {_scalar_text(override.payload.get(self.join_on))} at seq {override.seq} "
                                f"justified at seq {event.seq}",
                    )
                    out.append(updated)
                else:
                    remaining.append((override, finding))
            if key in self.pending:
                self.pending[key] = remaining
        if event.type == self.override and self.in_scope(event):
            value = event.payload.get(self.join_on)
            finding = _finding(
                self.rule, event, (),
                f"override {_scalar_text(value)} at seq {event.seq} has no {self.justification} "
                f"within {self.rule.params['justify_within_days']} days",
                subject_actor=event.actor, justified=False,
            )
            self.pending.setdefault(_join_value(value), []).append((event, finding))
            out.append(finding)
        return out


class HoursEvaluator(Evaluator):
    def __init__(self, rule, in_window=lambda seq: True):
        super().__init__(rule, in_window)
        self.threshold_hours = rule.params["threshold_hours"]
        self.threshold = timedelta(hours=self.threshold_hours)
        self.k = rule.params["consecutive_weeks"]
        self.worked: dict[tuple[str | None, datetime], timedelta] = {}
        self.evidence: dict[tuple[str | None, datetime], list[int]] = {}
        self.breached: set[tuple[str | None, datetime]] = set()

    def observe(self, event: Event) -> list[Finding]:
        if event.type != "activity.session" or not self.in_scope(event):
            return []
        start = parse_timestamp(event.payload["start"])
        end = parse_timestamp(event.payload["end"])
        actor = event.actor
        newly: list[datetime] = []
        cursor = start
        for week, _ in split_by_week(start, end):
            stop = min(end, week + timedelta(days=7))
            key = (actor, week)
            before = self.worked.get(key, timedelta(0))
            after = before + (stop - cursor)
            self.worked[key] = after
            self.evidence.setdefault(key, []).append(event.seq)
            if before <= self.threshold < after:
                self.breached.add(key)
                newly.append(week)
            cursor = stop
        ends: set[datetime] = set()
        step = timedelta(days=7)
        for week in newly:
            for i in range(self.k):
                last = week + i * step
                if all((actor, last - j * step) in self.breached for j in range(self.k)):
                    ends.add(last)
        if not ends:
            return []
        ends_sorted = sorted(ends)
        evidence: set[int] = set()
        for last in ends_sorted:
            for j in range(self.k):
                evidence.update(self.evidence[(actor, last - j * step)])
        hours = [self.worked[(actor, w)].total_seconds() / 3600.0 for w in ends_sorted]
        labels = [iso_week_label(w) for w in ends_sorted]
        run = f"{self.k} consecutive week(s)" if self.k > 1 else "week"
        return [_finding(
            self.rule, event, evidence,
            f"{actor} worked more than {self.threshold_hours} h per {run} ending {', '.join(labels)}",
            subject_actor=actor,
            metrics={"threshold_hours": float(self.threshold_hours), "weeks": labels, "hours": hours},
        )]


class GateEvaluator(Evaluator):
    def observe(self, event: Event) -> list[Finding]:
        p = self.rule.params
        if event.type != p["trigger"] or not self.in_scope(event) or self.rule.lexicon is None:
            return []
        text = _scalar_text(event.payload.get(p["text_field"], ""))
        m, f, imbalance = lexicon_imbalance(text, self.rule.lexicon)
        if imbalance < p["max_imbalance"]:
            return []
        return [_finding(
            self.rule, event, (),
            f"{p['text_field']} of {event.type} at seq {event.seq} is masculine-coded "
            f"({m} masculine vs {f} feminine, imbalance {imbalance} >= {p['max_imbalance']})",
            subject_actor=event.actor,
            metrics={"masculine": m, "feminine": f, "imbalance": imbalance, "max_imbalance": p["max_imbalance"]},
        )]


def classify_drift(value: float, warn: float, alarm: float, harm: int) -> tuple[int, str] | None:
    """Map a PSI value to (harm, recommendation), or None below the warn band."""
    if value < warn:
        return None
    if value < alarm:
        return max(1, harm - 2), "cause for alarm"
    return harm, "the ML model might need to be changed"


class DriftEvaluator(Evaluator):
    def __init__(self, rule, in_window=lambda seq: True):
        super().__init__(rule, in_window)
        self.baselines: dict[str, tuple[int, list[float]]] = {}

    def observe(self, event: Event) -> list[Finding]:
        p = self.rule.params
        if (event.type != "model.feature_snapshot" or not self.in_scope(event)
                or _scalar_text(event.payload.get("feature")) != p["feature"]):
            return []
        probs = parse_histogram(event.payload["histogram"])  # type: ignore[arg-type]
        if event.payload.get("phase") == "baseline":
            self.baselines[event.project] = (event.seq, probs)
            return []
        base = self.baselines.get(event.project)
        if base is None:
            return [_finding(self.rule, event, (),
                             f"no baseline snapshot of {p['feature']} precedes seq {event.seq}; drift cannot be assessed")]
        base_seq, base_probs = base
        if len(base_probs) != len(probs):
            return [_finding(self.rule, event, (base_seq,),
                             f"{p['feature']} snapshots at seq {base_seq} and {event.seq} have different bins")]
        value = psi(Histogram.from_weights(base_probs), Histogram.from_weights(probs))
        verdict = classify_drift(value, p["warn_threshold"], p["alarm_threshold"], self.rule.harm)
        if verdict is None:
            return []
        harm, recommendation = verdict
        return [_finding(
            self.rule, event, (base_seq,),
            f"{p['feature']} changed since seq {base_seq} (psi {value:.4f}): {recommendation}",
            harm=harm,
            metrics={"psi": value, "warn_threshold": float(p["warn_threshold"]),
                     "alarm_threshold": float(p["alarm_threshold"])},
        )]


def make_evaluator(
    rule: CompiledRule,
    registers: RegisterSet | None = None,
    severity_map: Mapping[str, int] | None = None,
    in_window=lambda seq: True,
) -> Evaluator:
    if rule.kind == "obligation":
        cls = ExistsBeforeEvaluator if rule.params["mode"] == "exists_before" else AllClosedBeforeEvaluator
        return cls(rule, in_window)
    if rule.kind == "legitimacy":
        return LegitimacyEvaluator(rule, registers or RegisterSet(), severity_map or {}, in_window)
    if rule.kind == "exception":
        return ExceptionEvaluator(rule, in_window)
    if rule.kind == "hours":
        return HoursEvaluator(rule, in_window)
    if rule.kind == "gate":
        return GateEvaluator(rule, in_window)
    if rule.kind == "drift":
        return DriftEvaluator(rule, in_window)
    raise ValueError(f"unknown rule kind {rule.kind}")


def _window_pred(window: Window | None):
    if window is None:
        return lambda seq: True
    lo, hi = window
    return lambda seq: (lo is None or seq >= lo) and (hi is None or seq <= hi)


def _evaluate(rule, log, registers=None, severity_map=None) -> list[Finding]:
    ev = make_evaluator(rule, registers, severity_map)
    found: dict[str, Finding] = {}
    for event in log:
        for f in ev.observe(event):
            found[f.id] = f
    return sorted(found.values(), key=lambda f: (f.trigger_seq, f.rule_id))


def eval_obligation(rule: CompiledRule, log: EventLog) -> list[Finding]:
    if rule.kind != "obligation":
        raise ValueError(f"rule {rule.id} is not an obligation rule")
    return _evaluate(rule, log)


def eval_legitimacy(
    rule: CompiledRule, log: EventLog, registers: RegisterSet, severity_map: Mapping[str, int] | None = None
) -> list[Finding]:
    if rule.kind != "legitimacy":
        raise ValueError(f"rule {rule.id} is not a legitimacy rule")
    return _evaluate(rule, log, registers, severity_map)


def eval_exception(rule: CompiledRule, log: EventLog) -> list[Finding]:
    if rule.kind != "exception":
        raise ValueError(f"rule {rule.id} is not an exception rule")
    return _evaluate(rule, log)


class AuditMonitor:
    """Incremental audit over a growing event stream.

    ``feed`` returns findings first produced by that event (inside the
    window); ``result`` gives the complete, sorted :class:`FindingSet`.
    """

    def __init__(
        self,
        policy: CompiledPolicy,
        registers: RegisterSet | None = None,
        window: Window | None = None,
        clock: str | None = None,
    ):
        self.policy = policy
        self.window = window
        self.clock = clock
        pred = _window_pred(window)
        self._in_window = pred
        registers = registers or RegisterSet()
        self.evaluators = [make_evaluator(r, registers, policy.source.severity_map, pred) for r in policy.rules]
        self.findings: dict[str, Finding] = {}
        self._log_hash = hashlib.sha256()
        self.events_seen = 0

    def feed(self, event: Event) -> list[Finding]:
        self._log_hash.update(event.to_json().encode("utf-8") + b"\n")
        self.events_seen += 1
        new: list[Finding] = []
        for ev in self.evaluators:
            for f in ev.observe(event):
                if not self._in_window(f.trigger_seq):
                    continue
                if f.id not in self.findings:
                    new.append(f)
                self.findings[f.id] = f
        return new

    def meta(self) -> dict[str, Any]:
        lo, hi = self.window if self.window is not None else (None, None)
        meta: dict[str, Any] = {
            "policy_hash": self.policy.digest,
            "policy_name": self.policy.source.name,
            "log_hash": self._log_hash.hexdigest(),
            "events": self.events_seen,
            "window": {k: v for k, v in (("from_seq", lo), ("to_seq", hi)) if v is not None},
        }
        if self.clock is not None:
            meta["clock"] = self.clock
        return meta

    def result(self) -> FindingSet:
        ordered = sorted(self.findings.values(), key=lambda f: (f.trigger_seq, f.rule_id))
        return FindingSet(tuple(ordered), self.meta())


def run_audit(
    policy: CompiledPolicy,
    log: EventLog | Iterable[Event],
    registers: RegisterSet | None = None,
    window: Window | None = None,
    clock: str | None = None,
) -> FindingSet:
    """Evaluate every rule of ``policy`` over ``log``; deterministic for identical inputs."""
    monitor = AuditMonitor(policy, registers, window, clock)
    for event in log:
        monitor.feed(event)
    return monitor.result()
