"""Deterministic synthetic audit scenarios with a ground-truth list of expected findings.

The generator builds the log from self-contained episodes (a training run,
a release, a review, ...). Each episode decides up front whether it is
compliant, and records the finding ids it must produce from its own tables
of registers and thresholds, so the truth file never depends on the engine.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Any

from .events import format_timestamp

BASE_TS = datetime(2024, 1, 1, tzinfo=timezone.utc)
HOURS_THRESHOLD = 48.0
JUSTIFY_DAYS = 14
MAX_IMBALANCE = 2
SEVERITY_MAP = {"low": 0, "medium": 1, "high": 2}

PROJECTS = ("atlas", "borealis", "cygnus", "draco")
# draco's only ethics-trained member let the qualification lapse before the log starts.
ETHICS_TRAINING = {
    "atlas": (date(2020, 1, 1), date(2035, 12, 31)),
    "borealis": (date(2021, 6, 1), date(2035, 12, 31)),
    "cygnus": (date(2020, 1, 1), date(2035, 12, 31)),
    "draco": (date(2019, 1, 1), date(2023, 6, 30)),
}
HAS_RELEASE_MANAGER = ("atlas", "borealis", "cygnus")

REVIEW_TYPES = ("code", "design", "safety")
AUTHOR_ORGS = ("org-a", "org-b", "org-c")
REVIEWER_COMPETENCE: dict[str, list[tuple[str, date, date]]] = {
    "rev-01": [("code", date(2020, 1, 1), date(2035, 12, 31)), ("design", date(2020, 1, 1), date(2035, 12, 31))],
    "rev-02": [("code", date(2020, 1, 1), date(2035, 12, 31))],
    "rev-03": [("safety", date(2020, 1, 1), date(2035, 12, 31)), ("code", date(2020, 1, 1), date(2023, 12, 31))],
    "rev-04": [("design", date(2020, 1, 1), date(2024, 3, 31)), ("safety", date(2024, 2, 1), date(2035, 12, 31))],
    "rev-05": [("code", date(2020, 1, 1), date(2035, 12, 31)), ("safety", date(2020, 1, 1), date(2035, 12, 31)),
               ("design", date(2020, 1, 1), date(2035, 12, 31))],
    "rev-06": [],
}
REVIEWER_INDEPENDENCE: dict[tuple[str, str], int] = {
    ("rev-01", "org-a"): 2, ("rev-01", "org-b"): 1,
    ("rev-02", "org-a"): 0, ("rev-02", "org-b"): 2, ("rev-02", "org-c"): 2,
    ("rev-03", "org-c"): 1,
    ("rev-04", "org-a"): 1, ("rev-04", "org-b"): 1, ("rev-04", "org-c"): 1,
    ("rev-05", "org-a"): 2, ("rev-05", "org-b"): 2, ("rev-05", "org-c"): 2,
    ("rev-06", "org-b"): 0,
}

MASCULINE_STEMS = (
    "active", "adventurous", "aggress", "ambitio", "analy", "assert", "athlet", "autonom", "boast",
    "challeng", "compet", "confident", "courag", "decisive", "determin", "dominant", "force", "greedy",
    "headstrong", "hierarch", "hostil", "impulsive", "independen", "individual", "intellect", "lead",
    "logic", "masculine", "objective", "opinion", "outspoken", "persist", "principle", "reckless",
    "stubborn", "superior", "ninja", "rockstar",
)
FEMININE_STEMS = (
    "affectionate", "cheer", "commit", "communal", "compassion", "connect", "considerate", "cooperat",
    "depend", "emotiona", "empath", "feminine", "gentle", "honest", "interpersonal", "interdependen",
    "kind", "kinship", "loyal", "modesty", "nurtur", "pleasant", "polite", "quiet", "respon",
    "sensitiv", "submissive", "support", "sympath", "tender", "together", "trust", "understand", "warm",
    "yield",
)
MASCULINE_WORDS = ("competitive", "dominant", "ambitious", "assertive", "decisive", "determined", "leader",
                   "rockstar", "ninja", "fearless-individual")
FEMININE_WORDS = ("supportive", "understanding", "warm", "loyal", "compassionate", "considerate",
                  "empathetic", "trustworthy", "committed", "nurturing")
NEUTRAL_WORDS = ("we", "are", "hiring", "an", "engineer", "to", "join", "our", "team", "in", "the", "city",
                 "role", "with", "experience", "python", "platform", "benefits", "remote", "salary",
                 "office", "and", "for", "you", "will", "build", "systems", "data", "pipelines")

BASELINE_HIST = (0.25, 0.25, 0.25, 0.25)
# (label, current histogram, expected harm or None)
DRIFT_TEMPLATES = (
    ("stable", (0.25, 0.25, 0.25, 0.25), None),  # psi 0
    ("mild", (0.40, 0.25, 0.20, 0.15), 2),  # psi ~0.133
    ("strong", (0.55, 0.25, 0.12, 0.08), 4),  # psi ~0.526
)

RULE_HARM = {
    "bias-before-training": 4,
    "datasheet-on-file": 2,
    "ethics-issues-closed": 5,
    "ethics-trained-team": 3,
    "competent-reviewer": 4,
    "independent-reviewer": 3,
    "justified-overrides": 4,
    "working-hours": 3,
    "inclusive-postings": 2,
    "model-drift": 4,
}

POLICY_TEXT = """\
# Synthetic safety, ethics and quality plan used by the acceptance fixtures.
policy "fixture-seq-plan" {
  version = "1.0"
  organisation = "Fixture Org"
}

severity_map { low = 0 medium = 1 high = 2 }

commitment unbiased-training {
  statement = "Models are only trained on datasets that were assessed for bias and documented"
  rules = [bias-before-training, datasheet-on-file]
}
commitment ethical-release {
  statement = "No release ships with open ethics issues or without an ethics-trained team member"
  rules = [ethics-issues-closed, ethics-trained-team]
}
commitment qualified-review {
  statement = "Reviews are performed by competent and sufficiently independent reviewers"
  rules = [competent-reviewer, independent-reviewer]
}
commitment justified-exceptions {
  statement = "Every rule override is justified promptly"
  rules = [justified-overrides]
}
commitment wellbeing {
  statement = "Nobody is expected to work excessive hours"
  rules = [working-hours]
}
commitment inclusive-hiring {
  statement = "Job descriptions do not use gender-biased wording"
  rules = [inclusive-postings]
}
commitment stable-models {
  statement = "Deployed models are retrained when their inputs drift"
  rules = [model-drift]
}

rule bias-before-training {
  kind = obligation
  harm = 4
  description = "Every dataset used for training was assessed for bias beforehand"
  trigger = build.training_run
  require = dataset.bias_assessment
  mode = exists_before
  join_on = dataset_id
}

rule datasheet-on-file {
  kind = legitimacy
  harm = 2
  trigger = build.training_run
  check = register_lookup
  register = datasheets
  key_field = dataset_id
}

rule ethics-issues-closed {
  kind = obligation
  harm = 5
  trigger = build.release
  require = issue.opened
  filter = "label=ethics"
  mode = all_closed_before
  close_type = issue.resolved
  join_on = issue_id
}

rule ethics-trained-team {
  kind = legitimacy
  harm = 3
  trigger = build.release
  check = team_qualification
  qualification = "ethics-training"
}

rule competent-reviewer {
  kind = legitimacy
  harm = 4
  trigger = doc.review_completed
  check = reviewer_competence
  qualification_field = review_type
}

rule independent-reviewer {
  kind = legitimacy
  harm = 3
  trigger = doc.review_completed
  check = reviewer_independence
  severity_field = severity
}

rule justified-overrides {
  kind = exception
  harm = 4
  override_type = rule.override
  justification_type = rule.justification
  join_on = override_id
  justify_within_days = 14
}

rule working-hours {
  kind = hours
  harm = 3
  threshold_hours = 48
  consecutive_weeks = 1
}

rule inclusive-postings {
  kind = gate
  harm = 2
  trigger = job_posting.draft
  text_field = text
  lexicon = "lexicon.txt"
  max_imbalance = 2
}

rule model-drift {
  kind = drift
  harm = 4
  feature = "income"
  warn_threshold = 0.1
  alarm_threshold = 0.25
  risk_cost = 1000
  mitigation_cost = 2500
}
"""


def lexicon_text() -> str:
    lines = ["# Gender-coded word stems (prefix match).", "[masculine]"]
    lines += sorted(MASCULINE_STEMS)
    lines += ["", "[feminine]"]
    lines += sorted(FEMININE_STEMS)
    return "\n".join(lines) + "\n"


@dataclass
class _Pending:
    type: str
    project: str
    actor: str | None
    payload: dict[str, Any]
    gap: timedelta


@dataclass
class _Episode:
    events: list[_Pending] = field(default_factory=list)
    truths: list[tuple[str, int, dict[str, Any]]] = field(default_factory=list)

    def add(self, type_: str, project: str, actor: str | None, payload: dict[str, Any],
            gap: timedelta | None = None, rng: random.Random | None = None) -> int:
        if gap is None:
            gap = timedelta(minutes=rng.randint(1, 30)) if rng else timedelta(minutes=5)
        self.events.append(_Pending(type_, project, actor, payload, gap))
        return len(self.events) - 1

    def expect(self, rule_id: str, local_index: int, **info: Any) -> None:
        self.truths.append((rule_id, local_index, info))


class FixtureGenerator:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.seed = seed
        self.clock = BASE_TS
        self.events: list[dict[str, Any]] = []
        self.truth: list[dict[str, Any]] = []
        self.counter = 0
        # A standing entry keeps the register non-empty even for tiny logs.
        self.datasheets: list[dict[str, Any]] = [
            {"dataset_id": "ds-reference", "uri": "https://data.example/ds-reference", "properties": {}}
        ]

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}-{self.counter:05d}"

    def commit(self, ep: _Episode) -> None:
        seqs = []
        for pending in ep.events:
            self.clock += pending.gap
            seq = len(self.events) + 1
            record: dict[str, Any] = {
                "seq": seq,
                "ts": format_timestamp(self.clock),
                "type": pending.type,
                "project": pending.project,
                "payload": pending.payload,
            }
            if pending.actor is not None:
                record["actor"] = pending.actor
            self.events.append(record)
            seqs.append((seq, self.clock))
        for rule_id, local, info in ep.truths:
            seq = seqs[local][0]
            entry = {"id": f"{rule_id}:{seq}", "rule_id": rule_id, "trigger_seq": seq,
                     "harm": info.pop("harm", RULE_HARM[rule_id])}
            entry.update(info)
            self.truth.append(entry)

    def when(self, ep: _Episode, local: int) -> datetime:
        """Timestamp an episode event will get when committed from the current clock."""
        t = self.clock
        for pending in ep.events[: local + 1]:
            t += pending.gap
        return t

    # -- episodes -------------------------------------------------------

    def training(self) -> _Episode:
        rng, ep = self.rng, _Episode()
        project = rng.choice(PROJECTS)
        ml = f"ml-{project}"
        dataset = self.fresh("ds")
        if rng.random() < 0.8:
            self.datasheets.append({"dataset_id": dataset, "uri": f"https://data.example/{dataset}",
                                    "properties": {"licence": "internal", "collection": "survey"}})
            has_sheet = True
        else:
            has_sheet = False
        ep.add("dataset.registered", project, ml, {"dataset_id": dataset}, rng=rng)
        variant = rng.choices(("ok", "missing", "late", "elsewhere"), weights=(6, 2, 1, 1))[0]
        if variant == "ok":
            ep.add("dataset.bias_assessment", project, ml, {"dataset_id": dataset, "method": "disparity-audit"}, rng=rng)
        elif variant == "elsewhere":
            other = rng.choice([p for p in PROJECTS if p != project])
            ep.add("dataset.bias_assessment", other, f"ml-{other}", {"dataset_id": dataset, "method": "disparity-audit"}, rng=rng)
        runs = 2 if rng.random() < 0.2 else 1
        for _ in range(runs):
            build = self.fresh("build")
            i = ep.add("build.training_run", project, ml, {"build_id": build, "dataset_id": dataset}, rng=rng)
            if variant != "ok":
                ep.expect("bias-before-training", i)
            if not has_sheet:
                ep.expect("datasheet-on-file", i)
        if variant == "late":
            ep.add("dataset.bias_assessment", project, ml, {"dataset_id": dataset, "method": "disparity-audit"}, rng=rng)
        return ep

    def release(self) -> _Episode:
        rng, ep = self.rng, _Episode()
        project = rng.choice(PROJECTS)
        qa = f"qa-{project}"
        variant = rng.choices(("clean", "closed", "open-ethics", "open-other"), weights=(3, 3, 2, 2))[0]
        issues = []
        if variant != "clean":
            for _ in range(rng.randint(1, 2)):
                iid = self.fresh("iss")
                label = "ethics" if variant != "open-other" else rng.choice(("bug", "performance"))
                ep.add("issue.opened", project, qa, {"issue_id": iid, "label": label}, rng=rng)
                issues.append(iid)
        late = []
        if variant == "closed":
            for iid in issues:
                ep.add("issue.resolved", project, qa, {"issue_id": iid}, rng=rng)
        elif variant == "open-ethics":
            late = issues[-1:]
            for iid in issues[:-1]:
                ep.add("issue.resolved", project, qa, {"issue_id": iid}, rng=rng)
        else:
            late = issues
        rm = f"rm-{project}" if project in HAS_RELEASE_MANAGER else f"lead-{project}"
        i = ep.add("build.release", project, rm, {"build_id": self.fresh("build")}, rng=rng)
        if variant == "open-ethics":
            ep.expect("ethics-issues-closed", i)
        lo, hi = ETHICS_TRAINING[project]
        if not lo <= self.when(ep, i).date() <= hi:
            ep.expect("ethics-trained-team", i)
        for iid in late:
            ep.add("issue.resolved", project, qa, {"issue_id": iid}, rng=rng)
        return ep

    def review(self) -> _Episode:
        rng, ep = self.rng, _Episode()
        project = rng.choice(PROJECTS)
        reviewer = rng.choice(sorted(REVIEWER_COMPETENCE))
        review_type = rng.choice(REVIEW_TYPES)
        severity = rng.choice(sorted(SEVERITY_MAP))
        org = rng.choice(AUTHOR_ORGS)
        payload = {"doc_id": self.fresh("doc"), "review_type": review_type, "severity": severity,
                   "author_org": org, "pages": rng.randint(2, 40)}
        i = ep.add("doc.review_completed", project, reviewer, payload, rng=rng)
        day = self.when(ep, i).date()
        if not any(q == review_type and lo <= day <= hi for q, lo, hi in REVIEWER_COMPETENCE[reviewer]):
            ep.expect("competent-reviewer", i)
        level = REVIEWER_INDEPENDENCE.get((reviewer, org))
        if level is None or level < SEVERITY_MAP[severity]:
            ep.expect("independent-reviewer", i)
        return ep

    def override(self) -> _Episode:
        rng, ep = self.rng, _Episode()
        project = rng.choice(PROJECTS)
        actor = f"lead-{project}"
        oid = self.fresh("ovr")
        i = ep.add("rule.override", project, actor, {"rule_ref": rng.choice(sorted(RULE_HARM)), "override_id": oid}, rng=rng)
        variant = rng.choices(("prompt", "late", "boundary", "none", "wrong-id"), weights=(5, 2, 1, 2, 1))[0]
        if variant == "prompt":
            gap = timedelta(days=rng.randint(0, 13), hours=rng.randint(1, 23))
        elif variant == "late":
            gap = timedelta(days=rng.randint(15, 20))
        elif variant == "boundary":
            gap = timedelta(days=JUSTIFY_DAYS)
        else:
            gap = timedelta(days=rng.randint(0, 3), hours=1)
        if variant != "none":
            ref = oid if variant != "wrong-id" else self.fresh("ovr")
            ep.add("rule.justification", project, actor, {"override_id": ref, "reason": "emergency fix"}, gap=gap)
        if variant == "prompt":
            ep.expect("justified-overrides", i, harm=1, justified=True)
        else:
            ep.expect("justified-overrides", i, justified=False)
        return ep

    def hours(self) -> _Episode:
        rng, ep = self.rng, _Episode()
        project = rng.choice(PROJECTS)
        worker = self.fresh("worker")
        week = BASE_TS - timedelta(days=7 * rng.randint(2, 150))
        variant = rng.choices(("normal", "exactly-48", "overtime"), weights=(3, 1, 2))[0]
        if variant == "normal":
            durations = [rng.randint(4, 9) for _ in range(5)]
        elif variant == "exactly-48":
            durations = [8] * 6
        else:
            durations = [rng.randint(8, 12) for _ in range(5)] + [rng.randint(6, 12)]
        span_weekend = rng.random() < 0.3
        worked = 0.0
        crossed = False
        for day, hours in enumerate(durations):
            start = week + timedelta(days=day, hours=8)
            end = start + timedelta(hours=hours)
            i = ep.add("activity.session", project, worker,
                       {"start": format_timestamp(start), "end": format_timestamp(end)}, rng=rng)
            worked += hours
            if not crossed and worked > HOURS_THRESHOLD:
                crossed = True
                ep.expect("working-hours", i)
        if span_weekend:
            # Sunday 22:00 to Monday 02:00: two hours land in each ISO week.
            start = week + timedelta(days=6, hours=22)
            i = ep.add("activity.session", project, worker,
                       {"start": format_timestamp(start), "end": format_timestamp(start + timedelta(hours=4))}, rng=rng)
            worked += 2
            if not crossed and worked > HOURS_THRESHOLD:
                crossed = True
                ep.expect("working-hours", i)
        return ep

    def posting(self) -> _Episode:
        rng, ep = self.rng, _Episode()
        project = rng.choice(PROJECTS)
        m, f = rng.randint(0, 4), rng.randint(0, 3)
        words = [rng.choice(MASCULINE_WORDS) for _ in range(m)] + [rng.choice(FEMININE_WORDS) for _ in range(f)]
        words += [rng.choice(NEUTRAL_WORDS) for _ in range(rng.randint(6, 14))]
        rng.shuffle(words)
        text = " ".join(words).capitalize() + "."
        pid = self.fresh("post")
        i = ep.add("job_posting.draft", project, f"lead-{project}", {"posting_id": pid, "text": text}, rng=rng)
        # "fearless-individual" tokenizes into an uncoded word plus a masculine-coded one.
        if m - f >= MAX_IMBALANCE:
            ep.expect("inclusive-postings", i)
        ep.add("job_posting.published", project, f"lead-{project}", {"posting_id": pid}, rng=rng)
        return ep

    def drift(self) -> _Episode:
        rng, ep = self.rng, _Episode()
        if rng.random() < 0.1:
            project = self.fresh("lab")
            i = ep.add("model.feature_snapshot", project, None,
                       {"feature": "income", "phase": "current", "histogram": _hist(BASELINE_HIST)}, rng=rng)
            ep.expect("model-drift", i, harm=RULE_HARM["model-drift"])
            return ep
        project = rng.choice(PROJECTS)
        ep.add("model.feature_snapshot", project, None,
               {"feature": "income", "phase": "baseline", "histogram": _hist(BASELINE_HIST)}, rng=rng)
        if rng.random() < 0.3:
            ep.add("model.feature_snapshot", project, None,
                   {"feature": "age", "phase": "current", "histogram": _hist((0.7, 0.1, 0.1, 0.1))}, rng=rng)
        _, current, harm = rng.choice(DRIFT_TEMPLATES)
        i = ep.add("model.feature_snapshot", project, None,
                   {"feature": "income", "phase": "current", "histogram": _hist(current)}, rng=rng)
        if harm is not None:
            ep.expect("model-drift", i, harm=harm)
        return ep

    def filler(self) -> _Episode:
        ep = _Episode()
        project = self.rng.choice(PROJECTS)
        ep.add("dataset.registered", project, f"ml-{project}", {"dataset_id": self.fresh("ds")}, rng=self.rng)
        return ep

    # -- driver ---------------------------------------------------------

    def generate(self, n_events: int) -> None:
        kinds = (self.training, self.release, self.review, self.override, self.hours, self.posting, self.drift)
        weights = (5, 4, 5, 1, 2, 3, 2)
        while len(self.events) < n_events:
            remaining = n_events - len(self.events)
            ep = self.rng.choices(kinds, weights=weights)[0]()
            if len(ep.events) > remaining:
                ep = self.filler()
            self.commit(ep)

    # -- registers --------------------------------------------------------

    def registers(self) -> dict[str, list[dict[str, Any]]]:
        org = [{"actor": "cto", "role": "cto"}]
        jobdesc = [
            {"role": "ml-engineer", "rule_ids": ["bias-before-training", "datasheet-on-file"]},
            {"role": "release-manager", "rule_ids": ["ethics-issues-closed", "ethics-trained-team"]},
            {"role": "qa-lead", "rule_ids": ["competent-reviewer", "independent-reviewer", "ethics-issues-closed"]},
            {"role": "project-lead", "rule_ids": ["justified-overrides", "inclusive-postings"]},
        ]
        competence = []
        for p in PROJECTS:
            org.append({"actor": f"lead-{p}", "role": "project-lead", "project": p, "reports_to": "cto"})
            org.append({"actor": f"ml-{p}", "role": "ml-engineer", "project": p, "reports_to": f"lead-{p}"})
            org.append({"actor": f"qa-{p}", "role": "qa-lead", "project": p, "reports_to": f"lead-{p}"})
            org.append({"actor": f"ethics-{p}", "role": "ethics-officer", "project": p, "reports_to": f"lead-{p}"})
            if p in HAS_RELEASE_MANAGER:
                org.append({"actor": f"rm-{p}", "role": "release-manager", "project": p, "reports_to": f"lead-{p}"})
            lo, hi = ETHICS_TRAINING[p]
            competence.append({"actor": f"ethics-{p}", "qualification": "ethics-training",
                               "valid_from": lo.isoformat(), "valid_to": hi.isoformat()})
        for reviewer in sorted(REVIEWER_COMPETENCE):
            for q, lo, hi in REVIEWER_COMPETENCE[reviewer]:
                competence.append({"actor": reviewer, "qualification": q,
                                   "valid_from": lo.isoformat(), "valid_to": hi.isoformat()})
        independence = [{"actor": a, "subject": s, "level": lvl}
                        for (a, s), lvl in sorted(REVIEWER_INDEPENDENCE.items())]
        return {
            "competence": competence,
            "independence": independence,
            "orgchart": org,
            "jobdesc": jobdesc,
            "datasheets": self.datasheets,
        }


def _hist(probs: tuple[float, ...]) -> str:
    return ",".join(f"{p:g}" for p in probs)


def _jsonl(records: list[dict[str, Any]]) -> str:
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)


def write_fixture(out_dir: str | Path, seed: int = 42, n_events: int = 1000) -> dict[str, Any]:
    """Generate a scenario into ``out_dir``; identical (seed, n_events) give byte-identical files."""
    if n_events < 0:
        raise ValueError("n_events must be >= 0")
    out = Path(out_dir)
    gen = FixtureGenerator(seed)
    gen.generate(n_events)
    reg_dir = out / "registers"
    reg_dir.mkdir(parents=True, exist_ok=True)
    (out / "policy.pol").write_text(POLICY_TEXT, encoding="utf-8")
    (out / "lexicon.txt").write_text(lexicon_text(), encoding="utf-8")
    (out / "events.jsonl").write_text(_jsonl(gen.events), encoding="utf-8")
    filenames = {"competence": "competence.jsonl", "independence": "independence.jsonl",
                 "orgchart": "orgchart.jsonl", "jobdesc": "jobdesc.jsonl", "datasheets": "datasheets.jsonl"}
    for name, records in gen.registers().items():
        (reg_dir / filenames[name]).write_text(_jsonl(records), encoding="utf-8")
    truth = sorted(gen.truth, key=lambda t: (t["trigger_seq"], t["rule_id"]))
    manifest = {"seed": seed, "events": n_events, "findings": truth}
    (out / "ground_truth.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
