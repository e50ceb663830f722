"""Event catalog, JSONL ingestion, standing registers and timeline queries."""

from __future__ import annotations

import bisect
import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, Mapping

Scalar = str | int | float | bool

# Closed catalog: event type -> required payload fields.
EVENT_CATALOG: Mapping[str, tuple[str, ...]] = {
    "dataset.registered": ("dataset_id",),
    "dataset.bias_assessment": ("dataset_id", "method"),
    "build.training_run": ("build_id", "dataset_id"),
    "build.release": ("build_id",),
    "doc.review_completed": ("doc_id", "review_type", "severity", "author_org"),
    "issue.opened": ("issue_id", "label"),
    "issue.resolved": ("issue_id",),
    "job_posting.draft": ("posting_id", "text"),
    "job_posting.published": ("posting_id",),
    "activity.session": ("start", "end"),
    "model.feature_snapshot": ("feature", "phase", "histogram"),
    "rule.override": ("rule_ref", "override_id"),
    "rule.justification": ("override_id", "reason"),
}

REGISTER_FILES = {
    "competence": "competence.jsonl",
    "independence": "independence.jsonl",
    "orgchart": "orgchart.jsonl",
    "jobdesc": "jobdesc.jsonl",
    "datasheets": "datasheets.jsonl",
}

_TS_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?Z$")
_EVENT_KEYS = {"seq", "ts", "type", "project", "actor", "payload"}


class IngestFailed(Exception):
    """Raised when an event stream or register directory has validation errors."""

    def __init__(self, errors: list[IngestError]):
        self.errors = errors
        super().__init__("; ".join(str(e) for e in errors))


@dataclass(frozen=True)
class IngestError:
    line: int
    message: str
    source: str = ""

    def __str__(self) -> str:
        where = f"{self.source}:" if self.source else "line "
        return f"{where}{self.line}: {self.message}"


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC 3339 UTC timestamp with a ``Z`` suffix."""
    if not isinstance(text, str) or not _TS_RE.match(text):
        raise ValueError(f"not an RFC 3339 UTC timestamp: {text!r}")
    return datetime.fromisoformat(text[:-1]).replace(tzinfo=timezone.utc)


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_histogram(text: str) -> list[float]:
    """Histogram payloads are comma-separated non-negative weights for at least two bins."""
    try:
        weights = [float(part) for part in str(text).split(",")]
    except ValueError as exc:
        raise ValueError(f"malformed histogram {text!r}") from exc
    if len(weights) < 2 or any(not (w >= 0.0) or w == float("inf") for w in weights):
        raise ValueError(f"malformed histogram {text!r}")
    total = sum(weights)
    if total <= 0:
        raise ValueError(f"histogram {text!r} has zero mass")
    return [w / total for w in weights]


@dataclass(frozen=True)
class Event:
    seq: int
    ts: datetime
    type: str
    project: str
    actor: str | None = None
    payload: Mapping[str, Scalar] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out: dict = {"seq": self.seq, "ts": format_timestamp(self.ts), "type": self.type, "project": self.project}
        if self.actor is not None:
            out["actor"] = self.actor
        out["payload"] = dict(self.payload)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class EventLog:
    """An ordered, validated event stream with type and join-field indexes.

    The log is treated as immutable once built; the join index is filled
    lazily per (type, field) pair, which does not change any query result.
    """

    def __init__(self, events: Iterable[Event] = ()):
        self._events: list[Event] = list(events)
        self._by_type: dict[str, list[Event]] = {}
        self._seqs_by_type: dict[str, list[int]] = {}
        self._join: dict[tuple[str, str], dict[Scalar, list[Event]]] = {}
        prev = 0
        for ev in self._events:
            if ev.seq <= prev:
                raise ValueError(f"events not in strictly increasing seq order at seq {ev.seq}")
            prev = ev.seq
            self._by_type.setdefault(ev.type, []).append(ev)
            self._seqs_by_type.setdefault(ev.type, []).append(ev.seq)
        self._all_seqs = [ev.seq for ev in self._events]

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def __getitem__(self, i: int) -> Event:
        return self._events[i]

    @property
    def events(self) -> tuple[Event, ...]:
        return tuple(self._events)

    def by_seq(self, seq: int) -> Event | None:
        seqs = self._all_seqs
        i = bisect.bisect_left(seqs, seq)
        return self._events[i] if i < len(seqs) and seqs[i] == seq else None

    def of_type(self, type_: str) -> list[Event]:
        return list(self._by_type.get(type_, ()))

    def _join_index(self, type_: str, field_name: str) -> dict[Scalar, list[Event]]:
        key = (type_, field_name)
        index = self._join.get(key)
        if index is None:
            index = {}
            for ev in self._by_type.get(type_, ()):
                if field_name in ev.payload:
                    index.setdefault(_join_key(ev.payload[field_name]), []).append(ev)
            self._join[key] = index
        return index

    def events_before(
        self, seq: int, type_: str, match: tuple[str, Scalar] | None = None
    ) -> list[Event]:
        """Events of ``type_`` with seq strictly below ``seq``, optionally joined on a payload field."""
        if match is None:
            candidates = self._by_type.get(type_, [])
            cut = bisect.bisect_left(self._seqs_by_type.get(type_, []), seq)
            return list(candidates[:cut])
        field_name, value = match
        candidates = self._join_index(type_, field_name).get(_join_key(value), [])
        cut = bisect.bisect_left([e.seq for e in candidates], seq)
        return list(candidates[:cut])

    def digest_lines(self) -> Iterator[str]:
        for ev in self._events:
            yield ev.to_json()


def _join_key(value: Scalar) -> Scalar:
    # bool is an int subclass; keep True distinct from 1 in join lookups.
    if isinstance(value, bool):
        return ("bool", value)  # type: ignore[return-value]
    return value


class EventIngestor:
    """Line-at-a-time validator shared by batch ingestion and watch mode."""

    def __init__(self, catalog: Mapping[str, tuple[str, ...]] = EVENT_CATALOG):
        self.catalog = catalog
        self.line_no = 0
        self._last_seq = 0
        self._last_ts: datetime | None = None

    def feed(self, line: str) -> Event | IngestError:
        """Validate one line; every line is either accepted or rejected with one error."""
        self.line_no += 1
        n = self.line_no
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            return IngestError(n, f"malformed line: {exc.msg}")
        if not isinstance(raw, dict):
            return IngestError(n, "malformed line: expected a JSON object")
        extra = set(raw) - _EVENT_KEYS
        if extra:
            return IngestError(n, f"unexpected keys {sorted(extra)}")
        for key in ("seq", "ts", "type", "project", "payload"):
            if key not in raw:
                return IngestError(n, f"missing key {key!r}")
        seq = raw["seq"]
        if not isinstance(seq, int) or isinstance(seq, bool) or seq < 1:
            return IngestError(n, "seq must be a positive integer")
        try:
            ts = parse_timestamp(raw["ts"])
        except ValueError as exc:
            return IngestError(n, str(exc))
        type_ = raw["type"]
        if type_ not in self.catalog:
            return IngestError(n, f"unknown event type {type_!r}")
        project = raw["project"]
        if not isinstance(project, str) or not project:
            return IngestError(n, "project must be a non-empty string")
        actor = raw.get("actor")
        if actor is not None and not isinstance(actor, str):
            return IngestError(n, "actor must be a string")
        payload = raw["payload"]
        if not isinstance(payload, dict):
            return IngestError(n, "payload must be an object")
        for k, v in payload.items():
            if not isinstance(v, (str, int, float, bool)):
                return IngestError(n, f"payload field {k!r} must be a string, number or boolean")
        missing = [f for f in self.catalog[type_] if f not in payload]
        if missing:
            return IngestError(n, f"missing required payload field(s) {missing} for {type_}")
        problem = _check_payload(type_, payload)
        if problem:
            return IngestError(n, problem)
        if seq <= self._last_seq:
            return IngestError(n, f"seq regression at line {n}")
        if self._last_ts is not None and ts < self._last_ts:
            return IngestError(n, f"ts regression at line {n}")
        self._last_seq = seq
        self._last_ts = ts
        return Event(seq=seq, ts=ts, type=type_, project=project, actor=actor, payload=payload)


def _check_payload(type_: str, payload: Mapping[str, Scalar]) -> str | None:
    if type_ == "activity.session":
        try:
            start = parse_timestamp(payload["start"])  # type: ignore[arg-type]
            end = parse_timestamp(payload["end"])  # type: ignore[arg-type]
        except ValueError as exc:
            return f"activity.session: {exc}"
        if start > end:
            return "activity.session: start after end"
    elif type_ == "model.feature_snapshot":
        if payload["phase"] not in ("baseline", "current"):
            return "model.feature_snapshot: phase must be baseline or current"
        try:
            parse_histogram(payload["histogram"])  # type: ignore[arg-type]
        except ValueError as exc:
            return f"model.feature_snapshot: {exc}"
    return None


def ingest_events(lines: Iterable[str]) -> EventLog:
    """Validate JSON Lines event records into an :class:`EventLog`.

    Every line is either accepted or yields exactly one error. Raises
    :class:`IngestFailed` carrying all errors if any line was rejected.
    """
    ingestor = EventIngestor()
    events: list[Event] = []
    errors: list[IngestError] = []
    for line in lines:
        result = ingestor.feed(line)
        if isinstance(result, IngestError):
            errors.append(result)
        else:
            events.append(result)
    if errors:
        raise IngestFailed(errors)
    return EventLog(events)


def read_event_file(path: str | Path) -> EventLog:
    with open(path, encoding="utf-8") as fh:
        return ingest_events(line.rstrip("\n") for line in fh)


# ---------------------------------------------------------------------------
# registers


@dataclass(frozen=True)
class CompetenceEntry:
    actor: str
    qualification: str
    valid_from: date
    valid_to: date

    def valid_at(self, when: datetime) -> bool:
        return self.valid_from <= when.date() <= self.valid_to


@dataclass(frozen=True)
class IndependenceEntry:
    actor: str
    subject: str
    level: int


@dataclass(frozen=True)
class OrgEntry:
    actor: str
    role: str
    project: str | None = None
    reports_to: str | None = None


@dataclass(frozen=True)
class JobDescriptionEntry:
    role: str
    rule_ids: tuple[str, ...]


@dataclass(frozen=True)
class DatasheetEntry:
    dataset_id: str
    uri: str
    properties: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RegisterSet:
    competence: tuple[CompetenceEntry, ...] = ()
    independence: tuple[IndependenceEntry, ...] = ()
    orgchart: tuple[OrgEntry, ...] = ()
    jobdesc: tuple[JobDescriptionEntry, ...] = ()
    datasheets: tuple[DatasheetEntry, ...] = ()

    def get(self, name: str) -> tuple:
        return getattr(self, name)

    def keys_of(self, name: str) -> set[str]:
        """Lookup keys used by ``register_lookup`` checks."""
        key_attr = {
            "competence": "actor",
            "independence": "actor",
            "orgchart": "actor",
            "jobdesc": "role",
            "datasheets": "dataset_id",
        }[name]
        return {getattr(entry, key_attr) for entry in self.get(name)}


def _require_str(rec: dict, key: str, optional: bool = False) -> str | None:
    value = rec.get(key)
    if value is None and optional:
        return None
    if not isinstance(value, str) or not value:
        raise ValueError(f"field {key!r} must be a non-empty string")
    return value


def _parse_register_record(name: str, rec: dict):
    if name == "competence":
        entry = CompetenceEntry(
            actor=_require_str(rec, "actor"),
            qualification=_require_str(rec, "qualification"),
            valid_from=date.fromisoformat(_require_str(rec, "valid_from")),
            valid_to=date.fromisoformat(_require_str(rec, "valid_to")),
        )
        if entry.valid_from > entry.valid_to:
            raise ValueError("valid_from after valid_to")
        return entry
    if name == "independence":
        level = rec.get("level")
        if not isinstance(level, int) or isinstance(level, bool) or level < 0:
            raise ValueError("level must be an integer >= 0")
        return IndependenceEntry(_require_str(rec, "actor"), _require_str(rec, "subject"), level)
    if name == "orgchart":
        return OrgEntry(
            actor=_require_str(rec, "actor"),
            role=_require_str(rec, "role"),
            project=_require_str(rec, "project", optional=True),
            reports_to=_require_str(rec, "reports_to", optional=True),
        )
    if name == "jobdesc":
        ids = rec.get("rule_ids")
        if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
            raise ValueError("rule_ids must be a list of strings")
        return JobDescriptionEntry(_require_str(rec, "role"), tuple(ids))
    if name == "datasheets":
        props = rec.get("properties", {})
        if not isinstance(props, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in props.items()
        ):
            raise ValueError("properties must map strings to strings")
        return DatasheetEntry(_require_str(rec, "dataset_id"), _require_str(rec, "uri"), props)
    raise KeyError(name)


def find_reports_to_cycle(entries: Iterable[OrgEntry]) -> list[str] | None:
    graph: dict[str, set[str]] = {}
    for e in entries:
        graph.setdefault(e.actor, set())
        if e.reports_to:
            graph[e.actor].add(e.reports_to)
            graph.setdefault(e.reports_to, set())
    state: dict[str, int] = {}

    def visit(node: str, path: list[str]) -> list[str] | None:
        state[node] = 1
        path.append(node)
        for nxt in sorted(graph[node]):
            if state.get(nxt) == 1:
                return path[path.index(nxt):] + [nxt]
            if nxt not in state:
                found = visit(nxt, path)
                if found:
                    return found
        path.pop()
        state[node] = 2
        return None

    for node in sorted(graph):
        if node not in state:
            found = visit(node, [])
            if found:
                return found
    return None


def load_registers(directory: str | Path) -> RegisterSet:
    """Load the five register files from ``directory``; absent files give empty registers."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"register directory not found: {directory}")
    errors: list[IngestError] = []
    loaded: dict[str, list] = {}
    for name, filename in REGISTER_FILES.items():
        entries: list = []
        path = directory / filename
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                for n, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        rec = json.loads(line)
                        if not isinstance(rec, dict):
                            raise ValueError("expected a JSON object")
                        entries.append(_parse_register_record(name, rec))
                    except (ValueError, TypeError) as exc:
                        errors.append(IngestError(n, f"malformed record: {exc}", filename))
        loaded[name] = entries

    seen: dict[str, int] = {}
    for i, entry in enumerate(loaded["datasheets"], start=1):
        if entry.dataset_id in seen:
            errors.append(IngestError(i, f"duplicate dataset_id {entry.dataset_id}", REGISTER_FILES["datasheets"]))
        seen[entry.dataset_id] = i
    cycle = find_reports_to_cycle(loaded["orgchart"])
    if cycle:
        errors.append(IngestError(0, "cycle in reports_to: " + " -> ".join(cycle), REGISTER_FILES["orgchart"]))
    if errors:
        raise IngestFailed(errors)
    return RegisterSet(**{name: tuple(v) for name, v in loaded.items()})
