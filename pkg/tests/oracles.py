"""Deliberately naive reference implementations used to cross-check the library.

Nothing here imports the code under test except plain data types, and each
oracle follows the textual definition as directly as possible, trading
speed for obviousness.
"""

from __future__ import annotations

import math
import random
from datetime import datetime, timedelta, timezone

from auditbot.events import EVENT_CATALOG, Event
from auditbot.policy_dsl import OBLIGATION_MODES, PolicyDocument, RuleSpec

EPS = 1e-6


# -- obligations --------------------------------------------------------------


def same_value(a, b) -> bool:
    """Payload equality that keeps booleans apart from the integers 0 and 1."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    return a == b


def passes_filter(event, flt) -> bool:
    if flt is None:
        return True
    if isinstance(flt, str):
        flt = tuple(flt.split("="))
    key, want = flt
    if key not in event.payload:
        return False
    value = event.payload[key]
    text = ("true" if value else "false") if isinstance(value, bool) else str(value)
    return text == want


def obligation_oracle(params: dict, events: list) -> dict[int, tuple[int, ...]]:
    """Map trigger seq -> sorted evidence seqs, enumerating every (trigger, candidate) pair."""
    out: dict[int, tuple[int, ...]] = {}
    join = params["join_on"]
    for t in events:
        if t.type != params["trigger"]:
            continue
        if params["mode"] == "exists_before":
            if join not in t.payload:
                out[t.seq] = (t.seq,)
                continue
            examined = [
                e for e in events
                if e.type == params["require"] and e.seq < t.seq and join in e.payload
                and same_value(e.payload[join], t.payload[join])
            ]
            if not any(e.project == t.project for e in examined):
                out[t.seq] = tuple(sorted({t.seq} | {e.seq for e in examined}))
        else:
            unclosed = []
            for o in events:
                if not (o.type == params["require"] and o.seq < t.seq and o.project == t.project
                        and passes_filter(o, params.get("filter"))):
                    continue
                closed = any(
                    c.type == params["close_type"] and o.seq < c.seq < t.seq and c.project == t.project
                    and same_value(c.payload.get(join), o.payload.get(join))
                    and ((join in c.payload) == (join in o.payload))
                    for c in events
                )
                if not closed:
                    unclosed.append(o.seq)
            if unclosed:
                out[t.seq] = tuple(sorted({t.seq, *unclosed}))
    return out


# Event types that share a join field, so a rule over them compiles.
FAMILIES = {
    "dataset_id": ("dataset.registered", "dataset.bias_assessment", "build.training_run"),
    "issue_id": ("issue.opened", "issue.resolved"),
    "build_id": ("build.training_run", "build.release"),
    "posting_id": ("job_posting.draft", "job_posting.published"),
    "override_id": ("rule.override", "rule.justification"),
}
FIELD_VALUES = {"label": ("ethics", "bug"), "method": ("m1", "m2")}
JOIN_VALUES = ("a", "b", 1, True)
ORACLE_T0 = datetime(2024, 5, 6, tzinfo=timezone.utc)


def random_obligation_case(rng: random.Random, max_events: int = 20) -> tuple[dict, list[Event]]:
    """A random obligation rule (as raw params) and a random log of at most ``max_events`` events."""
    join = rng.choice(sorted(FAMILIES))
    family = FAMILIES[join]
    mode = rng.choice(OBLIGATION_MODES)
    if mode == "exists_before":
        params = {"trigger": rng.choice(family), "require": rng.choice(family), "mode": mode, "join_on": join}
    else:
        params = {
            "trigger": rng.choice(sorted(EVENT_CATALOG)),
            "require": rng.choice(family),
            "close_type": rng.choice(family),
            "mode": mode,
            "join_on": join,
        }
        filterable = [f for f in EVENT_CATALOG[params["require"]] if f in FIELD_VALUES]
        if filterable and rng.random() < 0.5:
            key = rng.choice(filterable)
            params["filter"] = f"{key}={rng.choice(FIELD_VALUES[key])}"
    types = sorted(set(family) | {params["trigger"]})
    events = []
    for seq in range(1, rng.randint(0, max_events) + 1):
        type_ = rng.choice(types)
        payload = {f: rng.choice(FIELD_VALUES.get(f, JOIN_VALUES)) for f in EVENT_CATALOG[type_]}
        events.append(Event(seq, ORACLE_T0 + timedelta(minutes=seq), type_, rng.choice(("p", "q")), None, payload))
    return params, events


def obligation_policy(params: dict) -> PolicyDocument:
    return PolicyDocument(name="oracle", rules=(RuleSpec("r", "obligation", 3, params=dict(params)),))


# -- psi -----------------------------------------------------------------------


def psi_oracle(p: list[float], q: list[float]) -> float:
    total = 0.0
    for a, b in zip(p, q):
        a = a if a > EPS else EPS
        b = b if b > EPS else EPS
        total += (a - b) * math.log(a / b)
    return total


# -- histogram binning -------------------------------------------------------------


def bin_counts_oracle(edges, samples) -> list[int]:
    """Count samples per left-closed, right-open bin by direct comparison."""
    counts = [0] * (len(edges) - 1)
    for x in samples:
        for i in range(len(edges) - 1):
            if edges[i] <= x < edges[i + 1]:
                counts[i] += 1
                break
    return counts


# -- working hours -----------------------------------------------------------------


def minute_hours_oracle(sessions) -> dict[tuple[str, str], float]:
    """Walk each session one minute at a time, crediting the ISO week of each minute."""
    ledger: dict[tuple[str, str], int] = {}
    for actor, start, end in sessions:
        t = start
        while t < end:
            year, week, _ = t.isocalendar()
            key = (actor, f"{year:04d}-W{week:02d}")
            ledger[key] = ledger.get(key, 0) + 1
            t += timedelta(minutes=1)
    return {k: v / 60.0 for k, v in ledger.items()}


def naive_week_start(t: datetime) -> datetime:
    midnight = t.replace(hour=0, minute=0, second=0, microsecond=0)
    return midnight - timedelta(days=t.weekday())


# -- lexicon -----------------------------------------------------------------------


def imbalance_oracle(text: str, masculine, feminine) -> tuple[int, int, int]:
    words, cur = [], []
    for ch in text.lower():
        if ch.isalnum():
            cur.append(ch)
        elif cur:
            words.append("".join(cur))
            cur = []
    if cur:
        words.append("".join(cur))
    m = sum(1 for w in words if any(w.startswith(s) for s in masculine))
    f = sum(1 for w in words if not any(w.startswith(s) for s in masculine) and any(w.startswith(s) for s in feminine))
    return m, f, m - f


# -- alarp -------------------------------------------------------------------------

# Region per cell under default thresholds, written out by hand: rows are harm 1..5, columns likelihood 1..5.
# B = broadly acceptable (score <= 4), A = alarp, I = intolerable (score >= 15).
ALARP_TABLE = (
    "BBBBA",
    "BBAAA",
    "BAAAI",
    "BAAII",
    "AAIII",
)
REGION_LETTER = {"B": "broadly_acceptable", "A": "alarp", "I": "intolerable"}


# -- policy pretty-printer -----------------------------------------------------------


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t") + '"'


def _value(v) -> str:
    if isinstance(v, list):
        return "[" + ", ".join(v) + "]"
    if isinstance(v, bool):
        raise TypeError("booleans are not policy values")
    if isinstance(v, (int, float)):
        return repr(v)
    if _is_ident(v):
        return v
    return _quote(v)


def _is_ident(s: str) -> bool:
    import re

    return re.fullmatch(r"[a-z][a-z0-9_-]*(?:\.[a-z][a-z0-9_-]*)*", s) is not None


def print_policy(doc: PolicyDocument) -> str:
    lines = [f"policy {_quote(doc.name)} {{"]
    if doc.version:
        lines.append(f"  version = {_quote(doc.version)}")
    if doc.organisation:
        lines.append(f"  organisation = {_quote(doc.organisation)}")
    for k, v in doc.settings.items():
        lines.append(f"  {k} = {v!r}")
    lines.append("}")
    if doc.severity_map:
        lines.append("severity_map {")
        lines += [f"  {k} = {v}" for k, v in doc.severity_map.items()]
        lines.append("}")
    for c in doc.commitments:
        lines.append(f"commitment {c.id} {{")
        lines.append(f"  statement = {_quote(c.statement)}")
        if c.rule_ids:
            lines.append(f"  rules = [{', '.join(c.rule_ids)}]")
        lines.append("}")
    for r in doc.rules:
        lines.append(_print_rule(r))
    return "\n".join(lines) + "\n"


def _print_rule(r: RuleSpec) -> str:
    out = [f"rule {r.id} {{", f"  kind = {r.kind}", f"  harm = {r.harm}"]
    for k in ("scope", "description", "responsible_role"):
        v = getattr(r, k)
        if v is not None:
            out.append(f"  {k} = {_quote(v)}")
    for k, v in r.params.items():
        out.append(f"  {k} = {_value(v)}")
    out.append("}")
    return "\n".join(out)
