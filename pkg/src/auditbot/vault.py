"""Append-only, SHA-256 hash-chained evidence store (JSON Lines).

Each line holds ``index, prev_hash, recorded_at, payload_kind, payload, hash``
where ``hash = sha256(prev_hash + "\\n" + payload)``. The payload text is the
canonical serialization of an envelope that repeats the index, kind and
timestamp, so every stored field is covered by the chain.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .canonical import canonical_payload, canonical_text
from .events import format_timestamp

GENESIS = "0" * 64
PAYLOAD_KINDS = ("run_meta", "finding", "assessment", "trace")
RECORD_KEYS = ("index", "prev_hash", "recorded_at", "payload_kind", "payload", "hash")

Clock = Callable[[], str]


class VaultCorrupt(Exception):
    def __init__(self, first_bad_index: int, reason: str = ""):
        self.first_bad_index = first_bad_index
        self.reason = reason
        super().__init__(f"vault fails verification at record {first_bad_index}: {reason}")


def system_clock() -> str:
    return format_timestamp(datetime.now(timezone.utc).replace(microsecond=0))


def fixed_clock(value: str) -> Clock:
    return lambda: value


def chain_hash(prev_hash: str, payload: str) -> str:
    return hashlib.sha256(prev_hash.encode("ascii") + b"\n" + payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class VaultRecord:
    index: int
    prev_hash: str
    recorded_at: str
    payload_kind: str
    payload: str
    hash: str

    @property
    def data(self) -> Any:
        return json.loads(self.payload)["data"]

    def to_line(self) -> str:
        return json.dumps(
            {k: getattr(self, k) for k in RECORD_KEYS}, ensure_ascii=False, separators=(",", ":")
        )

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in RECORD_KEYS}


def make_record(index: int, prev_hash: str, recorded_at: str, payload_kind: str, data: Any) -> VaultRecord:
    if payload_kind not in PAYLOAD_KINDS:
        raise ValueError(f"unknown payload kind {payload_kind!r}")
    payload = canonical_text({"index": index, "kind": payload_kind, "recorded_at": recorded_at, "data": data})
    return VaultRecord(index, prev_hash, recorded_at, payload_kind, payload, chain_hash(prev_hash, payload))


_HEX64 = re.compile(r"[0-9a-f]{64}")


def _is_hex64(value: Any) -> bool:
    return isinstance(value, str) and _HEX64.fullmatch(value) is not None


def check_record(raw_line: bytes, expected_index: int | None, expected_prev: str | None) -> tuple[VaultRecord | None, str]:
    """Validate one stored line; returns (record, "") or (None, reason)."""
    try:
        text = raw_line.decode("utf-8")
        obj = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None, "unparseable line"
    if not isinstance(obj, dict) or tuple(obj) != RECORD_KEYS:
        return None, "unexpected record keys"
    try:
        record = VaultRecord(**obj)
    except TypeError:
        return None, "unexpected record keys"
    if record.to_line() != text:
        return None, "record is not in canonical form"
    if not isinstance(record.index, int) or isinstance(record.index, bool):
        return None, "bad index"
    if expected_index is not None and record.index != expected_index:
        return None, f"index {record.index} out of sequence"
    if not _is_hex64(record.prev_hash) or not _is_hex64(record.hash):
        return None, "malformed hash field"
    if expected_prev is not None and record.prev_hash != expected_prev:
        return None, "prev_hash does not match the previous record"
    if not isinstance(record.payload, str):
        return None, "payload is not text"
    try:
        envelope = json.loads(record.payload)
    except json.JSONDecodeError:
        return None, "payload is not canonical JSON"
    if not isinstance(envelope, dict) or set(envelope) != {"index", "kind", "recorded_at", "data"}:
        return None, "payload envelope malformed"
    try:
        if canonical_text(envelope) != record.payload:
            return None, "payload is not canonical"
    except (TypeError, ValueError):
        return None, "payload is not canonical"
    if (envelope["index"], envelope["kind"], envelope["recorded_at"]) != (
        record.index, record.payload_kind, record.recorded_at,
    ):
        return None, "record fields disagree with the hashed payload"
    if record.payload_kind not in PAYLOAD_KINDS:
        return None, "unknown payload kind"
    if chain_hash(record.prev_hash, record.payload) != record.hash:
        return None, "hash mismatch"
    return record, ""


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    length: int
    head_hash: str
    first_bad_index: int | None = None
    reason: str = ""


def _scan(raw: bytes) -> tuple[list[VaultRecord], VerifyResult]:
    records: list[VaultRecord] = []
    lines = raw.split(b"\n")
    trailing = lines.pop()  # empty when the file ends with a newline
    prev = GENESIS
    for i, line in enumerate(lines):
        record, reason = check_record(line, i, prev)
        if record is None:
            return records, VerifyResult(False, len(records), prev, i, reason)
        records.append(record)
        prev = record.hash
    if trailing:
        return records, VerifyResult(False, len(records), prev, len(lines), "truncated final record")
    return records, VerifyResult(True, len(records), prev)


def verify_chain(path: str | Path) -> VerifyResult:
    """Recompute every hash and link; report the smallest failing index."""
    p = Path(path)
    raw = p.read_bytes() if p.exists() else b""
    return _scan(raw)[1]


def read_records(path: str | Path) -> list[VaultRecord]:
    p = Path(path)
    raw = p.read_bytes() if p.exists() else b""
    records, result = _scan(raw)
    if not result.ok:
        raise VaultCorrupt(result.first_bad_index, result.reason)
    return records


class EvidenceVault:
    """Single-writer handle. Opening verifies the existing chain; a corrupt vault refuses appends."""

    def __init__(self, path: str | Path, clock: Clock = system_clock):
        self.path = Path(path)
        self.clock = clock
        records = read_records(self.path)
        self.length = len(records)
        self.head_hash = records[-1].hash if records else GENESIS
        self._fh = None

    def append(self, payload_kind: str, data: Any) -> VaultRecord:
        record = make_record(self.length, self.head_hash, self.clock(), payload_kind, data)
        if self._fh is None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "ab")
        self._fh.write(record.to_line().encode("utf-8") + b"\n")
        self._fh.flush()
        self.length += 1
        self.head_hash = record.hash
        return record

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> EvidenceVault:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def append_record(vault: EvidenceVault, payload_kind: str, payload: Any, clock: Clock | None = None) -> VaultRecord:
    if clock is not None:
        vault.clock = clock
    return vault.append(payload_kind, payload)


# ---------------------------------------------------------------------------
# case bundles


def _finding_id_of(record: VaultRecord) -> str | None:
    data = record.data
    if record.payload_kind == "finding":
        return data["finding"]["id"]
    if record.payload_kind == "assessment":
        return data["assessment"]["finding_id"]
    if record.payload_kind == "trace":
        return data["trace"]["finding_id"]
    return None


@dataclass(frozen=True)
class CaseBundle:
    records: tuple[VaultRecord, ...]
    run_meta: tuple[VaultRecord, ...]
    head_hash: str
    finding_ids: tuple[str, ...]
    digests: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "finding_ids": list(self.finding_ids),
            "head_hash": self.head_hash,
            "digests": {k: dict(v) for k, v in self.digests.items()},
            "run_meta": [r.to_dict() for r in self.run_meta],
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> CaseBundle:
        return cls(
            records=tuple(VaultRecord(**r) for r in d["records"]),
            run_meta=tuple(VaultRecord(**r) for r in d["run_meta"]),
            head_hash=d["head_hash"],
            finding_ids=tuple(d["finding_ids"]),
            digests=d.get("digests", {}),
        )


def export_case(path: str | Path, finding_ids: Iterable[str]) -> CaseBundle:
    """Bundle the records for ``finding_ids``: the contiguous span covering them plus their run_meta records.

    ``head_hash`` is the hash of the last record in the span; an auditor
    compares it with the live vault at that index.
    """
    records = read_records(path)
    wanted = list(dict.fromkeys(finding_ids))
    selected = [r.index for r in records if _finding_id_of(r) in set(wanted)]
    present = {_finding_id_of(r) for r in records if r.payload_kind == "finding"}
    unknown = [fid for fid in wanted if fid not in present]
    if unknown:
        raise KeyError(f"finding id(s) not in vault: {', '.join(unknown)}")
    if not selected:
        raise KeyError("no finding ids given")
    lo, hi = min(selected), max(selected)
    span = tuple(records[lo : hi + 1])
    run_indexes = sorted({records[i].data["run_index"] for i in selected})
    run_meta = tuple(records[i] for i in run_indexes if i < lo)
    digests = {
        str(i): {k: records[i].data["meta"].get(k, "") for k in ("policy_hash", "log_hash")} for i in run_indexes
    }
    return CaseBundle(span, run_meta, span[-1].hash, tuple(wanted), digests)


def verify_bundle(bundle: CaseBundle, head_hash: str | None = None) -> tuple[bool, str]:
    """Check a bundle on its own; ``head_hash`` defaults to the bundle's recorded head."""
    if not bundle.records:
        return False, "empty bundle"
    prev = bundle.records[0].prev_hash
    start = bundle.records[0].index
    for offset, record in enumerate(bundle.records):
        checked, reason = check_record(record.to_line().encode("utf-8"), start + offset, prev)
        if checked is None:
            return False, f"record {record.index}: {reason}"
        prev = record.hash
    for record in bundle.run_meta:
        checked, reason = check_record(record.to_line().encode("utf-8"), None, None)
        if checked is None or record.payload_kind != "run_meta":
            return False, f"run_meta record {record.index}: {reason or 'wrong kind'}"
    expected = head_hash if head_hash is not None else bundle.head_hash
    if prev != expected:
        return False, "span does not end at the given head hash"
    meta_indexes = {r.index for r in bundle.run_meta} | {
        r.index for r in bundle.records if r.payload_kind == "run_meta"
    }
    for record in bundle.records:
        if record.payload_kind != "run_meta" and record.data["run_index"] not in meta_indexes:
            if _finding_id_of(record) in bundle.finding_ids:
                return False, f"record {record.index} refers to a run_meta record missing from the bundle"
    return True, ""


def write_bundle(bundle: CaseBundle, out: str | Path) -> None:
    Path(out).write_text(json.dumps(bundle.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


__all__ = [
    "GENESIS",
    "CaseBundle",
    "EvidenceVault",
    "VaultCorrupt",
    "VaultRecord",
    "VerifyResult",
    "append_record",
    "canonical_payload",
    "chain_hash",
    "export_case",
    "fixed_clock",
    "read_records",
    "system_clock",
    "verify_bundle",
    "verify_chain",
]
