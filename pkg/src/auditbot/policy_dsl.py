"""Policy file language: lexer, recursive-descent parser, compiler and data-access manifest.

A policy file looks like::

    policy "acme-seq-plan" {
      version = "1.2"
      organisation = "Acme"
    }
    severity_map { low = 0 high = 2 }
    commitment unbiased-data {
      statement = "No model is trained on data that was not assessed for bias"
      rules = [bias-before-training]
    }
    rule bias-before-training {
      kind = obligation
      harm = 4
      trigger = build.training_run
      require = dataset.bias_assessment
      mode = exists_before
      join_on = dataset_id
    }
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .analytics import Lexicon, load_lexicon
from .canonical import canonical_text, sha256_hex
from .events import EVENT_CATALOG, REGISTER_FILES

RULE_KINDS = ("obligation", "legitimacy", "exception", "hours", "gate", "drift")
LEGITIMACY_CHECKS = ("reviewer_competence", "reviewer_independence", "team_qualification", "register_lookup")
OBLIGATION_MODES = ("exists_before", "all_closed_before")
HEADER_STRING_KEYS = ("version", "organisation")
HEADER_NUMBER_KEYS = ("alarp_intolerable_min", "alarp_acceptable_max", "alarp_disproportion_factor")
RULE_BUILTIN_KEYS = ("kind", "harm", "scope", "description", "responsible_role")
TOP_LEVEL = ("policy", "commitment", "severity_map", "rule")

LEXICON_DIR_ENV = "AUDITBOT_LEXICON_DIR"

Value = str | int | float | list[str]


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class ParseError:
    line: int
    column: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.message}"


@dataclass(frozen=True)
class CompileError:
    rule_id: str
    message: str
    line: int = 0

    def __str__(self) -> str:
        prefix = f"{self.line}: " if self.line else ""
        return f"{prefix}rule {self.rule_id}: {self.message}"


class PolicySyntaxError(Exception):
    def __init__(self, errors: list[ParseError]):
        self.errors = errors
        super().__init__("\n".join(str(e) for e in errors))


class PolicyCompileError(Exception):
    def __init__(self, errors: list[CompileError]):
        self.errors = errors
        super().__init__("\n".join(str(e) for e in errors))


# ---------------------------------------------------------------------------
# document model


@dataclass(frozen=True)
class Commitment:
    id: str
    statement: str
    rule_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class RuleSpec:
    id: str
    kind: str
    harm: int
    scope: str | None = None
    description: str | None = None
    responsible_role: str | None = None
    params: Mapping[str, Value] = field(default_factory=dict)
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class PolicyDocument:
    name: str
    version: str = ""
    organisation: str = ""
    commitments: tuple[Commitment, ...] = ()
    severity_map: Mapping[str, int] = field(default_factory=dict)
    rules: tuple[RuleSpec, ...] = ()
    settings: Mapping[str, int | float] = field(default_factory=dict)
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def rule(self, rule_id: str) -> RuleSpec:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)


# ---------------------------------------------------------------------------
# lexer

_IDENT_RE = re.compile(r"[a-z][a-z0-9_-]*(?:\.[a-z][a-z0-9_-]*)*")
_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")
_PUNCT = {"{": "LBRACE", "}": "RBRACE", "[": "LBRACK", "]": "RBRACK", "=": "EQ", ",": "COMMA"}
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}


@dataclass(frozen=True)
class Token:
    kind: str
    value: Any
    line: int
    column: int


def tokenize(text: str) -> tuple[list[Token], list[ParseError]]:
    tokens: list[Token] = []
    errors: list[ParseError] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in _PUNCT:
            tokens.append(Token(_PUNCT[ch], ch, line, col))
            i, col = i + 1, col + 1
            continue
        if ch == '"':
            start_col = col
            j = i + 1
            buf: list[str] = []
            closed = False
            while j < n and text[j] != "\n":
                c = text[j]
                if c == "\\" and j + 1 < n and text[j + 1] in _ESCAPES:
                    buf.append(_ESCAPES[text[j + 1]])
                    j += 2
                    continue
                if c == '"':
                    closed = True
                    break
                buf.append(c)
                j += 1
            if not closed:
                errors.append(ParseError(line, start_col, "unterminated string"))
                col += j - i
                i = j
                continue
            tokens.append(Token("STRING", "".join(buf), line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        m = _NUMBER_RE.match(text, i)
        if m and (ch.isdigit() or ch == "-"):
            raw = m.group()
            is_int = not any(c in raw for c in ".eE")
            tokens.append(Token("NUMBER", int(raw) if is_int else float(raw), line, col))
            col += len(raw)
            i = m.end()
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            tokens.append(Token("IDENT", m.group(), line, col))
            col += len(m.group())
            i = m.end()
            continue
        errors.append(ParseError(line, col, f"unexpected character {ch!r}"))
        i, col = i + 1, col + 1
    tokens.append(Token("EOF", None, line, col))
    return tokens, errors


# ---------------------------------------------------------------------------
# parser


class _Abort(Exception):
    """Unwinds to the top level, where the parser resynchronises."""


class _Parser:
    def __init__(self, tokens: list[Token], errors: list[ParseError]):
        self.toks = tokens
        self.pos = 0
        self.errors = errors
        self.warnings: list[str] = []

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def error(self, tok: Token, message: str) -> None:
        self.errors.append(ParseError(tok.line, tok.column, message))

    def fail(self, tok: Token, message: str):
        self.error(tok, message)
        raise _Abort

    def expect(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            found = "end of input" if self.tok.kind == "EOF" else repr(self.tok.value)
            self.fail(self.tok, f"expected {what}, found {found}")
        return self.advance()

    def at_top_keyword(self) -> bool:
        t = self.tok
        return t.kind == "IDENT" and t.value in TOP_LEVEL

    def synchronise(self, start: int) -> None:
        # Skip to the next top-level keyword that starts a block.
        if self.pos == start:
            self.advance()
        while self.tok.kind != "EOF":
            if self.at_top_keyword() and self.pos + 1 < len(self.toks) and self.toks[self.pos + 1].kind in ("IDENT", "STRING", "LBRACE"):
                return
            self.advance()

    # -- grammar -----------------------------------------------------------

    def parse_value(self) -> Value:
        t = self.tok
        if t.kind in ("STRING", "NUMBER", "IDENT"):
            self.advance()
            return t.value
        if t.kind == "LBRACK":
            self.advance()
            items: list[str] = []
            if self.tok.kind != "RBRACK":
                items.append(self.expect("IDENT", "identifier in list").value)
                while self.tok.kind == "COMMA":
                    self.advance()
                    items.append(self.expect("IDENT", "identifier in list").value)
            self.expect("RBRACK", "']'")
            return items
        found = "end of input" if t.kind == "EOF" else repr(t.value)
        self.fail(t, f"expected a value, found {found}")

    def parse_fields(self, open_tok: Token) -> list[tuple[Token, Value]]:
        """``{ key = value ... }`` with duplicate-key detection; the '{' is already consumed."""
        fields: list[tuple[Token, Value]] = []
        seen: set[str] = set()
        while self.tok.kind != "RBRACE":
            t = self.tok
            if t.kind == "EOF":
                self.fail(open_tok, f"unbalanced braces: '{{' at line {open_tok.line} is never closed")
            if self.at_top_keyword() and self.toks[self.pos + 1].kind != "EQ":
                self.fail(open_tok, f"unbalanced braces: '{{' at line {open_tok.line} is not closed before '{t.value}'")
            key = self.expect("IDENT", "field name")
            self.expect("EQ", "'='")
            value = self.parse_value()
            if key.value in seen:
                self.error(key, f"duplicate key {key.value} in block")
            else:
                seen.add(key.value)
                fields.append((key, value))
        self.advance()
        return fields

    def parse_header(self) -> dict[str, Any]:
        kw = self.tok
        if not (kw.kind == "IDENT" and kw.value == "policy"):
            self.fail(kw, "expected 'policy' header block")
        self.advance()
        name = self.expect("STRING", "policy name string").value
        open_tok = self.expect("LBRACE", "'{'")
        header: dict[str, Any] = {"name": name, "settings": {}}
        for key, value in self.parse_fields(open_tok):
            if key.value in HEADER_STRING_KEYS:
                if not isinstance(value, str):
                    self.error(key, f"{key.value} must be a string")
                header[key.value] = value
            elif key.value in HEADER_NUMBER_KEYS:
                if not isinstance(value, (int, float)):
                    self.error(key, f"{key.value} must be a number")
                header["settings"][key.value] = value
            else:
                self.error(key, f"unknown header field {key.value}")
        return header

    def parse_commitment(self) -> Commitment:
        kw = self.advance()
        cid = self.expect("IDENT", "commitment identifier")
        open_tok = self.expect("LBRACE", "'{'")
        statement: str | None = None
        rule_ids: tuple[str, ...] = ()
        for key, value in self.parse_fields(open_tok):
            if key.value == "statement":
                if not isinstance(value, str):
                    self.error(key, "statement must be a string")
                statement = str(value)
            elif key.value == "rules":
                if not isinstance(value, list):
                    self.error(key, "rules must be an identifier list")
                    value = []
                rule_ids = tuple(value)
            else:
                self.error(key, f"unknown commitment field {key.value}")
        if statement is None:
            self.error(kw, f"commitment {cid.value} has no statement")
            statement = ""
        if not rule_ids:
            self.warnings.append(f"commitment {cid.value} has no implementing rules")
        return Commitment(cid.value, statement, rule_ids)

    def parse_severity_map(self) -> dict[str, int]:
        self.advance()
        open_tok = self.expect("LBRACE", "'{'")
        out: dict[str, int] = {}
        for key, value in self.parse_fields(open_tok):
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                self.error(key, f"severity level for {key.value} must be an integer >= 0")
                continue
            out[key.value] = value
        return out

    def parse_rule(self) -> RuleSpec:
        kw = self.advance()
        rid = self.expect("IDENT", "rule identifier")
        open_tok = self.expect("LBRACE", "'{'")
        builtins: dict[str, Any] = {}
        params: dict[str, Value] = {}
        fields = self.parse_fields(open_tok)
        for key, value in fields:
            k = key.value
            if k == "harm":
                if not isinstance(value, int) or isinstance(value, bool):
                    self.error(key, f"non-integer harm {value!r}")
                elif not 1 <= value <= 5:
                    self.error(key, "harm out of range 1..5")
                else:
                    builtins[k] = value
            elif k == "kind":
                if value not in RULE_KINDS:
                    self.error(key, f"unknown rule kind {value!r}")
                else:
                    builtins[k] = value
            elif k in ("scope", "description", "responsible_role"):
                if not isinstance(value, str):
                    self.error(key, f"{k} must be a string")
                else:
                    builtins[k] = value
            else:
                params[k] = value
        present = {key.value for key, _ in fields}
        for required in ("kind", "harm"):
            if required not in present:
                self.error(rid, f"rule {rid.value} has no {required}")
        return RuleSpec(
            id=rid.value,
            kind=builtins.get("kind", ""),
            harm=builtins.get("harm", 0),
            scope=builtins.get("scope"),
            description=builtins.get("description"),
            responsible_role=builtins.get("responsible_role"),
            params=params,
            line=kw.line,
        )

    def parse(self) -> PolicyDocument:
        header: dict[str, Any] = {"name": "", "settings": {}}
        try:
            header = self.parse_header()
        except _Abort:
            if not (self.at_top_keyword() and self.tok.value != "policy"):
                self.synchronise(0)
        commitments: list[Commitment] = []
        rules: list[RuleSpec] = []
        rule_ids: dict[str, int] = {}
        commitment_ids: set[str] = set()
        severity_map: dict[str, int] | None = None
        while self.tok.kind != "EOF":
            t = self.tok
            start = self.pos
            try:
                if t.kind == "RBRACE":
                    self.fail(t, "unbalanced braces: unexpected '}'")
                if t.kind != "IDENT" or t.value not in TOP_LEVEL[1:]:
                    self.fail(t, f"expected 'commitment', 'severity_map' or 'rule', found {t.value!r}")
                if t.value == "rule":
                    rule = self.parse_rule()
                    if rule.id in rule_ids:
                        self.error(t, f"duplicate rule id {rule.id}")
                    else:
                        rule_ids[rule.id] = t.line
                        rules.append(rule)
                elif t.value == "commitment":
                    c = self.parse_commitment()
                    if c.id in commitment_ids:
                        self.error(t, f"duplicate commitment id {c.id}")
                    else:
                        commitment_ids.add(c.id)
                        commitments.append(c)
                else:
                    sm = self.parse_severity_map()
                    if severity_map is not None:
                        self.error(t, "duplicate severity_map block")
                    else:
                        severity_map = sm
            except _Abort:
                self.synchronise(start)
        for c in commitments:
            for rid in c.rule_ids:
                if rid not in rule_ids:
                    self.errors.append(ParseError(0, 0, f"commitment {c.id} references unknown rule {rid}"))
        return PolicyDocument(
            name=header["name"],
            version=header.get("version", ""),
            organisation=header.get("organisation", ""),
            commitments=tuple(commitments),
            severity_map=dict(severity_map or {}),
            rules=tuple(rules),
            settings=dict(header["settings"]),
            warnings=tuple(self.warnings),
        )


def parse_policy(text: str) -> PolicyDocument:
    """Parse policy source text; raises :class:`PolicySyntaxError` listing every error found."""
    tokens, errors = tokenize(text)
    parser = _Parser(tokens, errors)
    doc = parser.parse()
    if errors:
        raise PolicySyntaxError(sorted(errors, key=lambda e: (e.line == 0, e.line, e.column)))
    return doc


# ---------------------------------------------------------------------------
# plain-data conversion (vault storage, hashing)


def policy_to_dict(doc: PolicyDocument) -> dict[str, Any]:
    rules = []
    for r in doc.rules:
        d: dict[str, Any] = {"id": r.id, "kind": r.kind, "harm": r.harm, "params": dict(r.params)}
        for k in ("scope", "description", "responsible_role"):
            if getattr(r, k) is not None:
                d[k] = getattr(r, k)
        rules.append(d)
    return {
        "name": doc.name,
        "version": doc.version,
        "organisation": doc.organisation,
        "settings": dict(doc.settings),
        "severity_map": dict(doc.severity_map),
        "commitments": [
            {"id": c.id, "statement": c.statement, "rules": list(c.rule_ids)} for c in doc.commitments
        ],
        "rules": rules,
    }


def policy_from_dict(data: Mapping[str, Any]) -> PolicyDocument:
    return PolicyDocument(
        name=data["name"],
        version=data.get("version", ""),
        organisation=data.get("organisation", ""),
        commitments=tuple(Commitment(c["id"], c["statement"], tuple(c["rules"])) for c in data.get("commitments", [])),
        severity_map=dict(data.get("severity_map", {})),
        rules=tuple(
            RuleSpec(
                id=r["id"],
                kind=r["kind"],
                harm=r["harm"],
                scope=r.get("scope"),
                description=r.get("description"),
                responsible_role=r.get("responsible_role"),
                params={k: (list(v) if isinstance(v, list) else v) for k, v in r.get("params", {}).items()},
            )
            for r in data.get("rules", [])
        ),
        settings=dict(data.get("settings", {})),
    )


def policy_hash(doc: PolicyDocument) -> str:
    return sha256_hex(canonical_text(policy_to_dict(doc)))


# ---------------------------------------------------------------------------
# compilation

# Parameter schema: (type, required, default). "required" may be a callable of the raw params.
_P = tuple


def _kind_schema(kind: str, raw: Mapping[str, Value]) -> dict[str, _P]:
    if kind == "obligation":
        schema = {
            "trigger": ("event", True, None),
            "require": ("event", True, None),
            "mode": (("choice", OBLIGATION_MODES), True, None),
            "join_on": ("field", True, None),
        }
        if raw.get("mode") == "all_closed_before":
            schema["close_type"] = ("event", True, None)
            schema["filter"] = ("filter", False, None)
        return schema
    if kind == "legitimacy":
        schema = {
            "trigger": ("event", True, None),
            "check": (("choice", LEGITIMACY_CHECKS), True, None),
        }
        check = raw.get("check")
        if check == "reviewer_competence":
            schema["qualification_field"] = ("field", True, None)
        elif check == "reviewer_independence":
            schema["severity_field"] = ("field", True, None)
        elif check == "team_qualification":
            schema["qualification"] = ("string", True, None)
        elif check == "register_lookup":
            schema["register"] = (("choice", tuple(REGISTER_FILES)), True, None)
            schema["key_field"] = ("field", True, None)
        return schema
    if kind == "exception":
        return {
            "override_type": ("event", True, None),
            "justification_type": ("event", True, None),
            "join_on": ("field", True, None),
            "justify_within_days": ("number", False, 14),
        }
    if kind == "hours":
        return {"threshold_hours": ("number", False, 48), "consecutive_weeks": ("posint", False, 1)}
    if kind == "gate":
        return {
            "trigger": ("event", True, None),
            "text_field": ("field", True, None),
            "lexicon": ("string", True, None),
            "max_imbalance": ("int", False, 2),
        }
    if kind == "drift":
        return {
            "feature": ("string", True, None),
            "warn_threshold": ("number", False, 0.1),
            "alarm_threshold": ("number", False, 0.25),
        }
    raise ValueError(kind)


_COMMON_PARAMS: dict[str, _P] = {"risk_cost": ("number", False, None), "mitigation_cost": ("number", False, None)}


@dataclass(frozen=True)
class RuleAccess:
    fields: frozenset[tuple[str, str]] = frozenset()
    registers: frozenset[str] = frozenset()

    def to_dict(self) -> dict[str, list]:
        return {"fields": [list(p) for p in sorted(self.fields)], "registers": sorted(self.registers)}


@dataclass(frozen=True)
class DataAccessManifest:
    entries: Mapping[str, RuleAccess] = field(default_factory=dict)

    def to_dict(self) -> dict[str, dict[str, list]]:
        return {rid: self.entries[rid].to_dict() for rid in sorted(self.entries)}

    def all_fields(self) -> frozenset[tuple[str, str]]:
        out: set[tuple[str, str]] = set()
        for access in self.entries.values():
            out |= access.fields
        return frozenset(out)


@dataclass(frozen=True)
class CompiledRule:
    id: str
    kind: str
    harm: int
    params: Mapping[str, Any]
    scope: str | None = None
    description: str | None = None
    responsible_role: str | None = None
    lexicon: Lexicon | None = field(default=None, compare=False)

    @property
    def risk_cost(self) -> float | None:
        return self.params.get("risk_cost")

    @property
    def mitigation_cost(self) -> float | None:
        return self.params.get("mitigation_cost")

    def expected_event_type(self) -> str | None:
        """The event whose absence an obligation finding reports."""
        if self.kind != "obligation":
            return None
        if self.params["mode"] == "exists_before":
            return self.params["require"]
        return self.params["close_type"]


@dataclass(frozen=True)
class CompiledPolicy:
    source: PolicyDocument
    rules: tuple[CompiledRule, ...]
    manifest: DataAccessManifest
    digest: str = ""

    def rule(self, rule_id: str) -> CompiledRule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)


def _check_param(
    rule: RuleSpec, key: str, ptype: Any, value: Value, catalog: Mapping[str, tuple[str, ...]]
) -> tuple[Any, str | None]:
    if isinstance(ptype, tuple) and ptype[0] == "choice":
        if value not in ptype[1]:
            what = "check name" if key == "check" else f"value for {key}"
            return None, f"unknown {what} {value!r} (expected one of {', '.join(ptype[1])})"
        return value, None
    if ptype == "event":
        if not isinstance(value, str) or value not in catalog:
            return None, f"unknown event type {value!r} for {key}"
        return value, None
    if ptype in ("field", "string"):
        if not isinstance(value, str) or not value:
            return None, f"{key} must be a {'field name' if ptype == 'field' else 'string'}"
        return value, None
    if ptype == "filter":
        if not isinstance(value, str) or value.count("=") != 1 or not all(value.split("=")):
            return None, f"filter must look like \"key=value\", got {value!r}"
        k, v = value.split("=")
        return (k.strip(), v.strip()), None
    if ptype in ("number", "int", "posint"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None, f"{key} must be a number"
        if not math.isfinite(value):
            return None, f"{key} must be finite"
        if value < 0:
            return None, f"{key} must be non-negative"
        if ptype in ("int", "posint") and not isinstance(value, int):
            return None, f"{key} must be an integer"
        if ptype == "posint" and value < 1:
            return None, f"{key} must be >= 1"
        return value, None
    raise ValueError(ptype)


def _resolve_lexicon(path: str, base_dir: Path | None) -> Path | None:
    candidate = Path(path)
    if candidate.is_absolute():
        return candidate if candidate.is_file() else None
    search = [base_dir] if base_dir is not None else [Path.cwd()]
    env = os.environ.get(LEXICON_DIR_ENV)
    if env:
        search.extend(Path(p) for p in env.split(os.pathsep) if p)
    for d in search:
        if (d / candidate).is_file():
            return d / candidate
    return None


def _rule_access(kind: str, p: Mapping[str, Any]) -> RuleAccess:
    fields: set[tuple[str, str]] = set()
    registers: set[str] = set()
    if kind == "obligation":
        if p["mode"] == "exists_before":
            fields |= {(p["trigger"], p["join_on"]), (p["require"], p["join_on"])}
        else:
            fields |= {(p["require"], p["join_on"]), (p["close_type"], p["join_on"])}
            if p.get("filter"):
                fields.add((p["require"], p["filter"][0]))
    elif kind == "legitimacy":
        check = p["check"]
        if check == "reviewer_competence":
            fields |= {(p["trigger"], p["qualification_field"]), (p["trigger"], "actor")}
            registers.add("competence")
        elif check == "reviewer_independence":
            fields |= {(p["trigger"], p["severity_field"]), (p["trigger"], "author_org"), (p["trigger"], "actor")}
            registers.add("independence")
        elif check == "team_qualification":
            registers |= {"competence", "orgchart"}
        else:
            fields.add((p["trigger"], p["key_field"]))
            registers.add(p["register"])
    elif kind == "exception":
        fields |= {(p["override_type"], p["join_on"]), (p["justification_type"], p["join_on"])}
    elif kind == "hours":
        fields |= {("activity.session", "start"), ("activity.session", "end"), ("activity.session", "actor")}
    elif kind == "gate":
        fields.add((p["trigger"], p["text_field"]))
    elif kind == "drift":
        fields |= {("model.feature_snapshot", f) for f in ("feature", "phase", "histogram")}
    return RuleAccess(frozenset(fields), frozenset(registers))


def _join_errors(kind: str, p: Mapping[str, Any], catalog: Mapping[str, tuple[str, ...]]) -> list[str]:
    pairs: list[str] = []
    if kind == "obligation":
        pairs = [p["trigger"], p["require"]] if p["mode"] == "exists_before" else [p["require"], p["close_type"]]
    elif kind == "exception":
        pairs = [p["override_type"], p["justification_type"]]
    return [
        f"join_on field {p['join_on']!r} is not a payload field of {t}"
        for t in pairs
        if p["join_on"] not in catalog[t]
    ]


def compile_rule(
    rule: RuleSpec,
    severity_map: Mapping[str, int],
    catalog: Mapping[str, tuple[str, ...]] = EVENT_CATALOG,
    *,
    base_dir: Path | None = None,
    resolve_lexicons: bool = True,
) -> tuple[CompiledRule | None, list[CompileError]]:
    errors: list[CompileError] = []

    def err(msg: str) -> None:
        errors.append(CompileError(rule.id, msg, rule.line))

    if rule.kind not in RULE_KINDS:
        err(f"unknown rule kind {rule.kind!r}")
        return None, errors
    if not 1 <= rule.harm <= 5:
        err("harm out of range 1..5")
    schema = dict(_kind_schema(rule.kind, rule.params))
    schema.update(_COMMON_PARAMS)
    typed: dict[str, Any] = {}
    for key in rule.params:
        if key not in schema:
            err(f"unknown parameter {key!r} for kind {rule.kind}")
    for key, (ptype, required, default) in schema.items():
        if key not in rule.params:
            if required:
                err(f"missing required param {key!r}")
            elif default is not None:
                typed[key] = default
            continue
        value, problem = _check_param(rule, key, ptype, rule.params[key], catalog)
        if problem:
            err(problem)
        else:
            typed[key] = value
    if errors:
        return None, errors

    lexicon = None
    if rule.kind == "obligation" or rule.kind == "exception":
        for problem in _join_errors(rule.kind, typed, catalog):
            err(problem)
    elif rule.kind == "legitimacy" and typed["check"] == "reviewer_independence" and not severity_map:
        err("reviewer_independence needs a non-empty severity_map")
    elif rule.kind == "drift" and typed["warn_threshold"] > typed["alarm_threshold"]:
        err("warn_threshold exceeds alarm_threshold")
    elif rule.kind == "gate" and resolve_lexicons:
        path = _resolve_lexicon(typed["lexicon"], base_dir)
        if path is None:
            err(f"lexicon file {typed['lexicon']!r} not found")
        else:
            try:
                lexicon = load_lexicon(path)
            except (OSError, ValueError) as exc:
                err(f"cannot load lexicon {typed['lexicon']!r}: {exc}")
    if errors:
        return None, errors
    return (
        CompiledRule(
            id=rule.id,
            kind=rule.kind,
            harm=rule.harm,
            params=typed,
            scope=rule.scope,
            description=rule.description,
            responsible_role=rule.responsible_role,
            lexicon=lexicon,
        ),
        [],
    )


def compile_policy(
    doc: PolicyDocument,
    catalog: Mapping[str, tuple[str, ...]] = EVENT_CATALOG,
    *,
    base_dir: str | Path | None = None,
    resolve_lexicons: bool = True,
) -> CompiledPolicy:
    """Type-check every rule against the event catalog and fill defaults.

    Gate lexicons are resolved relative to ``base_dir`` (normally the
    policy file's directory), then ``$AUDITBOT_LEXICON_DIR``.
    Raises :class:`PolicyCompileError` listing all problems.
    """
    base = Path(base_dir) if base_dir is not None else None
    compiled: list[CompiledRule] = []
    errors: list[CompileError] = []
    for rule in doc.rules:
        cr, errs = compile_rule(rule, doc.severity_map, catalog, base_dir=base, resolve_lexicons=resolve_lexicons)
        errors.extend(errs)
        if cr is not None:
            compiled.append(cr)
    settings = doc.settings
    if "alarp_acceptable_max" in settings or "alarp_intolerable_min" in settings:
        lo = settings.get("alarp_acceptable_max", 4)
        hi = settings.get("alarp_intolerable_min", 15)
        if not lo < hi:
            errors.append(CompileError("-", "alarp_acceptable_max must be below alarp_intolerable_min"))
    factor = settings.get("alarp_disproportion_factor", 3.0)
    if not (isinstance(factor, (int, float)) and math.isfinite(factor) and factor > 0):
        errors.append(CompileError("-", "alarp_disproportion_factor must be > 0"))
    if errors:
        raise PolicyCompileError(errors)
    manifest = DataAccessManifest({r.id: _rule_access(r.kind, r.params) for r in compiled})
    return CompiledPolicy(source=doc, rules=tuple(compiled), manifest=manifest, digest=policy_hash(doc))


def required_fields(policy: CompiledPolicy) -> DataAccessManifest:
    return policy.manifest


def load_policy(path: str | Path, *, resolve_lexicons: bool = True) -> CompiledPolicy:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return compile_policy(parse_policy(text), base_dir=path.parent, resolve_lexicons=resolve_lexicons)
