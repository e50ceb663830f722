"""``auditbot`` command line: batch and streaming audits, vault tools, the publication gate and fixtures.

Exit codes: 0 no findings, 1 findings but none intolerable, 2 at least one
intolerable finding (or a failed verification/gate), 3 usage, parse or
compile errors, 4 I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from pathlib import Path
from typing import IO, Iterable, NoReturn, Sequence

from .accountability import jobdesc_warnings, locate_failure
from .alarp import INTOLERABLE, AlarpParams, likelihood_from_count, region_for, triage_finding
from .analytics import lexicon_imbalance
from .engine import AuditMonitor, Finding, Window
from .events import (
    Event,
    EventIngestor,
    EventLog,
    IngestError,
    IngestFailed,
    RegisterSet,
    load_registers,
    parse_timestamp,
    read_event_file,
)
from .fixture import write_fixture
from .policy_dsl import (
    CompiledPolicy,
    PolicyCompileError,
    PolicySyntaxError,
    compile_policy,
    load_policy,
    policy_from_dict,
)
from .report import RunReport, alert_line, build_report, record_run
from .vault import EvidenceVault, VaultCorrupt, export_case, fixed_clock, read_records, system_clock, verify_chain, write_bundle

EXIT_OK, EXIT_FINDINGS, EXIT_INTOLERABLE, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _window(text: str) -> Window:
    lo_s, sep, hi_s = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError("window must look like LO:HI (either side may be empty)")
    try:
        lo = int(lo_s) if lo_s else None
        hi = int(hi_s) if hi_s else None
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid window {text!r}") from None
    if (lo is not None and lo < 1) or (hi is not None and hi < 1) or (lo and hi and lo > hi):
        raise argparse.ArgumentTypeError(f"invalid window {text!r}")
    return lo, hi


def _timestamp(text: str) -> str:
    try:
        parse_timestamp(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an ISO-8601 UTC timestamp like 2024-01-01T00:00:00Z, got {text!r}") from None
    return text


def _nonneg(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _warn(message: str, err: IO[str]) -> None:
    print(f"warning: {message}", file=err)


# ---------------------------------------------------------------------------
# shared audit session


class AlertTracker:
    """Raise an alert the first time a finding lands in the intolerable region.

    Likelihood grows with the number of findings of a rule, so a finding that
    was tolerable when produced may become intolerable later in the stream.
    """

    def __init__(self, params: AlarpParams, stream: IO[str]):
        self.params = params
        self.stream = stream
        self.by_rule: dict[str, list[Finding]] = {}
        self.alerted: set[str] = set()

    def observe(self, findings: Iterable[Finding], current: dict[str, Finding]) -> None:
        for f in findings:
            group = self.by_rule.setdefault(f.rule_id, [])
            before = likelihood_from_count(len(group)) if group else 0
            group.append(f)
            level = likelihood_from_count(len(group))
            pending = group if level != before else [f]
            for g in pending:
                latest = current.get(g.id, g)
                if latest.id in self.alerted or region_for(latest.harm * level, self.params) != INTOLERABLE:
                    continue
                self.alerted.add(latest.id)
                print(alert_line(latest, triage_finding(latest, level, self.params)), file=self.stream, flush=True)


class AuditSession:
    def __init__(self, policy: CompiledPolicy, registers: RegisterSet, window: Window | None, clock: str, alerts: IO[str]):
        self.policy = policy
        self.registers = registers
        self.monitor = AuditMonitor(policy, registers, window, clock)
        self.alerts = AlertTracker(AlarpParams.from_settings(policy.source.settings), alerts)
        self.events: list[Event] = []

    def feed(self, event: Event) -> None:
        self.events.append(event)
        new = self.monitor.feed(event)
        if new:
            self.alerts.observe(new, self.monitor.findings)

    def report(self, trace: bool) -> RunReport:
        return build_report(self.policy, self.monitor.result(), EventLog(self.events), self.registers, trace)


def _load_inputs(args) -> tuple[CompiledPolicy, RegisterSet]:
    policy = load_policy(args.policy)
    for w in policy.source.warnings:
        _warn(w, sys.stderr)
    registers = load_registers(args.registers) if args.registers else RegisterSet()
    for w in jobdesc_warnings(policy, registers):
        _warn(w, sys.stderr)
    return policy, registers


def _finish(args, session: AuditSession, vault: EvidenceVault | None, out: IO[str]) -> int:
    report = session.report(args.trace)
    if vault is not None:
        with vault:
            record_run(vault, session.policy, report)
    text = report.to_json() if args.format == "json" else report.to_text()
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    if args.figures:
        from .plotting import render_figures

        render_figures(report.to_dict(), args.figures)
    return report.exit_code()


def _start(args, events_path: str | None = None) -> tuple[AuditSession, EvidenceVault | None, EventLog]:
    """Load everything before touching the vault, so bad inputs never cause a vault write."""
    policy, registers = _load_inputs(args)
    log = read_event_file(events_path) if events_path else EventLog()
    clock = args.fixed_clock or system_clock()
    vault = None
    if args.vault:
        vault = EvidenceVault(args.vault, fixed_clock(args.fixed_clock) if args.fixed_clock else system_clock)
    return AuditSession(policy, registers, args.window, clock, sys.stderr), vault, log


def cmd_run(args, out: IO[str]) -> int:
    session, vault, log = _start(args, args.events)
    for event in log:
        session.feed(event)
    return _finish(args, session, vault, out)


def cmd_watch(args, out: IO[str], stdin: IO[str]) -> int:
    session, vault, _ = _start(args)
    ingestor = EventIngestor()
    skipped = 0
    while True:
        line = stdin.readline()
        if not line:
            break
        result = ingestor.feed(line.rstrip("\n"))
        if isinstance(result, IngestError):
            skipped += 1
            print(f"skipped: {result}", file=sys.stderr, flush=True)
        else:
            session.feed(result)
    if skipped:
        _warn(f"{skipped} malformed line(s) skipped", sys.stderr)
    return _finish(args, session, vault, out)


def cmd_verify(args, out: IO[str]) -> int:
    if not Path(args.vault).is_file():
        raise FileNotFoundError(f"vault not found: {args.vault}")
    result = verify_chain(args.vault)
    if result.ok:
        print(f"ok: {result.length} record(s), head {result.head_hash}", file=out)
        return EXIT_OK
    print(f"TAMPERED: first_bad_index={result.first_bad_index} ({result.reason})", file=out)
    return EXIT_INTOLERABLE


def cmd_manifest(args, out: IO[str]) -> int:
    policy = load_policy(args.policy, resolve_lexicons=False)
    manifest = policy.manifest.to_dict()
    if args.format == "json":
        out.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return EXIT_OK
    if not manifest:
        print("(no rules: nothing is read)", file=out)
    for rule_id, access in sorted(manifest.items()):
        print(f"{rule_id}:", file=out)
        for type_, field in access["fields"]:
            print(f"  event {type_}.{field}", file=out)
        for register in access["registers"]:
            print(f"  register {register}", file=out)
    return EXIT_OK


def cmd_trace(args, out: IO[str]) -> int:
    records = read_records(args.vault)
    found = [r for r in records if r.payload_kind == "finding" and r.data["finding"]["id"] == args.finding]
    if not found:
        raise UsageError(f"finding {args.finding} is not in the vault")
    record = found[-1]
    finding = Finding.from_dict(record.data["finding"])
    if args.policy:
        policy = load_policy(args.policy, resolve_lexicons=False)
    else:
        meta = records[record.data["run_index"]].data
        policy = compile_policy(policy_from_dict(meta["policy"]), resolve_lexicons=False)
    try:
        rule = policy.rule(finding.rule_id)
    except KeyError:
        raise UsageError(f"rule {finding.rule_id} is not in the policy") from None
    registers = load_registers(args.registers) if args.registers else RegisterSet()
    log = read_event_file(args.events) if args.events else EventLog()
    point = locate_failure(finding, rule, log, registers)
    if args.format == "json":
        out.write(json.dumps(point.to_dict(), indent=2, sort_keys=True) + "\n")
        return EXIT_OK
    print(f"{finding.id}: {finding.message}", file=out)
    print(f"  located at: {point.located_at}", file=out)
    if point.responsible_role:
        print(f"  responsible role: {point.responsible_role}", file=out)
    if point.responsible_actors:
        print(f"  responsible actors: {', '.join(point.responsible_actors)}", file=out)
    print(f"  escalation chain: {' -> '.join(point.escalation_chain) or '(none)'}", file=out)
    print(f"  {point.narrative}", file=out)
    for w in point.warnings:
        print(f"  warning: {w}", file=out)
    return EXIT_OK


def cmd_gate(args, out: IO[str]) -> int:
    policy = load_policy(args.policy)
    try:
        rule = policy.rule(args.rule)
    except KeyError:
        raise UsageError(f"no rule {args.rule} in the policy") from None
    if rule.kind != "gate":
        raise UsageError(f"rule {args.rule} has kind {rule.kind}, not gate")
    text = Path(args.text).read_text(encoding="utf-8")
    m, f, imbalance = lexicon_imbalance(text, rule.lexicon)
    limit = rule.params["max_imbalance"]
    verdict = "PASS" if imbalance < limit else "FAIL"
    print(f"{verdict} {args.rule}: masculine={m} feminine={f} imbalance={imbalance} max_imbalance={limit}", file=out)
    return EXIT_OK if imbalance < limit else EXIT_INTOLERABLE


def cmd_fixture(args, out: IO[str]) -> int:
    manifest = write_fixture(args.out, seed=args.seed, n_events=args.events)
    kinds = Counter(f["rule_id"] for f in manifest["findings"])
    print(f"wrote {args.events} event(s) and {len(manifest['findings'])} expected finding(s) to {args.out}", file=out)
    for rule_id, n in sorted(kinds.items()):
        print(f"  {rule_id:<24} {n}", file=out)
    return EXIT_OK


def cmd_export(args, out: IO[str]) -> int:
    try:
        bundle = export_case(args.vault, args.finding)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    write_bundle(bundle, args.out)
    print(f"wrote {len(bundle.records)} record(s) for {len(bundle.finding_ids)} finding(s); head {bundle.head_hash}", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="auditbot", description="Audit development-lifecycle event logs against an ethics policy.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def audit_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("--policy", required=True, help="policy file")
        p.add_argument("--registers", help="directory with the register JSONL files")
        p.add_argument("--vault", help="evidence vault to append to")
        p.add_argument("--report", help="report path (default: standard output)")
        p.add_argument("--window", type=_window, help="restrict findings to trigger seqs LO:HI")
        p.add_argument("--format", choices=("json", "text"), default="json")
        p.add_argument("--fixed-clock", type=_timestamp, metavar="TS", help="use TS for every timestamp the run writes")
        p.add_argument("--trace", action="store_true", help="attach accountability traces")
        p.add_argument("--figures", metavar="DIR", help="also render report figures as PNG files into DIR")

    run = sub.add_parser("run", help="audit an event file")
    audit_options(run)
    run.add_argument("--events", required=True, help="event log (JSON Lines)")

    watch = sub.add_parser("watch", help="audit events read from standard input as they arrive")
    audit_options(watch)

    verify = sub.add_parser("verify", help="verify the vault's hash chain")
    verify.add_argument("--vault", required=True)

    manifest = sub.add_parser("manifest", help="print the data-access manifest of a policy")
    manifest.add_argument("--policy", required=True)
    manifest.add_argument("--format", choices=("json", "text"), default="json")

    trace = sub.add_parser("trace", help="trace a recorded finding to the responsible people")
    trace.add_argument("--vault", required=True)
    trace.add_argument("--finding", required=True)
    trace.add_argument("--registers")
    trace.add_argument("--events")
    trace.add_argument("--policy", help="policy file (default: the one recorded with the run)")
    trace.add_argument("--format", choices=("json", "text"), default="text")

    gate = sub.add_parser("gate", help="score a text file with a gate rule's lexicon")
    gate.add_argument("--policy", required=True)
    gate.add_argument("--rule", required=True)
    gate.add_argument("--text", required=True)

    fixture = sub.add_parser("fixture", help="generate a synthetic scenario with ground truth")
    fixture.add_argument("--seed", type=int, default=42)
    fixture.add_argument("--events", type=_nonneg, default=1000)
    fixture.add_argument("--out", required=True)

    export = sub.add_parser("export", help="export the vault records for findings as a case bundle")
    export.add_argument("--vault", required=True)
    export.add_argument("--finding", required=True, action="append")
    export.add_argument("--out", required=True)
    return parser


def main(argv: Sequence[str] | None = None, *, stdout: IO[str] | None = None, stdin: IO[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = stdout or sys.stdout
    err = sys.stderr
    try:
        if args.command == "run":
            return cmd_run(args, out)
        if args.command == "watch":
            return cmd_watch(args, out, stdin or sys.stdin)
        handler = {
            "verify": cmd_verify,
            "manifest": cmd_manifest,
            "trace": cmd_trace,
            "gate": cmd_gate,
            "fixture": cmd_fixture,
            "export": cmd_export,
        }[args.command]
        return handler(args, out)
    except (PolicySyntaxError, PolicyCompileError, IngestFailed) as exc:
        for problem in exc.errors:
            print(f"error: {problem}", file=err)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE
    except VaultCorrupt as exc:
        print(f"error: {exc}", file=err)
        return EXIT_IO
    except (OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
