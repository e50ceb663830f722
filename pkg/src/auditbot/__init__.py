"""Ethics audit bot: policy-driven checks over development-lifecycle event logs."""

from .alarp import AlarpParams, RiskAssessment, triage_all, triage_finding
from .engine import AuditMonitor, Finding, FindingSet, run_audit
from .events import EventLog, RegisterSet, ingest_events, load_registers, read_event_file
from .policy_dsl import CompiledPolicy, compile_policy, load_policy, parse_policy
from .vault import EvidenceVault, verify_chain

__version__ = "0.1.0"

__all__ = [
    "AlarpParams",
    "AuditMonitor",
    "CompiledPolicy",
    "EventLog",
    "EvidenceVault",
    "Finding",
    "FindingSet",
    "RegisterSet",
    "RiskAssessment",
    "compile_policy",
    "ingest_events",
    "load_policy",
    "load_registers",
    "parse_policy",
    "read_event_file",
    "run_audit",
    "triage_all",
    "triage_finding",
    "verify_chain",
]
