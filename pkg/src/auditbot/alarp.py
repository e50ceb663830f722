"""ALARP triage: a 5x5 harm x likelihood matrix and the gross-disproportion cost test."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .engine import Finding

INTOLERABLE = "intolerable"
ALARP = "alarp"
BROADLY_ACCEPTABLE = "broadly_acceptable"
REGIONS = (BROADLY_ACCEPTABLE, ALARP, INTOLERABLE)  # ascending severity
REGION_RANK = {name: i for i, name in enumerate(REGIONS)}

# Upper bound of finding count -> likelihood level.
_LIKELIHOOD_TABLE = ((1, 1), (3, 2), (6, 3), (10, 4))


@dataclass(frozen=True)
class AlarpParams:
    intolerable_min: int = 15
    acceptable_max: int = 4
    disproportion_factor: float = 3.0

    def __post_init__(self) -> None:
        if not self.acceptable_max < self.intolerable_min:
            raise ValueError("acceptable_max must be below intolerable_min")
        if not (math.isfinite(self.disproportion_factor) and self.disproportion_factor > 0):
            raise ValueError("disproportion_factor must be a positive finite number")

    @classmethod
    def from_settings(cls, settings: Mapping[str, Any]) -> AlarpParams:
        return cls(
            intolerable_min=settings.get("alarp_intolerable_min", 15),
            acceptable_max=settings.get("alarp_acceptable_max", 4),
            disproportion_factor=float(settings.get("alarp_disproportion_factor", 3.0)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "intolerable_min": self.intolerable_min,
            "acceptable_max": self.acceptable_max,
            "disproportion_factor": float(self.disproportion_factor),
        }


@dataclass(frozen=True)
class RiskAssessment:
    finding_id: str
    likelihood: int
    score: int
    region: str
    rationale: str
    mitigation_required: bool | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "finding_id": self.finding_id,
            "likelihood": self.likelihood,
            "score": self.score,
            "region": self.region,
            "rationale": self.rationale,
        }
        if self.mitigation_required is not None:
            out["mitigation_required"] = self.mitigation_required
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RiskAssessment:
        return cls(d["finding_id"], d["likelihood"], d["score"], d["region"], d["rationale"],
                   d.get("mitigation_required"))


def likelihood_from_count(n: int) -> int:
    if n < 1:
        raise ValueError("likelihood is only defined for rules with at least one finding")
    for upper, level in _LIKELIHOOD_TABLE:
        if n <= upper:
            return level
    return 5


def likelihood_of(rule_id: str, findings: Iterable[Finding], window: tuple[int | None, int | None] | None = None) -> int:
    """Frequency proxy: how often ``rule_id`` fired inside ``window``."""
    lo, hi = window if window is not None else (None, None)
    n = sum(
        1
        for f in findings
        if f.rule_id == rule_id and (lo is None or f.trigger_seq >= lo) and (hi is None or f.trigger_seq <= hi)
    )
    return likelihood_from_count(n)


def region_for(score: int, params: AlarpParams = AlarpParams()) -> str:
    if score >= params.intolerable_min:
        return INTOLERABLE
    if score <= params.acceptable_max:
        return BROADLY_ACCEPTABLE
    return ALARP


def mitigation_justified(cost_of_risk: float, cost_of_mitigation: float, factor: float) -> bool:
    """True when mitigation is required: its cost is not grossly disproportionate to the risk."""
    for name, value in (("cost_of_risk", cost_of_risk), ("cost_of_mitigation", cost_of_mitigation)):
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"{name} must be finite and non-negative, got {value!r}")
    if not (math.isfinite(factor) and factor > 0):
        raise ValueError("factor must be positive")
    return cost_of_mitigation <= factor * cost_of_risk


def triage_finding(
    finding: Finding,
    likelihood: int,
    params: AlarpParams = AlarpParams(),
    risk_cost: float | None = None,
    mitigation_cost: float | None = None,
) -> RiskAssessment:
    if not 1 <= finding.harm <= 5 or not 1 <= likelihood <= 5:
        raise ValueError("harm and likelihood must lie in 1..5")
    score = finding.harm * likelihood
    region = region_for(score, params)
    basis = (
        f"harm {finding.harm} x likelihood {likelihood} = {score}; "
        f"intolerable at >= {params.intolerable_min}, broadly acceptable at <= {params.acceptable_max}"
    )
    mitigation: bool | None
    if region == INTOLERABLE:
        mitigation = True
        rationale = f"{basis}; intolerable, risk must be reduced regardless of cost"
    elif region == BROADLY_ACCEPTABLE:
        mitigation = False
        rationale = f"{basis}; broadly acceptable, no further reduction required"
    elif risk_cost is None or mitigation_cost is None:
        mitigation = None
        rationale = f"{basis}; tolerable only if reduced as low as reasonably practicable, costs not provided"
    else:
        mitigation = mitigation_justified(risk_cost, mitigation_cost, params.disproportion_factor)
        verdict = "required" if mitigation else "waived as grossly disproportionate"
        rationale = (
            f"{basis}; mitigation cost {mitigation_cost:g} vs {params.disproportion_factor:g} x risk cost "
            f"{risk_cost:g}: mitigation {verdict}"
        )
    return RiskAssessment(finding.id, likelihood, score, region, rationale, mitigation)


def triage_all(
    findings: Iterable[Finding],
    params: AlarpParams = AlarpParams(),
    costs: Mapping[str, tuple[float | None, float | None]] | None = None,
) -> list[RiskAssessment]:
    """Assess each finding with its rule's frequency as likelihood."""
    findings = list(findings)
    counts = Counter(f.rule_id for f in findings)
    costs = costs or {}
    out = []
    for f in findings:
        risk_cost, mitigation_cost = costs.get(f.rule_id, (None, None))
        out.append(triage_finding(f, likelihood_from_count(counts[f.rule_id]), params, risk_cost, mitigation_cost))
    return out
