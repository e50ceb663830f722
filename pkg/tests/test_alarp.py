from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from auditbot.alarp import (
    REGION_RANK,
    AlarpParams,
    RiskAssessment,
    likelihood_from_count,
    likelihood_of,
    mitigation_justified,
    region_for,
    triage_all,
    triage_finding,
)
from auditbot.engine import Finding
from oracles import ALARP_TABLE, REGION_LETTER


def finding(harm=3, rule="r", seq=1):
    return Finding(f"{rule}:{seq}", rule, "obligation", harm, "p", seq, (seq,), "m")


@pytest.mark.parametrize("harm", range(1, 6))
@pytest.mark.parametrize("likelihood", range(1, 6))
def test_region_table(harm, likelihood):
    a = triage_finding(finding(harm), likelihood)
    assert a.score == harm * likelihood
    assert a.region == REGION_LETTER[ALARP_TABLE[harm - 1][likelihood - 1]]


def test_region_is_monotone():
    rank = [[REGION_RANK[triage_finding(finding(h), l).region] for l in range(1, 6)] for h in range(1, 6)]
    for h in range(5):
        for l in range(5):
            if h < 4:
                assert rank[h][l] <= rank[h + 1][l]
            if l < 4:
                assert rank[h][l] <= rank[h][l + 1]


@pytest.mark.parametrize("n, level", [(1, 1), (2, 2), (3, 2), (4, 3), (5, 3), (6, 3), (7, 4), (10, 4), (11, 5), (500, 5)])
def test_likelihood_table(n, level):
    assert likelihood_from_count(n) == level


def test_likelihood_of_counts_only_rule_and_window():
    findings = [finding(rule="a", seq=s) for s in range(1, 8)] + [finding(rule="b", seq=9)]
    assert likelihood_of("a", findings) == 4
    assert likelihood_of("a", findings, (3, 5)) == 2
    with pytest.raises(ValueError):
        likelihood_of("a", findings, (8, 9))


@pytest.mark.parametrize(
    "risk, mitigation, factor, required",
    [(100, 100, 3, True), (10, 100, 3, False), (10, 30, 3, True), (0, 0, 3, True), (0, 1, 3, False)],
)
def test_mitigation_examples(risk, mitigation, factor, required):
    assert mitigation_justified(risk, mitigation, factor) is required


@pytest.mark.parametrize("args", [(-1, 1, 3), (1, math.inf, 3), (1, math.nan, 3), (1, 1, 0), (1, 1, -2)])
def test_mitigation_rejects_bad_input(args):
    with pytest.raises(ValueError):
        mitigation_justified(*args)


@given(
    st.integers(0, 10**6), st.integers(0, 10**6), st.integers(1, 10), st.sampled_from([1, 2, 10, 1000, 2**20])
)
def test_mitigation_depends_only_on_ratio(risk, mitigation, factor, k):
    assert mitigation_justified(risk, mitigation, factor) == mitigation_justified(risk * k, mitigation * k, factor)


class TestTriage:
    def test_rationale_cites_inputs(self):
        a = triage_finding(finding(3), 3)
        assert a.region == "alarp" and a.mitigation_required is None
        for part in ("harm 3", "likelihood 3", "= 9", ">= 15", "<= 4", "costs not provided"):
            assert part in a.rationale

    def test_costs_in_tolerable_region(self):
        assert triage_finding(finding(3), 3, risk_cost=100, mitigation_cost=250).mitigation_required is True
        waived = triage_finding(finding(3), 3, risk_cost=100, mitigation_cost=301)
        assert waived.mitigation_required is False and "grossly disproportionate" in waived.rationale

    def test_outer_regions_ignore_costs(self):
        assert triage_finding(finding(5), 5, risk_cost=1, mitigation_cost=10**9).mitigation_required is True
        assert triage_finding(finding(1), 1, risk_cost=10**9, mitigation_cost=1).mitigation_required is False

    def test_custom_thresholds(self):
        params = AlarpParams(intolerable_min=9, acceptable_max=2, disproportion_factor=1.5)
        assert region_for(9, params) == "intolerable" and region_for(3, params) == "alarp"
        assert region_for(2, params) == "broadly_acceptable"

    @pytest.mark.parametrize("kwargs", [{"intolerable_min": 4, "acceptable_max": 4}, {"disproportion_factor": 0.0}])
    def test_bad_params(self, kwargs):
        with pytest.raises(ValueError):
            AlarpParams(**kwargs)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            triage_finding(finding(3), 6)

    def test_triage_all_uses_rule_frequency(self):
        findings = [finding(5, "a", s) for s in range(1, 4)] + [finding(2, "b", 10)]
        out = triage_all(findings, costs={"b": (1.0, 1.0)})
        assert [a.likelihood for a in out] == [2, 2, 2, 1]
        assert out[0].region == "alarp" and out[-1].mitigation_required is False

    def test_assessment_round_trip(self):
        a = triage_finding(finding(4), 4)
        assert RiskAssessment.from_dict(a.to_dict()) == a

    def test_params_from_settings(self):
        p = AlarpParams.from_settings({"alarp_intolerable_min": 12, "alarp_disproportion_factor": 2})
        assert p == AlarpParams(12, 4, 2.0)
