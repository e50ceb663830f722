from __future__ import annotations

import math
import random
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auditbot.analytics import (
    Histogram,
    Lexicon,
    WeekLedger,
    histogram_from_samples,
    iso_week_start,
    lexicon_imbalance,
    parse_lexicon,
    psi,
    split_by_week,
    tokenize,
    weekly_hours,
)
from conftest import ev
from oracles import bin_counts_oracle, imbalance_oracle, minute_hours_oracle, naive_week_start, psi_oracle

# 0.25*ln 2 - 0.25*ln(2/3), evaluated to 50 digits with decimal.Decimal.ln
PSI_HALF_VS_QUARTER = 0.27465307216702742284881130923063142616187263945568


def hist(*probs):
    return Histogram(tuple(float(i) for i in range(len(probs) + 1)), tuple(probs))


class TestPsi:
    def test_identical(self):
        assert psi(hist(0.5, 0.5), hist(0.5, 0.5)) == 0.0

    def test_worked_example(self):
        assert psi(hist(0.5, 0.5), hist(0.25, 0.75)) == pytest.approx(PSI_HALF_VS_QUARTER, abs=1e-15)

    def test_empty_bin_is_floored(self):
        value = psi(hist(1.0, 0.0), hist(0.5, 0.5))
        assert math.isfinite(value) and value == pytest.approx(psi_oracle([1.0, 0.0], [0.5, 0.5]), abs=1e-12)

    def test_mismatched_edges(self):
        with pytest.raises(ValueError):
            psi(hist(0.5, 0.5), hist(0.2, 0.3, 0.5))

    @pytest.mark.parametrize("probs", [(0.5, 0.6), (-0.1, 1.1)])
    def test_histogram_validation(self, probs):
        with pytest.raises(ValueError):
            hist(*probs)

    def test_histogram_validation_length(self):
        with pytest.raises(ValueError):
            Histogram((0.0, 1.0, 2.0), (1.0,))


@st.composite
def prob_pairs(draw):
    n = draw(st.integers(2, 12))
    weights = st.lists(st.one_of(st.just(0.0), st.floats(0.0, 100.0)), min_size=n, max_size=n).filter(
        lambda w: sum(w) > 0
    )
    a, b = draw(weights), draw(weights)
    return Histogram.from_weights(a), Histogram.from_weights(b)


@settings(max_examples=300, deadline=None)
@given(prob_pairs())
def test_psi_properties(pair):
    p, q = pair
    value = psi(p, q)
    assert value >= 0.0
    assert psi(p, p) == 0.0
    assert value == psi(q, p)
    assert value == pytest.approx(psi_oracle(list(p.probs), list(q.probs)), rel=1e-12, abs=1e-12)


class TestSampleHistograms:
    def test_same_samples_give_zero_psi(self):
        samples = [random.Random(1).gauss(0, 1) for _ in range(200)]
        base, cur = histogram_from_samples(samples, samples)
        assert psi(base, cur) == 0.0

    def test_ten_distinct_values(self):
        base, _ = histogram_from_samples(list(range(10)), [0.5])
        assert base.probs == (0.1,) * 10
        assert base.edges[0] == -math.inf and base.edges[-1] == math.inf

    def test_ties_go_to_the_right_bin(self):
        base, cur = histogram_from_samples([1, 2, 2, 2, 3, 4], [2, 2, 2.5], bins=3)
        assert base.edges == (-math.inf, 2.0, 3.0, math.inf)
        assert base.probs == pytest.approx((1 / 6, 3 / 6, 2 / 6))
        assert cur.probs == (0.0, 1.0, 0.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            histogram_from_samples([], [1.0])
        with pytest.raises(ValueError):
            histogram_from_samples([1.0], [1.0], bins=1)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(-20, 20), min_size=1, max_size=60),
    st.lists(st.integers(-25, 25), min_size=1, max_size=60),
    st.integers(2, 8),
)
def test_binning_matches_counting_oracle(base, cur, bins):
    hb, hc = histogram_from_samples(base, cur, bins)
    for h, samples in ((hb, base), (hc, cur)):
        counts = bin_counts_oracle(list(h.edges), samples)
        assert h.probs == pytest.approx(tuple(c / len(samples) for c in counts), abs=1e-15)


# -- working hours ---------------------------------------------------------------------------

UTC = timezone.utc
MONDAY = datetime(2024, 3, 4, tzinfo=UTC)


class TestWeeklyHours:
    def test_single_session(self):
        ledger = weekly_hours([("w", MONDAY + timedelta(hours=9), MONDAY + timedelta(hours=17))])
        assert ledger.labelled() == {("w", "2024-W10"): 8.0}

    def test_sunday_night_split(self):
        sunday = MONDAY + timedelta(days=6, hours=22)
        ledger = weekly_hours([("w", sunday, sunday + timedelta(hours=4))])
        assert ledger.labelled() == {("w", "2024-W10"): 2.0, ("w", "2024-W11"): 2.0}

    def test_from_events(self):
        e = ev(1, "activity.session", actor="w", start="2024-03-04T09:00:00Z", end="2024-03-04T10:30:00Z")
        assert weekly_hours([e]).labelled() == {("w", "2024-W10"): 1.5}

    def test_full_week_caps_at_168(self):
        ledger = weekly_hours([("w", MONDAY - timedelta(days=3), MONDAY + timedelta(days=10))])
        assert ledger.hours[("w", MONDAY)] == 168.0

    def test_year_boundary_label(self):
        start = datetime(2024, 12, 30, 9, tzinfo=UTC)  # ISO week 1 of 2025
        assert weekly_hours([("w", start, start + timedelta(hours=1))]).labelled() == {("w", "2025-W01"): 1.0}

    def test_start_after_end(self):
        with pytest.raises(ValueError):
            weekly_hours([("w", MONDAY, MONDAY - timedelta(minutes=1))])

    def test_empty_session(self):
        assert split_by_week(MONDAY, MONDAY) == [(MONDAY, 0.0)]


minutes = st.integers(0, 60 * 24 * 30)


@st.composite
def sessions(draw, max_minutes=60 * 24 * 20):
    out = []
    for _ in range(draw(st.integers(0, 8))):
        start = MONDAY + timedelta(minutes=draw(minutes))
        out.append((draw(st.sampled_from(("a", "b"))), start, start + timedelta(minutes=draw(st.integers(0, max_minutes)))))
    return out


@settings(max_examples=60, deadline=None)
@given(sessions())
def test_hours_match_minute_oracle(items):
    got = weekly_hours(items).labelled()
    expected = minute_hours_oracle(items)
    assert {k for k, v in got.items() if v > 0} == set(expected)
    for key, hours in expected.items():
        assert got[key] == pytest.approx(hours, abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10**9), st.integers(0, 10**7)), max_size=20))
def test_hours_conservation(raw):
    items = [("a", MONDAY + timedelta(seconds=s), MONDAY + timedelta(seconds=s + d)) for s, d in raw]
    ledger = weekly_hours(items)
    expected = math.fsum((end - start).total_seconds() / 3600 for _, start, end in items)
    assert abs(ledger.total() - expected) <= 1e-9
    # overlapping sessions may double-count; one session alone never exceeds a week
    per_session = weekly_hours([(str(i), start, end) for i, (_, start, end) in enumerate(items)])
    assert all(0 <= h <= 168 for h in per_session.hours.values())


@settings(max_examples=200, deadline=None)
@given(st.datetimes(min_value=datetime(2000, 1, 1), max_value=datetime(2100, 1, 1)))
def test_week_start_matches_naive(t):
    t = t.replace(tzinfo=UTC)
    assert iso_week_start(t) == naive_week_start(t)


def test_ledger_is_mutable_accumulator():
    ledger = WeekLedger()
    ledger.add("x", MONDAY, MONDAY + timedelta(hours=2))
    ledger.add("x", MONDAY + timedelta(hours=3), MONDAY + timedelta(hours=4))
    assert ledger.total() == 3.0


# -- lexicon -----------------------------------------------------------------------------------

LEX = Lexicon(frozenset({"dominant", "ninja", "rockstar", "competit"}), frozenset({"support", "collab"}))


class TestLexicon:
    def test_empty_text(self):
        assert lexicon_imbalance("", LEX) == (0, 0, 0)

    def test_direct_count(self):
        lex = Lexicon(frozenset({"dominant", "ninja", "rockstar"}), frozenset())
        assert lexicon_imbalance("dominant rockstar ninja needed", lex) == (3, 0, 3)

    def test_balanced(self):
        assert lexicon_imbalance("Competitive ninja; supportive, collaborative.", LEX) == (2, 2, 0)

    def test_stem_prefix_and_case(self):
        assert lexicon_imbalance("COMPETITION competitors", LEX) == (2, 0, 2)
        assert lexicon_imbalance("uncompetitive", LEX) == (0, 0, 0)

    def test_tokenizer(self):
        assert tokenize("Hello, WORLD_wide--web 42") == ["hello", "world", "wide", "web", "42"]

    def test_parse(self):
        lex = parse_lexicon("# words\n[masculine]\nNinja  # note\n\n[feminine]\nsupport\n")
        assert lex == Lexicon(frozenset({"ninja"}), frozenset({"support"}))

    @pytest.mark.parametrize("text", ["ninja\n", "[other]\nx\n", "[masculine]\nx\n[feminine]\nx\n"])
    def test_parse_errors(self, text):
        with pytest.raises(ValueError):
            parse_lexicon(text)


words = st.sampled_from(["dominant", "ninja", "supportive", "collaborate", "the", "team", "rockstars", "competitive", "x"])


@settings(max_examples=200, deadline=None)
@given(st.lists(words, max_size=30), st.randoms(use_true_random=False))
def test_imbalance_permutation_invariant_and_matches_oracle(tokens, rnd):
    text = " ".join(tokens)
    shuffled = tokens[:]
    rnd.shuffle(shuffled)
    assert lexicon_imbalance(text, LEX) == lexicon_imbalance(", ".join(shuffled), LEX)
    assert lexicon_imbalance(text, LEX) == imbalance_oracle(text, LEX.masculine_coded, LEX.feminine_coded)
