"""Deterministic statistics behind the drift, working-hours and job-posting checks."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PSI_FLOOR = 1e-6
SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.probs) != len(self.edges) - 1:
            raise ValueError("histogram needs len(edges) - 1 probabilities")
        if any(p < 0 for p in self.probs):
            raise ValueError("negative probability")
        if abs(math.fsum(self.probs) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> Histogram:
        """Histogram over bin indexes 0..n, normalising raw weights."""
        total = math.fsum(weights)
        return cls(tuple(float(i) for i in range(len(weights) + 1)), tuple(w / total for w in weights))


def psi(baseline: Histogram, current: Histogram) -> float:
    """Population stability index, sum of (p - q) * ln(p / q) over shared bins.

    Each probability is floored at ``PSI_FLOOR`` before taking logs.
    Written as ``(p - q) * (ln p - ln q)`` so that swapping the arguments
    flips both factors exactly, making the result bitwise symmetric.
    """
    if baseline.edges != current.edges:
        raise ValueError("histograms have mismatched edges")
    p = np.maximum(np.asarray(baseline.probs, dtype=float), PSI_FLOOR)
    q = np.maximum(np.asarray(current.probs, dtype=float), PSI_FLOOR)
    terms = (p - q) * (np.log(p) - np.log(q))
    return float(math.fsum(terms.tolist()))


def histogram_from_samples(
    baseline_samples: Sequence[float], current_samples: Sequence[float], bins: int = 10
) -> tuple[Histogram, Histogram]:
    """Bin both samples on equal-count quantile edges of the baseline.

    Interior edges are baseline order statistics; bins are left-closed,
    right-open, and the outer edges are infinite.
    """
    if len(baseline_samples) == 0:
        raise ValueError("empty baseline sample")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    base = np.sort(np.asarray(baseline_samples, dtype=float))
    n = len(base)
    interior = [float(base[(k * n) // bins]) for k in range(1, bins)]
    edges = (-math.inf, *interior, math.inf)

    def binned(samples: Sequence[float]) -> Histogram:
        arr = np.asarray(samples, dtype=float)
        if arr.size == 0:
            raise ValueError("empty sample")
        idx = np.searchsorted(np.asarray(interior), arr, side="right")
        counts = np.bincount(idx, minlength=bins)
        return Histogram(edges, tuple((counts / arr.size).tolist()))

    return binned(base), binned(current_samples)


# ---------------------------------------------------------------------------
# working hours


def iso_week_start(ts: datetime) -> datetime:
    """Monday 00:00 of the ISO week containing ``ts`` (same tzinfo)."""
    day = ts.replace(hour=0, minute=0, second=0, microsecond=0)
    return day - timedelta(days=ts.weekday())


def iso_week_label(week_start: datetime) -> str:
    year, week, _ = week_start.isocalendar()
    return f"{year}-W{week:02d}"


def split_by_week(start: datetime, end: datetime) -> list[tuple[datetime, float]]:
    """Split [start, end] at ISO week boundaries into (week start, hours) pieces."""
    if start > end:
        raise ValueError("session start after end")
    pieces: list[tuple[datetime, float]] = []
    cursor = start
    while True:
        week = iso_week_start(cursor)
        boundary = week + timedelta(days=7)
        stop = min(end, boundary)
        pieces.append((week, (stop - cursor).total_seconds() / SECONDS_PER_HOUR))
        if stop >= end:
            return pieces
        cursor = stop


@dataclass
class WeekLedger:
    """Hours per (actor, ISO week start)."""

    hours: dict[tuple[str | None, datetime], float] = field(default_factory=dict)

    def add(self, actor: str | None, start: datetime, end: datetime) -> list[tuple[datetime, float]]:
        pieces = split_by_week(start, end)
        for week, h in pieces:
            key = (actor, week)
            self.hours[key] = self.hours.get(key, 0.0) + h
        return pieces

    def total(self) -> float:
        return math.fsum(self.hours.values())

    def labelled(self) -> dict[tuple[str | None, str], float]:
        return {(actor, iso_week_label(week)): h for (actor, week), h in self.hours.items()}


def weekly_hours(sessions: Iterable) -> WeekLedger:
    """Aggregate ``activity.session`` events (or (actor, start, end) triples) by ISO week."""
    from .events import Event, parse_timestamp

    ledger = WeekLedger()
    for s in sessions:
        if isinstance(s, Event):
            ledger.add(s.actor, parse_timestamp(s.payload["start"]), parse_timestamp(s.payload["end"]))
        else:
            actor, start, end = s
            ledger.add(actor, start, end)
    return ledger


# ---------------------------------------------------------------------------
# gendered wording

_TOKEN_SPLIT = re.compile(r"[\W_]+")


@dataclass(frozen=True)
class Lexicon:
    masculine_coded: frozenset[str]
    feminine_coded: frozenset[str]

    def __post_init__(self) -> None:
        overlap = self.masculine_coded & self.feminine_coded
        if overlap:
            raise ValueError(f"stems listed as both masculine and feminine: {sorted(overlap)}")


def parse_lexicon(text: str) -> Lexicon:
    """Parse ``[masculine]`` / ``[feminine]`` sections of one stem per line."""
    sections: dict[str, set[str]] = {"masculine": set(), "feminine": set()}
    current: str | None = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in sections:
                raise ValueError(f"line {n}: unknown lexicon section [{current}]")
            continue
        if current is None:
            raise ValueError(f"line {n}: stem outside a section")
        sections[current].add(line.lower())
    return Lexicon(frozenset(sections["masculine"]), frozenset(sections["feminine"]))


def load_lexicon(path: str | Path) -> Lexicon:
    return parse_lexicon(Path(path).read_text(encoding="utf-8"))


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def lexicon_imbalance(text: str, lexicon: Lexicon) -> tuple[int, int, int]:
    """Count masculine- and feminine-coded tokens; returns (m, f, m - f)."""
    masc = tuple(sorted(lexicon.masculine_coded))
    fem = tuple(sorted(lexicon.feminine_coded))
    m = f = 0
    for token in tokenize(text):
        if token.startswith(masc):
            m += 1
        elif token.startswith(fem):
            f += 1
    return m, f, m - f
