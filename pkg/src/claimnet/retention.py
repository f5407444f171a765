"""Patient retention: how strongly each patient concentrates on one physician.

For patient ``i`` with ``s_i`` claims over ``K_i`` physicians, ``r_ij = s_ij / s_i``
and ``r_max`` is its largest value. A physician's raw retention is the mean of
``r_max * K_i`` over the patients for whom it attains ``r_max``; scores are
then divided by the best raw score.
"""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .ingest import ClaimRecord, DateWindow, partition_quarters
from .ranking import RankingRow, RankingTable, rank_scores

REFERENCE_SLOPES = (1, 5, 10, 50)


@dataclass
class PatientProfile:
    patient_id: str
    counts: dict[str, int]  # s_ij

    @property
    def total(self) -> int:  # s_i
        return sum(self.counts.values())

    @property
    def n_physicians(self) -> int:  # K_i
        return len(self.counts)

    @property
    def relative(self) -> dict[str, float]:
        s = self.total
        return {j: c / s for j, c in self.counts.items()}

    @property
    def r_max(self) -> float:
        return max(self.counts.values()) / self.total

    @property
    def argmax(self) -> list[str]:
        top = max(self.counts.values())
        return sorted(j for j, c in self.counts.items() if c == top)


def build_patient_profiles(records: Iterable[ClaimRecord]) -> list[PatientProfile]:
    counts: dict[str, Counter] = defaultdict(Counter)
    for r in records:
        counts[r.patient_id][r.physician_key] += 1
    return [PatientProfile(pid, dict(sorted(counts[pid].items()))) for pid in sorted(counts)]


@dataclass
class RetentionScore:
    physician_id: str
    raw_score: float
    normalized_score: float
    contributing_patients: int


@dataclass
class RetentionResult:
    scores: list[RetentionScore] = field(default_factory=list)
    all_zero: bool = False

    def __iter__(self):
        return iter(self.scores)

    def __len__(self) -> int:
        return len(self.scores)

    def as_dict(self) -> dict[str, float]:
        return {s.physician_id: s.normalized_score for s in self.scores}


def retention_scores(profiles: Iterable[PatientProfile], min_k: int = 1, include_single_claim: bool = True) -> RetentionResult:
    """Per-physician retention, best first (ties by ID).

    Every physician seen in ``profiles`` gets a row; those with no
    contributing patient score 0. Tied argmax physicians each receive the
    full contribution.
    """
    sums: dict[str, Fraction] = defaultdict(Fraction)
    n_contrib: Counter = Counter()
    physicians: set[str] = set()
    for p in profiles:
        physicians.update(p.counts)
        if p.n_physicians < min_k:
            continue
        if not include_single_claim and p.total == 1:
            continue
        contribution = Fraction(max(p.counts.values()) * p.n_physicians, p.total)
        for j in p.argmax:
            sums[j] += contribution
            n_contrib[j] += 1
    raw = {j: float(sums[j] / n_contrib[j]) if n_contrib[j] else 0.0 for j in physicians}
    best = max(raw.values(), default=0.0)
    ordered = rank_scores(raw)
    if best <= 0:
        return RetentionResult([RetentionScore(j, 0.0, 0.0, 0) for j, _ in ordered], all_zero=True)
    return RetentionResult([RetentionScore(j, v, v / best, n_contrib[j]) for j, v in ordered])


def quarterly_retention_ranking(records: Iterable[ClaimRecord], window: DateWindow | None = None, top_n: int = 10,
                                min_k: int = 1, include_single_claim: bool = True) -> RankingTable:
    """Top ``top_n`` retention ranks computed independently in each quarter."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    records = list(records)
    window = window or DateWindow.covering(records)
    if window is None:
        return RankingTable()
    parts = partition_quarters(records, window).partitions
    table = RankingTable(columns=window.quarters)
    for q in table.columns:
        recs = parts.get(q, [])
        if not recs:
            table.empty.add(q)
            continue
        result = retention_scores(build_patient_profiles(recs), min_k, include_single_claim)
        ranked = [s for s in result.scores if s.raw_score > 0][:top_n]
        if len(ranked) < top_n:
            table.short.add(q)
        for rank, s in enumerate(ranked, start=1):
            table.rows.append(RankingRow(s.physician_id, s.normalized_score, q, rank, payload=s))
    return table


@dataclass
class ScatterRow:
    patient_id: str
    k: int
    s: int
    r_max: float
    above_top_line: bool


def retention_scatter(profiles: Iterable[PatientProfile]) -> list[ScatterRow]:
    """One (K, s, r_max) point per patient; flags points above ``s = 50 K``."""
    top = max(REFERENCE_SLOPES)
    return [ScatterRow(p.patient_id, p.n_physicians, p.total, p.r_max, p.total > top * p.n_physicians) for p in profiles]


def write_scatter_csv(rows: Iterable[ScatterRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "K", "s", "r_max", "above_c50"])
        for r in rows:
            w.writerow([r.patient_id, r.k, r.s, repr(r.r_max), int(r.above_top_line)])


def write_scores_csv(result: RetentionResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["physician_id", "raw_score", "normalized_score", "contributing_patients"])
        for s in result.scores:
            w.writerow([s.physician_id, repr(s.raw_score), repr(s.normalized_score), s.contributing_patients])
