"""Ranking tables shared by the referral, retention and centrality analyses."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable


@dataclass
class RankingRow:
    entity: str
    score: float
    column: Hashable  # quarter, state code, or None for a single global column
    rank: int
    payload: Any = None


@dataclass
class RankingTable:
    columns: list = field(default_factory=list)
    rows: list[RankingRow] = field(default_factory=list)
    short: set = field(default_factory=set)  # columns with fewer rows than requested
    empty: set = field(default_factory=set)  # columns with no data at all

    def column(self, label) -> list[str]:
        return [r.entity for r in sorted((r for r in self.rows if r.column == label), key=lambda r: r.rank)]

    def rank_of(self, entity: str, label) -> int | None:
        for r in self.rows:
            if r.entity == entity and r.column == label:
                return r.rank
        return None

    def entities(self) -> list[str]:
        """Entities in first-appearance order: by column, then by rank within it."""
        order: list[str] = []
        seen: set[str] = set()
        for label in self.columns:
            for e in self.column(label):
                if e not in seen:
                    seen.add(e)
                    order.append(e)
        return order

    def grid(self) -> list[list[str]]:
        """Entity x column matrix of ranks with ``"-"`` where absent."""
        ranks = {(r.entity, r.column): r.rank for r in self.rows}
        out = [["entity"] + [str(c) for c in self.columns]]
        for e in self.entities():
            out.append([e] + [str(ranks[(e, c)]) if (e, c) in ranks else "-" for c in self.columns])
        return out

    def write_grid_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.grid())

    def write_long_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["column", "rank", "entity", "score"])
            for label in self.columns:
                for r in sorted((r for r in self.rows if r.column == label), key=lambda r: r.rank):
                    w.writerow(["" if label is None else str(label), r.rank, r.entity, repr(float(r.score))])


def rank_scores(values: dict[str, float], top_n: int | None = None) -> list[tuple[str, float]]:
    """Sort descending by value, ties by ID; keep the first ``top_n``."""
    ordered = sorted(values.items(), key=lambda kv: (-kv[1], kv[0]))
    return ordered if top_n is None else ordered[:top_n]
