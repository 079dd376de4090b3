"""Exhaustive deal-space enumeration and game characterisation statistics.

Deal spaces in this package are small by construction (the default issue
shape yields 720 deals), so every statistic here is exact: full enumeration,
never sampling. The vectorised utility matrix keeps bulk characterisation of
thousands of generated games cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from itertools import product
from typing import Iterator

import numpy as np

from .game import Deal, Game
from .metrics import WELFARE_METRICS, welfare_value


@dataclass(frozen=True)
class DealSpaceStats:
    """Characterisation of one game's deal space.

    Percentages are exact fractions scaled to 100; use ``round2`` for the
    two-decimal, half-up presentation used in reports.
    """

    total: int
    n_acceptable: int
    n_hard: int
    sparsity_pct: float
    iou_pct: float
    utility_extrema: dict[str, tuple[int, int]]

    def row(self) -> str:
        """One-line report: acc/total, hard/total, sparsity %, IoU %."""
        return (
            f"{self.n_acceptable}/{self.total}  {self.n_hard}/{self.total}  "
            f"{round2(self.sparsity_pct)}  {round2(self.iou_pct)}"
        )

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "n_acceptable": self.n_acceptable,
            "n_hard": self.n_hard,
            "sparsity_pct": float(round2(self.sparsity_pct)),
            "iou_pct": float(round2(self.iou_pct)),
            "utility_extrema": {p: list(mm) for p, mm in self.utility_extrema.items()},
        }


def round2(x: float) -> Decimal:
    """Two-decimal half-up rounding for reported percentages."""
    return Decimal(repr(x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


def enumerate_deals(game: Game) -> Iterator[Deal]:
    """Yield every deal exactly once, in lexicographic issue-option order."""
    ids = [issue.id for issue in game.issues]
    ranges = [range(1, len(issue.options) + 1) for issue in game.issues]
    for combo in product(*ranges):
        yield Deal.from_mapping(dict(zip(ids, combo)))


def utilities_matrix(game: Game) -> np.ndarray:
    """Utilities of all deals for all parties, shape (n_parties, |deal space|).

    Column order matches enumerate_deals. Integer arithmetic throughout.
    """
    counts = [len(issue.options) for issue in game.issues]
    option_grid = np.indices(counts).reshape(len(counts), -1)  # 0-based per issue
    n_deals = option_grid.shape[1]
    out = np.zeros((game.n_parties, n_deals), dtype=np.int64)
    for p_idx, party in enumerate(game.parties):
        rows = game.weights[party.id]
        for i_idx, issue in enumerate(game.issues):
            row = np.asarray(rows[issue.id], dtype=np.int64)
            out[p_idx] += row[option_grid[i_idx]]
    return out


def acceptance_masks(game: Game) -> tuple[np.ndarray, np.ndarray]:
    """(acceptable, hard-acceptable) boolean masks over enumerate_deals order."""
    util = utilities_matrix(game)
    thresholds = np.array([p.threshold for p in game.parties], dtype=np.int64)
    meets = util >= thresholds[:, None]
    veto_idx = [i for i, p in enumerate(game.parties) if p.veto]
    acceptable = meets[veto_idx].all(axis=0) & ((~meets).sum(axis=0) <= 1)
    hard = meets.all(axis=0)
    return acceptable, hard


def pairwise_iou(game: Game, px: str, py: str) -> float:
    """Preference overlap between two parties, averaged over issues.

    Per issue, the ratio of summed option-wise minima to summed maxima of the
    two weight rows. An issue where both parties place zero weight everywhere
    is a 0/0 ratio; it counts as 1.0 (identical total indifference).
    """
    wx = game.weights[game.party(px).id]
    wy = game.weights[game.party(py).id]
    ratios = []
    for issue in game.issues:
        num = sum(min(a, b) for a, b in zip(wx[issue.id], wy[issue.id]))
        den = sum(max(a, b) for a, b in zip(wx[issue.id], wy[issue.id]))
        ratios.append(1.0 if den == 0 else num / den)
    return sum(ratios) / len(ratios)


def overall_iou(game: Game) -> float:
    """Mean pairwise overlap over all ordered pairs of distinct parties.

    Equals the unordered-pair mean because pairwise_iou is symmetric.
    """
    ids = [p.id for p in game.parties]
    values = [pairwise_iou(game, a, b) for a in ids for b in ids if a != b]
    return sum(values) / len(values)


def sparsity_pct(game: Game) -> float:
    """Percentage of zero-valued weight slots over all parties' tables.

    Denominator: n_parties x total sub-options across issues.
    """
    zeros = 0
    slots = 0
    for party in game.parties:
        for issue in game.issues:
            row = game.weights[party.id][issue.id]
            zeros += sum(1 for w in row if w == 0)
            slots += len(row)
    return 100.0 * zeros / slots


def compute_stats(game: Game) -> DealSpaceStats:
    """Exact deal-space statistics by full enumeration."""
    util = utilities_matrix(game)
    acceptable, hard = acceptance_masks(game)
    extrema = {
        party.id: (int(util[i].min()), int(util[i].max()))
        for i, party in enumerate(game.parties)
    }
    return DealSpaceStats(
        total=util.shape[1],
        n_acceptable=int(acceptable.sum()),
        n_hard=int(hard.sum()),
        sparsity_pct=sparsity_pct(game),
        iou_pct=100.0 * overall_iou(game),
        utility_extrema=extrema,
    )


def welfare_bounds(game: Game, metric: str) -> tuple[int, int]:
    """Min and max achievable value of a welfare metric over the deal space."""
    key = metric.strip().lower()
    if key not in WELFARE_METRICS:
        raise ValueError(f"unknown welfare metric {metric!r}; expected one of USW, ESW, NSW")
    util = utilities_matrix(game)
    values = welfare_value(key, util)
    return int(values.min()), int(values.max())


def all_welfare_bounds(game: Game) -> dict[str, tuple[int, int]]:
    return {m: welfare_bounds(game, m) for m in WELFARE_METRICS}
