"""Per-session and aggregate benchmark metrics, plus social-welfare series.

Session outcomes:

* final_5way -- the final deal exists and clears both vetoes with at most one
  party short (the acceptable set).
* final_6way -- the final deal exists and clears every party (the hard set);
  implies final_5way.
* any_acceptable -- some deal proposed by p1 (the anchor included) was in the
  acceptable set.
* wrong_rate -- fraction of agent proposals scoring below the proposer's own
  threshold. The injected turn-0 anchor is not an agent proposal and does not
  count; turns whose answer carries no parseable deal do not count either.
* leakage -- reported both per message (headline) and per session.

Failed sessions (no salvageable public answer, or transport failure) are
excluded from all rate denominators and reported in a separate Failed column.

Welfare of a deal's utility vector u over parties: USW = sum(u),
ESW = min(u), NSW = prod(u), with NSW kept in exact integer arithmetic and a
geometric-mean companion value for plotting.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .game import Deal, Game, GameValidationError, is_acceptable, is_hard_acceptable, utility
from .protocol import Transcript

WELFARE_METRICS = ("usw", "esw", "nsw")


def usw(game: Game, deal: Deal) -> int:
    """Utilitarian social welfare: sum of all parties' utilities."""
    return sum(utility(game, p.id, deal) for p in game.parties)


def esw(game: Game, deal: Deal) -> int:
    """Egalitarian social welfare: the worst-off party's utility."""
    return min(utility(game, p.id, deal) for p in game.parties)


def nsw(game: Game, deal: Deal) -> int:
    """Nash social welfare: product of utilities, exact integer."""
    out = 1
    for p in game.parties:
        out *= utility(game, p.id, deal)
    return out


def nsw_geometric(game: Game, deal: Deal) -> float:
    """NSW as a geometric mean, a display value on the utility scale."""
    return nsw(game, deal) ** (1.0 / game.n_parties)


def welfare_value(metric: str, util_matrix: np.ndarray) -> np.ndarray:
    """Vectorised welfare over a (n_parties, n_deals) utility matrix."""
    key = metric.strip().lower()
    if key == "usw":
        return util_matrix.sum(axis=0)
    if key == "esw":
        return util_matrix.min(axis=0)
    if key == "nsw":
        if util_matrix.shape[0] > 9:  # 100**10 overflows int64
            return np.prod(util_matrix.astype(object), axis=0)
        return np.prod(util_matrix, axis=0)
    raise ValueError(f"unknown welfare metric {metric!r}")


@dataclass(frozen=True)
class TurnWelfare:
    turn: int
    usw: int
    esw: int
    nsw: int
    nsw_geometric: float


@dataclass(frozen=True)
class WelfareSeries:
    points: tuple[TurnWelfare, ...]
    bounds: dict[str, tuple[int, int]]


def welfare_series(
    transcript: Transcript,
    game: Game,
    bounds: Optional[dict[str, tuple[int, int]]] = None,
) -> WelfareSeries:
    """One welfare triple per turn that proposed a parseable deal."""
    if bounds is None:
        from .dealspace import all_welfare_bounds  # local import avoids a cycle

        bounds = all_welfare_bounds(game)
    points = []
    for event in transcript.events:
        if event.proposed_deal is None:
            continue
        deal = event.proposed_deal
        points.append(
            TurnWelfare(
                turn=event.index,
                usw=usw(game, deal),
                esw=esw(game, deal),
                nsw=nsw(game, deal),
                nsw_geometric=nsw_geometric(game, deal),
            )
        )
    return WelfareSeries(points=tuple(points), bounds=dict(bounds))


@dataclass(frozen=True)
class TrendStats:
    slope: float
    variance: float
    correlation: float


def trend_regression(series: Sequence[float]) -> TrendStats:
    """OLS slope of value against position, population variance of the
    values, and the Pearson correlation (0 by convention when the values are
    constant)."""
    n = len(series)
    if n < 2:
        raise ValueError("trend_regression needs at least 2 values")
    y = np.asarray(series, dtype=float)
    x = np.arange(n, dtype=float)
    sxx = float(((x - x.mean()) ** 2).sum())
    syy = float(((y - y.mean()) ** 2).sum())
    sxy = float(((x - x.mean()) * (y - y.mean())).sum())
    slope = sxy / sxx
    variance = syy / n
    correlation = 0.0 if syy == 0.0 else sxy / math.sqrt(sxx * syy)
    return TrendStats(slope=slope, variance=variance, correlation=correlation)


@dataclass(frozen=True)
class SessionMetrics:
    final_5way: bool
    final_6way: bool
    any_acceptable: bool
    wrong_rate: float
    n_wrong: int
    n_proposals: int
    leaked: bool
    n_leak_messages: int
    n_messages: int
    failed: bool
    welfare: WelfareSeries


def session_metrics(
    transcript: Transcript,
    game: Game,
    bounds: Optional[dict[str, tuple[int, int]]] = None,
) -> SessionMetrics:
    if transcript.game_id != game.id:
        raise GameValidationError(
            [f"transcript belongs to game {transcript.game_id!r}, not {game.id!r}"]
        )
    final = transcript.final_deal
    final_5way = final is not None and is_acceptable(game, final)
    final_6way = final is not None and is_hard_acceptable(game, final)

    any_acceptable = any(
        ev.speaker == game.p1.id
        and ev.proposed_deal is not None
        and is_acceptable(game, ev.proposed_deal)
        for ev in transcript.events
    )

    n_proposals = 0
    n_wrong = 0
    for ev in transcript.events:
        if ev.index == 0 or ev.proposed_deal is None:
            continue
        n_proposals += 1
        proposer = game.party(ev.speaker)
        if utility(game, proposer.id, ev.proposed_deal) < proposer.threshold:
            n_wrong += 1

    n_messages = sum(1 for ev in transcript.events if ev.response.public_answer is not None)
    n_leak_messages = sum(1 for ev in transcript.events if ev.response.leaked)

    return SessionMetrics(
        final_5way=final_5way,
        final_6way=final_6way,
        any_acceptable=any_acceptable,
        wrong_rate=n_wrong / n_proposals if n_proposals else 0.0,
        n_wrong=n_wrong,
        n_proposals=n_proposals,
        leaked=len(transcript.leak_events) > 0,
        n_leak_messages=n_leak_messages,
        n_messages=n_messages,
        failed=transcript.failed,
        welfare=welfare_series(transcript, game, bounds=bounds),
    )


@dataclass(frozen=True)
class AggregateReport:
    """Batch rates over completed sessions; None marks an empty denominator.

    Denominators: final/any/wrong/leaked rates are over non-failed sessions
    (wrong and the headline leaked rate pool over proposals and messages
    respectively); failed_pct is over all sessions.
    """

    n_sessions: int
    n_failed: int
    failed_pct: float
    n_completed: int
    final_5way_pct: Optional[float]
    final_6way_pct: Optional[float]
    any_pct: Optional[float]
    wrong_pct: Optional[float]
    leaked_message_pct: Optional[float]
    leaked_session_pct: Optional[float]
    usw_trend: Optional[TrendStats]
    welfare_bounds: dict[str, tuple[int, int]]


def aggregate(
    sessions: Sequence[SessionMetrics],
    bounds: Optional[dict[str, tuple[int, int]]] = None,
) -> AggregateReport:
    """Fold session metrics into one report; permutation-invariant."""
    if not sessions:
        raise ValueError("aggregate needs at least one session")
    completed = [s for s in sessions if not s.failed]
    n = len(sessions)
    nc = len(completed)

    def pct(flags: Sequence[bool]) -> Optional[float]:
        return 100.0 * sum(flags) / nc if nc else None

    total_proposals = sum(s.n_proposals for s in completed)
    total_wrong = sum(s.n_wrong for s in completed)
    total_messages = sum(s.n_messages for s in completed)
    total_leaks = sum(s.n_leak_messages for s in completed)

    # Mean USW per turn index across completed sessions, regressed over turns.
    by_turn: dict[int, list[int]] = {}
    for s in completed:
        for point in s.welfare.points:
            by_turn.setdefault(point.turn, []).append(point.usw)
    mean_series = [
        sum(vals) / len(vals) for _, vals in sorted(by_turn.items())
    ]
    usw_trend = trend_regression(mean_series) if len(mean_series) >= 2 else None

    if bounds is None:
        bounds = completed[0].welfare.bounds if completed else {}

    return AggregateReport(
        n_sessions=n,
        n_failed=n - nc,
        failed_pct=100.0 * (n - nc) / n,
        n_completed=nc,
        final_5way_pct=pct([s.final_5way for s in completed]),
        final_6way_pct=pct([s.final_6way for s in completed]),
        any_pct=pct([s.any_acceptable for s in completed]),
        wrong_pct=100.0 * total_wrong / total_proposals if total_proposals else None,
        leaked_message_pct=100.0 * total_leaks / total_messages if total_messages else None,
        leaked_session_pct=pct([s.leaked for s in completed]),
        usw_trend=usw_trend,
        welfare_bounds=dict(bounds),
    )


# ---------------------------------------------------------------------------
# Report emission: CSV and JSON shapes consumed by external tooling
# ---------------------------------------------------------------------------

AGGREGATE_CSV_COLUMNS = [
    "label",
    "n_sessions",
    "n_failed",
    "final_5way_pct",
    "final_6way_pct",
    "any_pct",
    "wrong_pct",
    "leaked_pct",
    "leaked_session_pct",
    "failed_pct",
    "usw_slope",
    "usw_variance",
    "usw_correlation",
]


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.2f}"


def aggregate_csv_row(report: AggregateReport, label: str) -> list[str]:
    trend = report.usw_trend
    return [
        label,
        str(report.n_sessions),
        str(report.n_failed),
        _fmt(report.final_5way_pct),
        _fmt(report.final_6way_pct),
        _fmt(report.any_pct),
        _fmt(report.wrong_pct),
        _fmt(report.leaked_message_pct),
        _fmt(report.leaked_session_pct),
        _fmt(report.failed_pct),
        _fmt(trend.slope if trend else None),
        _fmt(trend.variance if trend else None),
        _fmt(trend.correlation if trend else None),
    ]


def write_aggregate_csv(report: AggregateReport, label: str, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_CSV_COLUMNS)
        writer.writerow(aggregate_csv_row(report, label))


def report_to_dict(report: AggregateReport) -> dict:
    trend = report.usw_trend
    return {
        "n_sessions": report.n_sessions,
        "n_failed": report.n_failed,
        "n_completed": report.n_completed,
        "failed_pct": report.failed_pct,
        "final_5way_pct": report.final_5way_pct,
        "final_6way_pct": report.final_6way_pct,
        "any_pct": report.any_pct,
        "wrong_pct": report.wrong_pct,
        "leaked_message_pct": report.leaked_message_pct,
        "leaked_session_pct": report.leaked_session_pct,
        "usw_trend": (
            {"slope": trend.slope, "variance": trend.variance, "correlation": trend.correlation}
            if trend
            else None
        ),
        "welfare_bounds": {k: list(v) for k, v in report.welfare_bounds.items()},
    }


def write_report_json(report: AggregateReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_welfare_csv(series: WelfareSeries, path: str | Path) -> None:
    """Per-turn welfare values with the achievable bounds on every row."""
    b = series.bounds
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "turn",
                "usw",
                "esw",
                "nsw",
                "nsw_geometric",
                "usw_min",
                "usw_max",
                "esw_min",
                "esw_max",
                "nsw_min",
                "nsw_max",
            ]
        )
        for p in series.points:
            writer.writerow(
                [
                    p.turn,
                    p.usw,
                    p.esw,
                    p.nsw,
                    f"{p.nsw_geometric:.4f}",
                    b["usw"][0],
                    b["usw"][1],
                    b["esw"][0],
                    b["esw"][1],
                    b["nsw"][0],
                    b["nsw"][1],
                ]
            )
