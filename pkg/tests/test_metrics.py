from __future__ import annotations

import random

import pytest

from scoregames.agents import Agent, RandomSequenceAgent
from scoregames.game import Deal, Game, GameValidationError, Issue, Party
from scoregames.metrics import (
    SessionMetrics,
    WelfareSeries,
    aggregate,
    aggregate_csv_row,
    esw,
    nsw,
    nsw_geometric,
    session_metrics,
    trend_regression,
    usw,
    welfare_series,
)
from scoregames.protocol import run_session

from .test_protocol import TurnKeyedAgent, agents_for


def deal(**assignment) -> Deal:
    return Deal.from_mapping(assignment)


# ---------------------------------------------------------------------------
# welfare scalars
# ---------------------------------------------------------------------------


def test_welfare_direct_arithmetic(toy_game):
    # Deal (2,1) has utilities (30, 100, 100).
    d = deal(A=2, B=1)
    assert usw(toy_game, d) == 230
    assert esw(toy_game, d) == 30
    assert nsw(toy_game, d) == 30 * 100 * 100
    assert nsw_geometric(toy_game, d) == pytest.approx((30 * 100 * 100) ** (1 / 3))


def test_nsw_zero_when_any_party_at_zero():
    # In the sample game the developer scores zero on A3, B1, C4, D4, E5.
    from scoregames import load_sample_game
    from scoregames.game import utility

    game = load_sample_game()
    zero_deal = deal(A=3, B=1, C=4, D=4, E=5)
    assert utility(game, "DEV", zero_deal) == 0
    assert nsw(game, zero_deal) == 0
    assert nsw_geometric(game, zero_deal) == 0.0


def test_nsw_prefers_even_split_at_equal_usw():
    # Two deals with identical USW but different spreads: (4,4,1) vs (2,6,1).
    game = Game(
        id="even",
        issues=(Issue("A", "A", ("x", "y", "z")), Issue("B", "B", ("x", "y"))),
        parties=(
            Party("P1", "P1", veto=True, threshold=0),
            Party("P2", "P2", veto=True, threshold=0),
            Party("P3", "P3", veto=False, threshold=0),
        ),
        weights={
            "P1": {"A": (4, 2, 40), "B": (0, 60)},
            "P2": {"A": (4, 6, 50), "B": (0, 50)},
            "P3": {"A": (1, 1, 30), "B": (0, 70)},
        },
        initial_deal=deal(A=1, B=1),
        rounds=1,
    )
    even = deal(A=1, B=1)  # utilities (4, 4, 1)
    skewed = deal(A=2, B=1)  # utilities (2, 6, 1)
    assert usw(game, even) == usw(game, skewed) == 9
    assert nsw(game, even) == 16
    assert nsw(game, skewed) == 12
    assert nsw(game, even) > nsw(game, skewed)


# ---------------------------------------------------------------------------
# trend regression
# ---------------------------------------------------------------------------


def test_trend_regression_perfect_line():
    stats = trend_regression([1, 2, 3])
    assert stats.slope == pytest.approx(1.0)
    assert stats.correlation == pytest.approx(1.0)


def test_trend_regression_constant_series_conventions():
    stats = trend_regression([5, 5, 5, 5])
    assert stats.slope == 0.0
    assert stats.variance == 0.0
    assert stats.correlation == 0.0


def test_trend_regression_hand_ols():
    # x = [0,1,2,3], y = [0,2,1,3]: Sxy = 4, Sxx = 5, Syy = 5 (by hand), so
    # slope 0.8, population variance 1.25, correlation 0.8.
    stats = trend_regression([0, 2, 1, 3])
    assert stats.slope == pytest.approx(0.8)
    assert stats.variance == pytest.approx(1.25)
    assert stats.correlation == pytest.approx(0.8)


def test_trend_regression_needs_two_points():
    with pytest.raises(ValueError):
        trend_regression([1.0])


# ---------------------------------------------------------------------------
# session metrics
# ---------------------------------------------------------------------------


def test_final_in_hard_set_gives_both_finals(toy_game):
    final_turn = toy_game.rounds + 1
    agents = agents_for(toy_game, TurnKeyedAgent({final_turn: "<ANSWER>final A1, B1</ANSWER>"}))
    transcript = run_session(toy_game, agents, seed=1)
    m = session_metrics(transcript, toy_game)
    assert m.final_5way and m.final_6way
    assert not m.failed


def test_acceptable_final_not_hard(toy_game):
    final_turn = toy_game.rounds + 1
    agents = agents_for(toy_game, TurnKeyedAgent({final_turn: "<ANSWER>final A2, B2</ANSWER>"}))
    m = session_metrics(run_session(toy_game, agents, seed=1), toy_game)
    assert m.final_5way and not m.final_6way


def test_any_true_when_anchor_acceptable_but_final_missing(toy_game):
    # The toy anchor (1,1) is acceptable; the final answer carries no deal.
    final_turn = toy_game.rounds + 1
    agents = agents_for(
        toy_game, TurnKeyedAgent({final_turn: "<ANSWER>no consensus reached</ANSWER>"})
    )
    m = session_metrics(run_session(toy_game, agents, seed=1), toy_game)
    assert m.any_acceptable
    assert not m.final_5way and not m.final_6way


def test_any_ignores_other_parties_deals(toy_game):
    # (2,2) is acceptable but proposed by P2/P3 only; p1 never lands in the
    # acceptable set (anchor is (1,1)... which IS acceptable, so shift it).
    from dataclasses import replace

    shifted = replace(toy_game, initial_deal=deal(A=1, B=3))  # not acceptable
    final_turn = shifted.rounds + 1
    order_agents = {
        "P1": TurnKeyedAgent({final_turn: "<ANSWER>closing without a deal</ANSWER>"}),
        "P2": TurnKeyedAgent({}, default="<ANSWER>try A2, B2</ANSWER>"),
        "P3": TurnKeyedAgent({}, default="<ANSWER>try A2, B2</ANSWER>"),
    }
    m = session_metrics(run_session(shifted, order_agents, seed=3), shifted)
    assert not m.any_acceptable


def test_wrong_rate_counts_below_threshold_proposals(toy_game):
    # Every non-p1 turn proposes (1,3): worth 10 to P2 (<50) and 50 to P3
    # (>=40); p1 turns propose (1,2), worth 100 to P1.
    agents = {
        "P1": TurnKeyedAgent({}, default="<ANSWER>offer A1, B2</ANSWER>"),
        "P2": TurnKeyedAgent({}, default="<ANSWER>offer A1, B3</ANSWER>"),
        "P3": TurnKeyedAgent({}, default="<ANSWER>offer A1, B3</ANSWER>"),
    }
    transcript = run_session(toy_game, agents, seed=6)
    m = session_metrics(transcript, toy_game)
    speakers = [e.speaker for e in transcript.events if e.index >= 1]
    expected_wrong = speakers.count("P2")  # only P2 proposes below threshold
    assert m.n_proposals == len(speakers)
    assert m.n_wrong == expected_wrong
    assert m.wrong_rate == pytest.approx(expected_wrong / len(speakers))


def test_wrong_rate_zero_for_baseline_sessions(toy_game):
    for seed in range(10):
        transcript = run_session(toy_game, agents_for(toy_game, RandomSequenceAgent()), seed=seed)
        m = session_metrics(transcript, toy_game)
        assert m.wrong_rate == 0.0


def test_wrong_rate_ignores_prose_only_turns(toy_game):
    agents = agents_for(toy_game, TurnKeyedAgent({}, default="<ANSWER>just words</ANSWER>"))
    m = session_metrics(run_session(toy_game, agents, seed=2), toy_game)
    assert m.n_proposals == 0
    assert m.wrong_rate == 0.0


def test_leak_fields(toy_game):
    agents = agents_for(
        toy_game, TurnKeyedAgent({2: "<ANSWER>my <plan> leaks, deal A1, B1</ANSWER>"})
    )
    m = session_metrics(run_session(toy_game, agents, seed=4), toy_game)
    assert m.leaked
    assert m.n_leak_messages == 1
    assert m.n_messages == toy_game.rounds + 2


def test_failed_session_flag(toy_game):
    agents = agents_for(toy_game, TurnKeyedAgent({1: "<SCRATCHPAD>x</SCRATCHPAD>"}))
    m = session_metrics(run_session(toy_game, agents, seed=4), toy_game)
    assert m.failed
    assert not m.final_5way and not m.final_6way


def test_game_transcript_mismatch_rejected(toy_game, four_party_game):
    transcript = run_session(toy_game, agents_for(toy_game, TurnKeyedAgent({})), seed=1)
    with pytest.raises(GameValidationError):
        session_metrics(transcript, four_party_game)


def test_final_6way_implies_final_5way_over_random_runs(toy_game):
    rng = random.Random(99)
    for seed in range(30):
        agents = agents_for(toy_game, RandomSequenceAgent())
        m = session_metrics(run_session(toy_game, agents, seed=seed), toy_game)
        if m.final_6way:
            assert m.final_5way


# ---------------------------------------------------------------------------
# welfare series
# ---------------------------------------------------------------------------


def test_constant_series_for_repeated_deal(toy_game):
    agents = agents_for(toy_game, TurnKeyedAgent({}, default="<ANSWER>again A1, B1</ANSWER>"))
    transcript = run_session(toy_game, agents, seed=1)
    series = welfare_series(transcript, toy_game)
    usw_values = {p.usw for p in series.points}
    assert usw_values == {220}  # (70, 50, 100) summed


def test_two_turn_series_hand_computed(toy_game):
    final_turn = toy_game.rounds + 1
    agents = {
        "P1": TurnKeyedAgent(
            {final_turn: "<ANSWER>final A2, B2</ANSWER>"},
            default="<ANSWER>no deal in this message</ANSWER>",
        ),
        "P2": TurnKeyedAgent({}, default="<ANSWER>talk only</ANSWER>"),
        "P3": TurnKeyedAgent({}, default="<ANSWER>talk only</ANSWER>"),
    }
    transcript = run_session(toy_game, agents, seed=1)
    series = welfare_series(transcript, toy_game)
    # Exactly two deals: the anchor (1,1) and the final (2,2).
    assert [p.turn for p in series.points] == [0, toy_game.rounds + 1]
    anchor, final = series.points
    assert (anchor.usw, anchor.esw, anchor.nsw) == (220, 50, 350000)
    assert (final.usw, final.esw, final.nsw) == (165, 30, 135000)


def test_series_within_bounds(toy_game):
    agents = agents_for(toy_game, RandomSequenceAgent())
    for seed in range(10):
        transcript = run_session(toy_game, agents, seed=seed)
        series = welfare_series(transcript, toy_game)
        for point in series.points:
            assert series.bounds["usw"][0] <= point.usw <= series.bounds["usw"][1]
            assert series.bounds["esw"][0] <= point.esw <= series.bounds["esw"][1]
            assert series.bounds["nsw"][0] <= point.nsw <= series.bounds["nsw"][1]


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def _session(final5=False, final6=False, any_acc=False, failed=False, wrong=(0, 0), leaks=(0, 10)):
    return SessionMetrics(
        final_5way=final5,
        final_6way=final6,
        any_acceptable=any_acc,
        wrong_rate=wrong[0] / wrong[1] if wrong[1] else 0.0,
        n_wrong=wrong[0],
        n_proposals=wrong[1],
        leaked=leaks[0] > 0,
        n_leak_messages=leaks[0],
        n_messages=leaks[1],
        failed=failed,
        welfare=WelfareSeries(points=(), bounds={}),
    )


def test_eleven_of_twenty_is_55_percent():
    sessions = [_session(final5=i < 11) for i in range(20)]
    report = aggregate(sessions)
    assert report.final_5way_pct == pytest.approx(55.0)


def test_all_failed_batch_uses_na_markers():
    sessions = [_session(failed=True) for _ in range(5)]
    report = aggregate(sessions)
    assert report.final_5way_pct is None
    assert report.wrong_pct is None
    assert report.failed_pct == pytest.approx(100.0)
    assert report.n_failed == 5
    row = aggregate_csv_row(report, "x")
    assert "n/a" in row


def test_mixed_batch_hand_tallied():
    sessions = [
        _session(final5=True, final6=True, any_acc=True, wrong=(0, 10), leaks=(0, 12)),
        _session(final5=True, final6=False, any_acc=True, wrong=(2, 10), leaks=(1, 12)),
        _session(final5=False, final6=False, any_acc=False, wrong=(3, 5), leaks=(0, 6)),
        _session(failed=True),
    ]
    report = aggregate(sessions)
    assert report.n_sessions == 4
    assert report.n_failed == 1
    assert report.failed_pct == pytest.approx(25.0)
    assert report.final_5way_pct == pytest.approx(100 * 2 / 3)
    assert report.final_6way_pct == pytest.approx(100 * 1 / 3)
    assert report.any_pct == pytest.approx(100 * 2 / 3)
    assert report.wrong_pct == pytest.approx(100 * 5 / 25)  # pooled over proposals
    assert report.leaked_message_pct == pytest.approx(100 * 1 / 30)  # pooled over messages
    assert report.leaked_session_pct == pytest.approx(100 * 1 / 3)


def test_aggregate_permutation_invariant():
    rng = random.Random(7)
    sessions = [
        _session(
            final5=rng.random() < 0.5,
            final6=False,
            any_acc=rng.random() < 0.7,
            failed=rng.random() < 0.2,
            wrong=(rng.randint(0, 3), 10),
            leaks=(rng.randint(0, 2), 15),
        )
        for _ in range(30)
    ]
    shuffled = sessions[:]
    rng.shuffle(shuffled)
    assert aggregate(sessions) == aggregate(shuffled)


def test_aggregate_requires_sessions():
    with pytest.raises(ValueError):
        aggregate([])


def test_final_6way_never_exceeds_5way_in_aggregate(toy_game):
    agents_factory = lambda: agents_for(toy_game, RandomSequenceAgent())
    sessions = [
        session_metrics(run_session(toy_game, agents_factory(), seed=s), toy_game)
        for s in range(20)
    ]
    report = aggregate(sessions)
    assert report.final_6way_pct <= report.final_5way_pct
