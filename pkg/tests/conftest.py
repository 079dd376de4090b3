from __future__ import annotations

import random

import pytest

from scoregames.game import Deal, Game, Issue, Party

# ---------------------------------------------------------------------------
# Acceptance reporting: one pass/fail line per criterion in the summary.
# ---------------------------------------------------------------------------

_acceptance_outcomes: dict[str, tuple[str, str]] = {}


def _skip_reason(report) -> str:
    if isinstance(report.longrepr, tuple):
        return report.longrepr[2].removeprefix("Skipped: ")
    return ""


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.skipped:
        _acceptance_outcomes[name] = ("SKIP", _skip_reason(report))
    elif report.when == "call":
        _acceptance_outcomes[name] = ("PASS" if report.passed else "FAIL", "")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_acceptance_outcomes):
        status, reason = _acceptance_outcomes[name]
        suffix = f"  ({reason})" if reason else ""
        terminalreporter.write_line(f"{status:<5} {name}{suffix}")

# ---------------------------------------------------------------------------
# Hand-built toy games. Utilities for every deal of `toy_game` (A option, B
# option) -> (P1, P2, P3), worked out by hand from the weight tables below:
#
#   (1,1): 70, 50, 100      (2,1): 30, 100, 100
#   (1,2): 100, 25, 30      (2,2): 60, 75, 30
#   (1,3): 60, 10, 50       (2,3): 20, 60, 50
#
# With thresholds (60, 50, 40) and vetoes on P1/P2 that gives
#   acceptable = {(1,1), (2,2)}   hard-acceptable = {(1,1)}
# ---------------------------------------------------------------------------


def make_toy_game() -> Game:
    return Game(
        id="toy",
        issues=(
            Issue("A", "First issue", ("a1", "a2")),
            Issue("B", "Second issue", ("b1", "b2", "b3")),
        ),
        parties=(
            Party("P1", "Party one", veto=True, threshold=60),
            Party("P2", "Party two", veto=True, threshold=50),
            Party("P3", "Party three", veto=False, threshold=40),
        ),
        weights={
            "P1": {"A": (60, 20), "B": (10, 40, 0)},
            "P2": {"A": (0, 50), "B": (50, 25, 10)},
            "P3": {"A": (30, 30), "B": (70, 0, 20)},
        },
        initial_deal=Deal.from_mapping({"A": 1, "B": 1}),
        rounds=4,
    )


def make_four_party_game() -> Game:
    """Toy game plus a fourth party (P4, threshold 70); only (1,1) satisfies
    everyone, so restricting back to three parties must grow the sets."""
    base = make_toy_game()
    return Game(
        id="toy4",
        issues=base.issues,
        parties=base.parties + (Party("P4", "Party four", veto=False, threshold=70),),
        weights={**base.weights, "P4": {"A": (40, 10), "B": (60, 30, 0)}},
        initial_deal=base.initial_deal,
        rounds=4,
    )


@pytest.fixture
def toy_game() -> Game:
    return make_toy_game()


@pytest.fixture
def four_party_game() -> Game:
    return make_four_party_game()


@pytest.fixture
def sample_game() -> Game:
    from scoregames import load_sample_game

    return load_sample_game()


# ---------------------------------------------------------------------------
# Random small-game generator shared by property tests and oracles.
# ---------------------------------------------------------------------------


def random_game(rng: random.Random, max_deals: int = 200, game_id: str = "rand") -> Game:
    """A random valid game with <= max_deals deals and 3-6 parties."""
    while True:
        n_issues = rng.randint(2, 4)
        counts = [rng.randint(2, 4) for _ in range(n_issues)]
        total = 1
        for c in counts:
            total *= c
        if total <= max_deals:
            break
    issue_ids = [chr(ord("A") + i) for i in range(n_issues)]
    issues = tuple(
        Issue(iid, f"Issue {iid}", tuple(f"{iid.lower()}{k + 1}" for k in range(c)))
        for iid, c in zip(issue_ids, counts)
    )

    n_parties = rng.randint(3, 6)
    parties = tuple(
        Party(
            f"P{i + 1}",
            f"Party {i + 1}",
            veto=i < 2,
            threshold=rng.randint(0, 100),
        )
        for i in range(n_parties)
    )

    weights = {}
    for party in parties:
        # Split 100 points across issues, then put the issue budget on a
        # random option and scatter the rest (zeros allowed).
        cuts = sorted(rng.randint(0, 100) for _ in range(n_issues - 1))
        budgets = [b - a for a, b in zip([0] + cuts, cuts + [100])]
        rows = {}
        for issue, budget in zip(issues, budgets):
            row = [0] * len(issue.options)
            best = rng.randrange(len(issue.options))
            row[best] = budget
            for k in range(len(issue.options)):
                if k != best and budget > 0:
                    row[k] = rng.randint(0, budget)
            rows[issue.id] = tuple(row)
        weights[party.id] = rows

    initial = Deal.from_mapping(
        {issue.id: rng.randint(1, len(issue.options)) for issue in issues}
    )
    return Game(
        id=game_id,
        issues=issues,
        parties=parties,
        weights=weights,
        initial_deal=initial,
        rounds=rng.randint(1, 8),
    )
