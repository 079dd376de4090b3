from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from scoregames.dealspace import enumerate_deals
from scoregames.game import Deal
from scoregames.parsing import (
    AgentResponse,
    parse_deal,
    parse_response,
    serialize_deal,
)

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "responses"
FIXTURES = sorted(FIXTURE_DIR.glob("*.json"))


def load_case(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def test_corpus_is_large_enough():
    assert len(FIXTURES) >= 30


@pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
def test_fixture_corpus(path, sample_game):
    case = load_case(path)
    expected = case["expected"]
    response = parse_response(case["raw"])
    assert response.scratchpad == expected["scratchpad"]
    assert response.plan == expected["plan"]
    assert response.public_answer == expected["public_answer"]
    assert sorted(response.format_flags) == expected["flags"]
    assert response.leaked == expected["leaked"]
    deal = parse_deal(response.public_answer, sample_game)
    if expected["deal"] is None:
        assert deal is None
    else:
        assert deal == Deal.from_mapping(expected["deal"])


@pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
def test_fixture_leak_flags_track_plan_marker(path):
    case = load_case(path)
    response = parse_response(case["raw"])
    if response.public_answer and "<plan>" in response.public_answer.lower():
        assert response.leaked
    if response.public_answer and not any(
        kw in response.public_answer.lower()
        for kw in ("<plan>", "</plan>", "<scratchpad>", "</scratchpad>")
    ):
        assert not response.leaked


def test_salvaged_answer_is_contiguous_substring():
    for path in FIXTURES:
        case = load_case(path)
        response = parse_response(case["raw"])
        if response.public_answer is not None:
            assert response.public_answer in case["raw"]


# ---------------------------------------------------------------------------
# parse_response properties
# ---------------------------------------------------------------------------


def test_parse_response_total_on_random_bytes():
    rng = random.Random(31)
    for _ in range(2000):
        n = rng.randint(0, 80)
        raw = bytes(rng.getrandbits(8) for _ in range(n)).decode("latin-1")
        response = parse_response(raw)
        assert isinstance(response, AgentResponse)


def test_leak_is_monotone_in_content():
    base = parse_response("<ANSWER>a clean message</ANSWER>")
    assert not base.leaked
    spiked = parse_response("<ANSWER>a clean message with <PLAN> marker</ANSWER>")
    assert spiked.leaked
    assert "illegal_keyword:<plan>" in spiked.format_flags


def test_custom_illegal_keyword_list():
    response = parse_response(
        "<ANSWER>the word SECRET appears</ANSWER>", illegal_keywords=("secret",)
    )
    assert response.leaked
    assert response.format_flags == {"illegal_keyword:secret"}


def test_strict_mode_disables_salvage():
    lenient = parse_response("no tags but a clear message")
    strict = parse_response("no tags but a clear message", strict=True)
    assert lenient.public_answer == "no tags but a clear message"
    assert strict.public_answer is None
    assert "missing_answer_tags" in strict.format_flags
    # Balanced answers still work in strict mode.
    ok = parse_response("<ANSWER>hello</ANSWER>", strict=True)
    assert ok.public_answer == "hello"


# ---------------------------------------------------------------------------
# deal grammar
# ---------------------------------------------------------------------------


def test_round_trip_over_full_sample_space(sample_game):
    for deal in enumerate_deals(sample_game):
        assert parse_deal(serialize_deal(deal), sample_game) == deal


def test_round_trip_lowercased(sample_game):
    for deal in enumerate_deals(sample_game):
        assert parse_deal(serialize_deal(deal).lower(), sample_game) == deal


def test_round_trip_shuffled_tokens(sample_game):
    rng = random.Random(32)
    deals = list(enumerate_deals(sample_game))
    for deal in rng.sample(deals, 60):
        tokens = serialize_deal(deal).split(", ")
        rng.shuffle(tokens)
        text = " ".join(tokens)
        assert parse_deal(text, sample_game) == deal


def test_serialize_deal_canonical_form():
    deal = Deal.from_mapping({"B": 2, "A": 1, "E": 5, "C": 3, "D": 4})
    assert serialize_deal(deal) == "A1, B2, C3, D4, E5"


def test_parse_deal_accepts_view_objects(sample_game):
    view = sample_game.view_for("DEV")
    assert parse_deal("A1, B2, C3, D4, E5", view) == Deal.from_mapping(
        {"A": 1, "B": 2, "C": 3, "D": 4, "E": 5}
    )


def test_parse_deal_rejects_incomplete_and_invalid(sample_game):
    assert parse_deal("A1, B2, C3, D4", sample_game) is None
    assert parse_deal("", sample_game) is None
    assert parse_deal(None, sample_game) is None
    assert parse_deal("A1, B2, C3, D4, E6", sample_game) is None
