"""Round-based negotiation sessions.

One session runs R + 2 turns: turn 0 is the game's fixed opening deal,
attributed to p1 without calling its agent so every session shares the same
anchor; turns 1..R follow a seeded randomized speaker order; turn R + 1 is
p1's final proposal.

Two correctness rules are deliberately strict here:

* If any turn yields no salvageable public answer, the session terminates
  immediately as failed and is excluded from rate denominators downstream.
* The final deal comes from turn R + 1 alone. If the final answer parses but
  contains no valid deal, the session completed with no agreement; an earlier
  deal is never substituted.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .agents import Agent, TransportError
from .game import Deal, Game
from .parsing import AgentResponse, parse_deal, parse_response, serialize_deal

TERMINATION_COMPLETED = "completed"
TERMINATION_NO_PUBLIC_ANSWER = "failed_no_public_answer"
TERMINATION_TRANSPORT = "failed_transport"


@dataclass
class TurnEvent:
    """One speaking turn: raw text plus everything parsed out of it.

    ``timestamp`` is wall-clock and in-memory only; persisted transcripts
    omit it so identical runs serialize to identical bytes.
    """

    index: int
    speaker: str
    raw_text: str
    response: AgentResponse
    proposed_deal: Optional[Deal]
    timestamp: float = field(default_factory=time.time, compare=False)


@dataclass
class Transcript:
    """Ordered record of one session."""

    game_id: str
    seed: int
    events: list[TurnEvent]
    termination: str
    final_deal: Optional[Deal]
    leak_events: list[tuple[int, str]]
    parser_mode: str = "lenient"

    @property
    def failed(self) -> bool:
        return self.termination != TERMINATION_COMPLETED


def build_turn_order(game: Game, seed) -> list[str]:
    """Speaker ids for turns 1..R.

    Built from ceil(R/N) independently shuffled permutations of all parties,
    truncated to R, so speaking counts stay within one of each other. A block
    is reshuffled if it would make a party speak twice in a row across the
    boundary. Deterministic for a fixed seed.
    """
    rng = random.Random(f"{seed}:turn-order")
    ids = [p.id for p in game.parties]
    order: list[str] = []
    for _ in range(math.ceil(game.rounds / len(ids))):
        block = ids[:]
        rng.shuffle(block)
        while order and block[0] == order[-1]:
            rng.shuffle(block)
        order.extend(block)
    return order[: game.rounds]


def _anchor_text(deal: Deal) -> str:
    return (
        "<ANSWER>As a starting point for this negotiation, the deal on the table is "
        f"{serialize_deal(deal)}. Improvements are welcome.</ANSWER>"
    )


def visible_history(
    transcript_or_events, upto: Optional[int] = None
) -> list[tuple[str, str]]:
    """Public answers only, ordered by turn; private sections never appear.

    ``upto`` bounds the turn index (exclusive); None means the whole record.
    """
    events = getattr(transcript_or_events, "events", transcript_or_events)
    out = []
    for event in events:
        if upto is not None and event.index >= upto:
            break
        if event.response.public_answer is not None:
            out.append((event.speaker, event.response.public_answer))
    return out


def run_session(
    game: Game,
    agents: Mapping[str, Agent],
    seed: int,
    *,
    history_window: Optional[int] = None,
    strict: bool = False,
    session_timeout: Optional[float] = None,
) -> Transcript:
    """Execute one full negotiation session.

    ``history_window`` limits how many recent public answers agents see
    (None = unlimited). ``strict`` disables lenient answer salvage.
    ``session_timeout`` is a wall-clock guard against hung endpoints; when it
    trips, the session is marked as a transport failure.
    """
    missing = {p.id for p in game.parties} - set(agents)
    extra = set(agents) - {p.id for p in game.parties}
    if missing or extra:
        raise ValueError(f"agents must cover parties exactly; missing={sorted(missing)} extra={sorted(extra)}")

    started = time.monotonic()
    events: list[TurnEvent] = []
    leak_events: list[tuple[int, str]] = []
    parser_mode = "strict" if strict else "lenient"

    def record(index: int, speaker: str, raw: str) -> TurnEvent:
        response = parse_response(raw, strict=strict)
        deal = parse_deal(response.public_answer, game)
        event = TurnEvent(
            index=index, speaker=speaker, raw_text=raw, response=response, proposed_deal=deal
        )
        events.append(event)
        for keyword in response.leak_keywords():
            leak_events.append((index, keyword))
        return event

    def history_for_agents() -> list[tuple[str, str]]:
        h = visible_history(events)
        if history_window is not None:
            h = h[-history_window:]
        return h

    def finished(termination: str, final_deal: Optional[Deal] = None) -> Transcript:
        return Transcript(
            game_id=game.id,
            seed=seed,
            events=events,
            termination=termination,
            final_deal=final_deal,
            leak_events=leak_events,
            parser_mode=parser_mode,
        )

    # Turn 0: the shared anchor deal, attributed to p1.
    event = record(0, game.p1.id, _anchor_text(game.initial_deal))
    if event.response.public_answer is None:  # cannot happen with a valid game
        return finished(TERMINATION_NO_PUBLIC_ANSWER)

    order = build_turn_order(game, seed)
    for t, speaker in enumerate(order, start=1):
        if session_timeout is not None and time.monotonic() - started > session_timeout:
            return finished(TERMINATION_TRANSPORT)
        rng = random.Random(f"{seed}:turn:{t}")
        try:
            raw = agents[speaker].respond(game.view_for(speaker), history_for_agents(), t, rng)
        except TransportError:
            return finished(TERMINATION_TRANSPORT)
        event = record(t, speaker, raw)
        if event.response.public_answer is None:
            return finished(TERMINATION_NO_PUBLIC_ANSWER)

    final_turn = game.rounds + 1
    if session_timeout is not None and time.monotonic() - started > session_timeout:
        return finished(TERMINATION_TRANSPORT)
    rng = random.Random(f"{seed}:turn:{final_turn}")
    try:
        raw = agents[game.p1.id].respond(
            game.view_for(game.p1.id), history_for_agents(), final_turn, rng
        )
    except TransportError:
        return finished(TERMINATION_TRANSPORT)
    event = record(final_turn, game.p1.id, raw)
    if event.response.public_answer is None:
        return finished(TERMINATION_NO_PUBLIC_ANSWER)
    # Final deal comes from this turn only; never back-filled from earlier turns.
    return finished(TERMINATION_COMPLETED, final_deal=event.proposed_deal)


# ---------------------------------------------------------------------------
# Transcript persistence (one JSON file per session, deterministic bytes)
# ---------------------------------------------------------------------------


def transcript_to_dict(transcript: Transcript) -> dict:
    return {
        "game_id": transcript.game_id,
        "seed": transcript.seed,
        "parser_mode": transcript.parser_mode,
        "termination": transcript.termination,
        "final_deal": transcript.final_deal.to_dict() if transcript.final_deal else None,
        "leak_events": [[t, kw] for t, kw in transcript.leak_events],
        "turns": [
            {
                "index": ev.index,
                "speaker": ev.speaker,
                "raw": ev.raw_text,
                "public": ev.response.public_answer,
                "deal": ev.proposed_deal.to_dict() if ev.proposed_deal else None,
                "flags": sorted(ev.response.format_flags),
            }
            for ev in transcript.events
        ],
    }


def save_transcript(transcript: Transcript, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(transcript_to_dict(transcript), indent=2, ensure_ascii=False, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )


def transcript_from_dict(data: Mapping, game: Game) -> Transcript:
    """Rebuild a transcript from its persisted form.

    Raw texts are re-parsed with the recorded parser mode, so private
    sections and flags are restored exactly.
    """
    strict = data.get("parser_mode") == "strict"
    events = []
    for turn in data["turns"]:
        response = parse_response(turn["raw"], strict=strict)
        deal = Deal.from_mapping(turn["deal"]) if turn.get("deal") else None
        events.append(
            TurnEvent(
                index=turn["index"],
                speaker=turn["speaker"],
                raw_text=turn["raw"],
                response=response,
                proposed_deal=deal,
                timestamp=0.0,
            )
        )
    final = Deal.from_mapping(data["final_deal"]) if data.get("final_deal") else None
    return Transcript(
        game_id=data["game_id"],
        seed=data["seed"],
        events=events,
        termination=data["termination"],
        final_deal=final,
        leak_events=[(int(t), kw) for t, kw in data.get("leak_events", [])],
        parser_mode=data.get("parser_mode", "lenient"),
    )


def load_transcript(path: str | Path, game: Game) -> Transcript:
    return transcript_from_dict(json.loads(Path(path).read_text(encoding="utf-8")), game)
