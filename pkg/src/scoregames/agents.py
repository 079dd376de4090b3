"""Negotiating agents and the prompt machinery they share.

Four agent families:

* RandomSequenceAgent -- the rule-based baseline. It takes the most recent
  deal on the table and flips issues to its own best option, visiting issues
  in a uniformly random order, stopping as soon as its own threshold is met.
* PriorityAgent -- the same improvement rule, but issues are visited from the
  party's highest-stakes issue downward, deterministically.
* ScriptedAgent -- replays canned texts; the workhorse for tests and offline
  pipeline verification.
* ChatAgent -- builds a full role prompt and queries any chat-completion
  endpoint through ChatClient (with retries, backoff, rate limiting, and a
  dry-run mode that never touches the network).

All agents emit the same tagged text format, so the parsing path downstream
is identical regardless of who produced a message.
"""

from __future__ import annotations

import itertools
import logging
import random
import string
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Mapping, Optional, Sequence

import requests

from .game import Deal, Issue, PartyView
from .parsing import parse_deal, serialize_deal

logger = logging.getLogger(__name__)

History = Sequence[tuple[str, str]]  # (speaker party id, public answer)


# ---------------------------------------------------------------------------
# Prompt configuration: ablation flags and behaviour incentives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AblationConfig:
    """Which chain-of-thought fragments the prompt includes.

    All four enabled is the unablated configuration; there are 16 distinct
    combinations in total.
    """

    prev_deals: bool = True
    others_prefer: bool = True
    candidates: bool = True
    planning: bool = True

    @classmethod
    def grid(cls) -> tuple["AblationConfig", ...]:
        """All 16 configurations, fully enabled first, fully ablated last."""
        return tuple(
            cls(*flags) for flags in itertools.product((True, False), repeat=4)
        )

    @classmethod
    def from_string(cls, text: str) -> "AblationConfig":
        """Parse 'all', 'none', a 4-bit mask like '1011', or a comma list."""
        text = text.strip().lower()
        if text in ("all", ""):
            return cls()
        if text == "none":
            return cls(False, False, False, False)
        if len(text) == 4 and set(text) <= {"0", "1"}:
            bits = [c == "1" for c in text]
            return cls(*bits)
        names = {n.strip() for n in text.split(",") if n.strip()}
        valid = {"prev_deals", "others_prefer", "candidates", "planning"}
        unknown = names - valid
        if unknown:
            raise ValueError(f"unknown ablation flags {sorted(unknown)}; valid: {sorted(valid)}")
        return cls(**{name: name in names for name in valid})

    def mask(self) -> str:
        return "".join(
            "1" if flag else "0"
            for flag in (self.prev_deals, self.others_prefer, self.candidates, self.planning)
        )


class IncentiveKind(str, Enum):
    COOPERATIVE = "cooperative"
    GREEDY = "greedy"
    ADVERSARIAL_UNTARGETED = "adversarial_untargeted"
    ADVERSARIAL_TARGETED = "adversarial_targeted"


@dataclass(frozen=True)
class Incentive:
    """Behaviour regime prompted to an agent; target only for the targeted kind."""

    kind: IncentiveKind = IncentiveKind.COOPERATIVE
    target: Optional[str] = None

    def __post_init__(self):
        if self.kind is IncentiveKind.ADVERSARIAL_TARGETED and not self.target:
            raise ValueError("targeted adversarial incentive requires a target party")
        if self.kind is not IncentiveKind.ADVERSARIAL_TARGETED and self.target:
            raise ValueError(f"incentive kind {self.kind.value} takes no target")


_ABLATION_TEMPLATES = {
    "prev_deals": "ablation_prev_deals.txt",
    "others_prefer": "ablation_others_prefer.txt",
    "candidates": "ablation_candidates.txt",
    "planning": "ablation_planning.txt",
}

_INCENTIVE_TEMPLATES = {
    IncentiveKind.COOPERATIVE: "incentive_cooperative.txt",
    IncentiveKind.GREEDY: "incentive_greedy.txt",
    IncentiveKind.ADVERSARIAL_UNTARGETED: "incentive_adversarial_untargeted.txt",
    IncentiveKind.ADVERSARIAL_TARGETED: "incentive_adversarial_targeted.txt",
}


def load_template(name: str) -> str:
    """Read a prompt template shipped with the package."""
    return (
        resources.files("scoregames").joinpath("templates", name).read_text(encoding="utf-8").strip()
    )


def ablation_fragments(ablation: AblationConfig) -> list[str]:
    """The enabled chain-of-thought fragments, in canonical order."""
    fragments = []
    for flag_name, template in _ABLATION_TEMPLATES.items():
        if getattr(ablation, flag_name):
            fragments.append(load_template(template))
    return fragments


def incentive_fragment(incentive: Incentive, party_labels: Mapping[str, str]) -> str:
    text = load_template(_INCENTIVE_TEMPLATES[incentive.kind])
    if incentive.target is not None:
        target_name = party_labels.get(incentive.target, incentive.target)
        text = string.Template(text).safe_substitute(target_name=target_name)
    return text


def build_prompt(
    view: PartyView,
    incentive: Incentive,
    ablation: AblationConfig,
    history: History,
    turn: Optional[int] = None,
) -> str:
    """Compose the full prompt for one party's speaking turn.

    Contains only that party's private information; the other parties appear
    by display name alone.
    """
    party = view.party
    lines: list[str] = []
    if view.setting_text:
        lines += [view.setting_text, ""]
    lines.append(f"You are {party.name}.")
    if party.role_text:
        lines.append(party.role_text)
    lines.append("")

    lines.append("Your confidential score sheet (keep it secret):")
    for issue in view.issues:
        lines.append(f"Issue {issue.id} ({issue.name}):")
        for k, option in enumerate(issue.options, start=1):
            lines.append(f"  {issue.id}{k} ({option}): {view.weights[issue.id][k - 1]} points")
    lines += [
        "",
        "A deal assigns exactly one option to every issue. Your score for a deal is "
        "the sum of your points for the chosen options; the best possible deal is "
        f"worth 100 points. A deal is acceptable to you only if it scores at least "
        f"{party.threshold} points.",
        "",
        "The parties at the table: " + ", ".join(view.party_labels.values()) + ".",
        "",
        "Response format, to follow exactly:",
        "- Think privately between <SCRATCHPAD> and </SCRATCHPAD>.",
        "- Then put the message the other parties will see between <ANSWER> and </ANSWER>.",
        '- When you propose a deal, spell it out in full, in the form "A1, B2, C3, D4, E5".',
        "- Never reveal your numeric scores or your threshold to the other parties, in any form.",
        "",
        incentive_fragment(incentive, view.party_labels),
    ]
    for fragment in ablation_fragments(ablation):
        lines += ["", fragment]

    lines.append("")
    if history:
        lines.append("Public messages so far:")
        for speaker, text in history:
            lines.append(f"[{view.party_labels.get(speaker, speaker)}]: {text}")
    else:
        lines.append("No public messages yet; you open the discussion.")

    lines.append("")
    if turn is not None and turn > view.rounds:
        lines.append(
            "This is the final proposal. State the single final deal in your answer."
        )
    else:
        lines.append("It is now your turn to speak.")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Agent interface and rule-based baselines
# ---------------------------------------------------------------------------


class Agent(ABC):
    """Produces one raw response text per speaking turn.

    Agents are stateless between turns: everything they know arrives through
    the view and the visible history.
    """

    @abstractmethod
    def respond(
        self, view: PartyView, history: History, turn: int, rng: random.Random
    ) -> str:
        ...


class ScriptedAgent(Agent):
    """Replays a fixed sequence of texts, one per call; repeats the last one
    if called more often than scripted."""

    def __init__(self, texts: Sequence[str]):
        if not texts:
            raise ValueError("ScriptedAgent needs at least one text")
        self._texts = list(texts)
        self._cursor = 0

    def respond(self, view, history, turn, rng) -> str:
        text = self._texts[min(self._cursor, len(self._texts) - 1)]
        self._cursor += 1
        return text


def _best_option(weights_row: Sequence[int]) -> int:
    """1-based index of the highest weight; ties go to the lowest index."""
    best = max(weights_row)
    return weights_row.index(best) + 1


def _improve(
    view: PartyView, previous: Deal, issue_order: Sequence[Issue]
) -> tuple[Deal, list[str]]:
    """Shared improvement loop: jump each visited issue to the party's best
    option until the threshold is reached or every issue was visited."""
    threshold = view.party.threshold
    deal = previous
    visited: list[str] = []
    if view.utility(deal) >= threshold:
        return deal, visited
    for issue in issue_order:
        deal = deal.replace_option(issue.id, _best_option(view.weights[issue.id]))
        visited.append(issue.id)
        if view.utility(deal) >= threshold:
            break
    return deal, visited


def baseline_propose(view: PartyView, previous: Deal, rng: random.Random) -> Deal:
    """Random-sequence baseline step: non-decreasing own utility, stops at the
    threshold, and reaches the party's 100-point deal when exhausted."""
    order = list(view.issues)
    rng.shuffle(order)
    deal, _ = _improve(view, previous, order)
    return deal


def baseline_priority_propose(view: PartyView, previous: Deal) -> Deal:
    """Priority-ordered variant: issues visited by descending own max weight,
    ties broken by issue id; fully deterministic."""
    order = sorted(
        view.issues, key=lambda issue: (-max(view.weights[issue.id]), issue.id)
    )
    deal, _ = _improve(view, previous, order)
    return deal


class _RuleBasedAgent(Agent):
    """Common plumbing: find the deal currently on the table, improve it, and
    wrap the result in the shared tag format."""

    def _previous_deal(self, view: PartyView, history: History) -> Deal:
        for _, text in reversed(history):
            deal = parse_deal(text, view)
            if deal is not None:
                return deal
        # No deal visible (prose-only history); fall back to own best deal.
        return Deal.from_mapping(
            {issue.id: _best_option(view.weights[issue.id]) for issue in view.issues}
        )

    def _propose(self, view: PartyView, previous: Deal, rng: random.Random) -> Deal:
        raise NotImplementedError

    def respond(self, view, history, turn, rng) -> str:
        previous = self._previous_deal(view, history)
        proposal = self._propose(view, previous, rng)
        score = view.utility(proposal)
        scratchpad = (
            f"On the table: {serialize_deal(previous)} (worth {view.utility(previous)} to me). "
            f"My proposal {serialize_deal(proposal)} is worth {score}, "
            f"threshold {view.party.threshold}."
        )
        return (
            f"<SCRATCHPAD>{scratchpad}</SCRATCHPAD>\n"
            f"<ANSWER>I propose the deal {serialize_deal(proposal)}.</ANSWER>"
        )


class RandomSequenceAgent(_RuleBasedAgent):
    def _propose(self, view, previous, rng):
        return baseline_propose(view, previous, rng)


class PriorityAgent(_RuleBasedAgent):
    def _propose(self, view, previous, rng):
        return baseline_priority_propose(view, previous)


# ---------------------------------------------------------------------------
# Chat-completion endpoint client
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.0
    max_tokens: int = 1024


class TransportError(RuntimeError):
    """Endpoint kept failing after the whole retry budget."""

    def __init__(self, message: str, *, attempts: int, last_status: Optional[int] = None):
        super().__init__(message)
        self.attempts = attempts
        self.last_status = last_status


DRY_RUN_TEXT = "<ANSWER>[dry run] No model was called; this is a placeholder message.</ANSWER>"


class ChatClient:
    """Minimal chat-completions client with retries and a shared rate limiter.

    Understands the common POST {base_url}/chat/completions wire format.
    Retries 429s (honouring Retry-After), 5xx responses, and transport
    exceptions with exponential backoff; other 4xx responses fail fast. With
    ``dry_run`` the client performs zero network calls, logs every prompt,
    and returns a fixed placeholder.
    """

    def __init__(
        self,
        base_url: str = "",
        model: str = "",
        *,
        api_key: Optional[str] = None,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        max_concurrency: int = 4,
        min_interval: float = 0.0,
        dry_run: bool = False,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.min_interval = min_interval
        self.dry_run = dry_run
        self.request_count = 0
        self.retry_count = 0
        self.last_retries = 0
        self.prompt_log: list[str] = []
        self._session = requests.Session()
        self._gate = threading.Semaphore(max_concurrency)
        self._pace_lock = threading.Lock()
        self._last_request_at = 0.0

    def complete(self, prompt: str, params: SamplingParams = SamplingParams()) -> str:
        if self.dry_run:
            self.prompt_log.append(prompt)
            logger.info("dry-run prompt (%d chars):\n%s", len(prompt), prompt)
            self.last_retries = 0
            return DRY_RUN_TEXT

        url = f"{self.base_url}/chat/completions"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        retries = 0
        last_status: Optional[int] = None
        while True:
            self._pace()
            try:
                with self._gate:
                    self.request_count += 1
                    resp = self._session.post(
                        url, json=payload, headers=headers, timeout=self.timeout
                    )
            except requests.RequestException as exc:
                if retries >= self.max_retries:
                    self.last_retries = retries
                    raise TransportError(
                        f"transport failure after {retries} retries: {exc}",
                        attempts=retries + 1,
                    ) from exc
                self._backoff(retries, None)
                retries += 1
                self.retry_count += 1
                continue

            last_status = resp.status_code
            if resp.status_code == 200:
                self.last_retries = retries
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            if resp.status_code == 429 or resp.status_code >= 500:
                if retries >= self.max_retries:
                    self.last_retries = retries
                    raise TransportError(
                        f"HTTP {resp.status_code} after {retries} retries",
                        attempts=retries + 1,
                        last_status=resp.status_code,
                    )
                self._backoff(retries, resp.headers.get("Retry-After"))
                retries += 1
                self.retry_count += 1
                continue
            self.last_retries = retries
            raise TransportError(
                f"HTTP {resp.status_code}: {resp.text[:200]}",
                attempts=retries + 1,
                last_status=resp.status_code,
            )

    def _pace(self):
        if self.min_interval <= 0:
            return
        with self._pace_lock:
            wait = self._last_request_at + self.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request_at = time.monotonic()

    def _backoff(self, retries: int, retry_after: Optional[str]):
        delay = self.backoff_base * (2**retries)
        if retry_after is not None:
            try:
                delay = max(float(retry_after), 0.0)
            except ValueError:
                pass
        if delay > 0:
            time.sleep(delay)


class ChatAgent(Agent):
    """Wraps a chat endpoint behind the Agent interface."""

    def __init__(
        self,
        client: ChatClient,
        incentive: Incentive = Incentive(),
        ablation: AblationConfig = AblationConfig(),
        sampling: SamplingParams = SamplingParams(),
    ):
        self.client = client
        self.incentive = incentive
        self.ablation = ablation
        self.sampling = sampling

    def respond(self, view, history, turn, rng) -> str:
        prompt = build_prompt(view, self.incentive, self.ablation, history, turn=turn)
        return self.client.complete(prompt, self.sampling)
