"""Structured extraction from raw agent output, with lenient salvage rules.

Agents are instructed to wrap private reasoning in <SCRATCHPAD> tags,
forward-looking notes in <PLAN> tags, and the public message in <ANSWER>
tags. Real model output drifts from that format constantly, so extraction is
total and forgiving:

  tier 1  a balanced <ANSWER>...</ANSWER> block outside any private section
          wins, with no salvage flags;
  tier 2  an unclosed <ANSWER> salvages the text after it (up to the next
          private-section opening tag);
  tier 3  with no answer tags at all, the text after the last recognised
          private section is salvaged; with no private sections either, the
          whole raw text is.

Tiers 2 and 3 set the ``missing_answer_tags`` and ``salvaged`` flags. A
salvaged answer is always a contiguous substring of the raw input; nothing is
ever stitched together or fabricated. If no non-empty public answer can be
recovered the ``public_answer`` field is None, which terminates the session
upstream.

Leakage is structural: a public answer containing any private-section marker
(``<plan>``, ``</plan>``, ``<scratchpad>``, ``</scratchpad>``, by default) is
flagged leaked, one flag per marker found. Whether prose semantically reveals
scores is out of scope here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .game import Deal, Game

FLAG_MISSING_ANSWER_TAGS = "missing_answer_tags"
FLAG_SALVAGED = "salvaged"

DEFAULT_ILLEGAL_KEYWORDS = ("<plan>", "</plan>", "<scratchpad>", "</scratchpad>")

_SCRATCHPAD_RE = re.compile(r"<scratchpad>(.*?)</scratchpad>", re.IGNORECASE | re.DOTALL)
_PLAN_RE = re.compile(r"<plan>(.*?)</plan>", re.IGNORECASE | re.DOTALL)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.IGNORECASE | re.DOTALL)
_ANSWER_OPEN_RE = re.compile(r"<answer>", re.IGNORECASE)
_PRIVATE_OPEN_RE = re.compile(r"<scratchpad>|<plan>", re.IGNORECASE)


@dataclass
class AgentResponse:
    """Parsed agent output; failures are encoded in flags, never raised."""

    scratchpad: Optional[str] = None
    plan: Optional[str] = None
    public_answer: Optional[str] = None
    deal: Optional[Deal] = None
    format_flags: set[str] = field(default_factory=set)
    leaked: bool = False

    def leak_keywords(self) -> list[str]:
        prefix = "illegal_keyword:"
        return sorted(f[len(prefix):] for f in self.format_flags if f.startswith(prefix))


def parse_response(
    raw: str,
    *,
    strict: bool = False,
    illegal_keywords: Iterable[str] = DEFAULT_ILLEGAL_KEYWORDS,
) -> AgentResponse:
    """Extract scratchpad, plan, and public answer from raw agent text.

    Total on arbitrary input. ``strict`` disables the salvage tiers: only a
    balanced <ANSWER> block yields a public answer.
    """
    response = AgentResponse()
    raw = raw if isinstance(raw, str) else str(raw)

    # Private sections first; their spans are masked before answer search so
    # an <ANSWER> block nested inside a scratchpad never becomes public.
    private_spans: list[tuple[int, int]] = []
    scratchpads = list(_SCRATCHPAD_RE.finditer(raw))
    if scratchpads:
        response.scratchpad = scratchpads[0].group(1).strip() or None
        private_spans.extend(m.span() for m in scratchpads)
    plans = list(_PLAN_RE.finditer(raw))
    if plans:
        response.plan = plans[0].group(1).strip() or None
        private_spans.extend(m.span() for m in plans)

    masked = _mask_spans(raw, private_spans)

    answer = _ANSWER_RE.search(masked)
    if answer:
        public = raw[answer.start(1):answer.end(1)].strip()
        response.public_answer = public or None
    elif not strict:
        salvaged = _salvage(raw, masked, private_spans)
        if salvaged:
            response.public_answer = salvaged
            response.format_flags.update({FLAG_MISSING_ANSWER_TAGS, FLAG_SALVAGED})
        else:
            response.format_flags.add(FLAG_MISSING_ANSWER_TAGS)
    else:
        response.format_flags.add(FLAG_MISSING_ANSWER_TAGS)

    if response.public_answer:
        lowered = response.public_answer.lower()
        for keyword in illegal_keywords:
            if keyword.lower() in lowered:
                response.format_flags.add(f"illegal_keyword:{keyword.lower()}")
                response.leaked = True
    return response


def _mask_spans(raw: str, spans: list[tuple[int, int]]) -> str:
    if not spans:
        return raw
    chars = list(raw)
    for start, end in spans:
        for i in range(start, end):
            chars[i] = "\x00"
    return "".join(chars)


def _salvage(raw: str, masked: str, private_spans: list[tuple[int, int]]) -> Optional[str]:
    """Best contiguous public substring when answer tags are absent/unbalanced."""
    open_match = _ANSWER_OPEN_RE.search(masked)
    if open_match:
        start = open_match.end()
        nxt = _PRIVATE_OPEN_RE.search(masked, start)
        end = nxt.start() if nxt else len(raw)
        return raw[start:end].strip() or None
    if private_spans:
        tail_start = max(end for _, end in private_spans)
        return raw[tail_start:].strip() or None
    return raw.strip() or None


# ---------------------------------------------------------------------------
# Deal grammar
# ---------------------------------------------------------------------------
#
# Canonical form: "A1, B2, C3, D4, E5" -- issue id directly followed by a
# 1-based option number, separated by commas or whitespace, any order, any
# case. "A=1", "A:1", and bracketed lists are also accepted. See
# docs/deal-grammar.md for the full grammar shared with prompt templates.


def _deal_token_re(game: Game) -> re.Pattern:
    ids = sorted((issue.id for issue in game.issues), key=len, reverse=True)
    alt = "|".join(re.escape(i) for i in ids)
    return re.compile(
        rf"(?<![A-Za-z0-9])({alt})(?:(\d+)|\s*[=:]\s*(\d+))(?![0-9])",
        re.IGNORECASE,
    )


def parse_deal(text: Optional[str], game: Game) -> Optional[Deal]:
    """Extract a complete deal from free text, or None.

    None when any issue is missing, assigned conflicting values, or out of
    range. Repeating the same assignment is harmless.
    """
    if not text:
        return None
    issue_ids = {issue.id.upper(): issue.id for issue in game.issues}
    found: dict[str, int] = {}
    for match in _deal_token_re(game).finditer(text):
        iid = issue_ids[match.group(1).upper()]
        value = int(match.group(2) or match.group(3))
        if iid in found and found[iid] != value:
            return None
        found[iid] = value
    if set(found) != {issue.id for issue in game.issues}:
        return None
    for issue in game.issues:
        if not 1 <= found[issue.id] <= len(issue.options):
            return None
    return Deal.from_mapping(found)


def serialize_deal(deal: Deal) -> str:
    """Canonical text form, issues in id order; parse_deal inverts this."""
    return ", ".join(f"{iid}{opt}" for iid, opt in sorted(deal.assignment))
