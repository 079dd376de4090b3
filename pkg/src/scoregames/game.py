"""Static game model: issues, parties, score functions, and acceptance rules.

A game is a multi-issue negotiation among N parties. Every party holds a
private integer weight table over the sub-options of each issue and a private
threshold; a deal assigns exactly one sub-option to every issue. Per-party
weight tables are normalised so that the best possible deal scores exactly
100, which makes thresholds directly comparable across parties.

The first two parties hold veto power: no deal counts as acceptable unless
both of them reach their thresholds. Beyond the vetoes, a deal is acceptable
when at most one party falls short, and hard-acceptable when nobody does.
Comparisons are always >= (reaching the threshold exactly is enough), and the
first party receives no special relaxation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class GameValidationError(ValueError):
    """Raised when a game definition or config violates an invariant.

    ``diagnostics`` holds one human-readable message per violation, each
    prefixed with the config field path it refers to.
    """

    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass(frozen=True)
class Issue:
    """One negotiated dimension with an ordered list of sub-options."""

    id: str
    name: str
    options: tuple[str, ...]

    def __post_init__(self):
        if len(self.options) < 2:
            raise GameValidationError([f"issue {self.id}: needs at least 2 options"])


@dataclass(frozen=True)
class Party:
    """A negotiating party with its private threshold and prompt role text."""

    id: str
    name: str
    veto: bool
    threshold: int
    role_text: str = ""

    def __post_init__(self):
        if not 0 <= self.threshold <= 100:
            raise GameValidationError(
                [f"party {self.id}: threshold {self.threshold} outside [0, 100]"]
            )


@dataclass(frozen=True, order=True)
class Deal:
    """A complete assignment of one sub-option to every issue.

    Options are identified by 1-based numbers, matching the textual form
    ``A1, B2, ...`` used in negotiation messages and config files.
    """

    assignment: tuple[tuple[str, int], ...]

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, int]) -> "Deal":
        return cls(tuple(sorted((str(k), int(v)) for k, v in mapping.items())))

    def to_dict(self) -> dict[str, int]:
        return dict(self.assignment)

    def __getitem__(self, issue_id: str) -> int:
        for iid, opt in self.assignment:
            if iid == issue_id:
                return opt
        raise KeyError(issue_id)

    def replace_option(self, issue_id: str, option: int) -> "Deal":
        return Deal(
            tuple((iid, option if iid == issue_id else opt) for iid, opt in self.assignment)
        )


@dataclass(frozen=True)
class PartyView:
    """Everything one party is allowed to see about the game.

    Deliberately excludes every other party's weights and thresholds; agents
    are constructed from views only, so a leak of private data would have to
    come from the negotiation text itself.
    """

    party: Party
    issues: tuple[Issue, ...]
    weights: Mapping[str, tuple[int, ...]]
    setting_text: str
    rounds: int
    party_labels: Mapping[str, str]
    p1_id: str

    @property
    def is_p1(self) -> bool:
        return self.party.id == self.p1_id

    def utility(self, deal: Deal) -> int:
        return sum(self.weights[iid][opt - 1] for iid, opt in deal.assignment)


@dataclass(frozen=True)
class Game:
    """Immutable negotiation specification.

    ``parties`` order is authoritative: the first entry is p1 (initial and
    final proposer), the second is p2; both must carry the veto flag.
    ``weights[party_id][issue_id]`` is the per-option weight row for that
    issue, aligned with ``Issue.options``. ``party_groups`` names optional
    sets of parties (e.g. the p1-aligned and p1-neutral groups used in
    behaviour experiments); groups are config data, not rules.
    """

    id: str
    issues: tuple[Issue, ...]
    parties: tuple[Party, ...]
    weights: Mapping[str, Mapping[str, tuple[int, ...]]]
    initial_deal: Deal
    rounds: int = 24
    setting_text: str = ""
    party_groups: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        diagnostics = validate_game_data(
            self.issues, self.parties, self.weights, self.initial_deal, self.rounds
        )
        party_ids = {p.id for p in self.parties}
        for group, members in self.party_groups.items():
            unknown = set(members) - party_ids
            if unknown:
                diagnostics.append(
                    f"party_groups.{group}: unknown parties {sorted(unknown)}"
                )
        if diagnostics:
            raise GameValidationError(diagnostics)

    # -- structure helpers -------------------------------------------------

    @property
    def p1(self) -> Party:
        return self.parties[0]

    @property
    def p2(self) -> Party:
        return self.parties[1]

    @property
    def n_parties(self) -> int:
        return len(self.parties)

    def party(self, party_id: str) -> Party:
        for p in self.parties:
            if p.id == party_id:
                return p
        raise GameValidationError([f"unknown party {party_id!r}"])

    def issue(self, issue_id: str) -> Issue:
        for issue in self.issues:
            if issue.id == issue_id:
                return issue
        raise GameValidationError([f"unknown issue {issue_id!r}"])

    def validate_deal(self, deal: Deal) -> None:
        expected = {i.id for i in self.issues}
        got = {iid for iid, _ in deal.assignment}
        if got != expected:
            raise GameValidationError(
                [f"deal covers issues {sorted(got)}, game has {sorted(expected)}"]
            )
        for iid, opt in deal.assignment:
            n = len(self.issue(iid).options)
            if not 1 <= opt <= n:
                raise GameValidationError(
                    [f"deal option {iid}{opt} out of range 1..{n}"]
                )

    def view_for(self, party_id: str) -> PartyView:
        party = self.party(party_id)
        return PartyView(
            party=party,
            issues=self.issues,
            weights={iid: tuple(row) for iid, row in self.weights[party_id].items()},
            setting_text=self.setting_text,
            rounds=self.rounds,
            party_labels={p.id: p.name for p in self.parties},
            p1_id=self.p1.id,
        )


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------


def utility(game: Game, party_id: str, deal: Deal) -> int:
    """Score of ``deal`` for one party: the sum of its chosen-option weights."""
    game.party(party_id)
    game.validate_deal(deal)
    rows = game.weights[party_id]
    return sum(rows[iid][opt - 1] for iid, opt in deal.assignment)


def is_acceptable(game: Game, deal: Deal) -> bool:
    """Whether a deal clears both vetoes with at most one party short.

    All comparisons are >=; a party exactly at its threshold accepts.
    """
    game.validate_deal(deal)
    below = 0
    for party in game.parties:
        u = sum(game.weights[party.id][iid][opt - 1] for iid, opt in deal.assignment)
        if u < party.threshold:
            if party.veto:
                return False
            below += 1
    return below <= 1


def is_hard_acceptable(game: Game, deal: Deal) -> bool:
    """Whether every party reaches its threshold on ``deal``."""
    game.validate_deal(deal)
    for party in game.parties:
        u = sum(game.weights[party.id][iid][opt - 1] for iid, opt in deal.assignment)
        if u < party.threshold:
            return False
    return True


def scale_thresholds(game: Game, delta: int) -> Game:
    """New game with every threshold shifted by ``delta``, clamped to [0, 100].

    No party is treated specially: p1's threshold moves exactly like the rest.
    """
    parties = tuple(
        replace(p, threshold=max(0, min(100, p.threshold + delta))) for p in game.parties
    )
    return replace(game, parties=parties)


def restrict_players(game: Game, keep: Iterable[str]) -> Game:
    """New game restricted to ``keep``, preserving party order.

    Both veto parties must be kept and at least three parties must remain;
    the at-most-one-below acceptance rule carries over unchanged in form.
    """
    keep_set = set(keep)
    unknown = keep_set - {p.id for p in game.parties}
    if unknown:
        raise GameValidationError([f"restrict_players: unknown parties {sorted(unknown)}"])
    for veto_party in (game.p1, game.p2):
        if veto_party.id not in keep_set:
            raise GameValidationError(
                [f"restrict_players: cannot drop veto party {veto_party.id}"]
            )
    parties = tuple(p for p in game.parties if p.id in keep_set)
    if len(parties) < 3:
        raise GameValidationError(
            [f"restrict_players: {len(parties)} parties remain, need at least 3"]
        )
    weights = {p.id: game.weights[p.id] for p in parties}
    groups = {
        name: tuple(pid for pid in members if pid in keep_set)
        for name, members in game.party_groups.items()
    }
    return replace(game, parties=parties, weights=weights, party_groups=groups)


# ---------------------------------------------------------------------------
# Validation and JSON config I/O
# ---------------------------------------------------------------------------


def validate_game_data(
    issues: Sequence[Issue],
    parties: Sequence[Party],
    weights: Mapping[str, Mapping[str, Sequence[int]]],
    initial_deal: Deal | None,
    rounds: int,
) -> list[str]:
    """Structural and invariant checks; returns one diagnostic per violation."""
    diags: list[str] = []
    issue_ids = [i.id for i in issues]
    if len(set(issue_ids)) != len(issue_ids):
        diags.append("issues: duplicate issue ids")
    if not issues:
        diags.append("issues: empty")

    party_ids = [p.id for p in parties]
    if len(set(party_ids)) != len(party_ids):
        diags.append("parties: duplicate party ids")
    if len(parties) < 3:
        diags.append(f"parties: {len(parties)} parties, need at least 3")
    vetoes = [p.id for p in parties if p.veto]
    if len(vetoes) != 2:
        diags.append(f"parties: exactly 2 veto parties required, found {len(vetoes)}")
    if len(parties) >= 2 and not (parties[0].veto and parties[1].veto):
        diags.append("parties: the first two parties (p1, p2) must hold the vetoes")

    if rounds < 1:
        diags.append(f"rounds: {rounds} < 1")

    for p in parties:
        rows = weights.get(p.id)
        if rows is None:
            diags.append(f"weights.{p.id}: missing")
            continue
        extra = set(rows) - set(issue_ids)
        if extra:
            diags.append(f"weights.{p.id}: unknown issues {sorted(extra)}")
        max_sum = 0
        rows_ok = not extra
        for issue in issues:
            row = rows.get(issue.id)
            if row is None:
                diags.append(f"weights.{p.id}.{issue.id}: missing")
                rows_ok = False
                continue
            if len(row) != len(issue.options):
                diags.append(
                    f"weights.{p.id}.{issue.id}: {len(row)} entries for "
                    f"{len(issue.options)} options"
                )
                rows_ok = False
                continue
            negative = [w for w in row if w < 0]
            if negative:
                diags.append(f"weights.{p.id}.{issue.id}: negative weights {negative}")
                rows_ok = False
                continue
            max_sum += max(row)
        if rows_ok and max_sum != 100:
            diags.append(
                f"weights.{p.id}: per-issue maxima sum to {max_sum}, must be exactly 100"
            )

    if initial_deal is not None and not diags:
        expected = set(issue_ids)
        got = {iid for iid, _ in initial_deal.assignment}
        if got != expected:
            diags.append(f"initial_deal: covers {sorted(got)}, game has {sorted(expected)}")
        else:
            for iid, opt in initial_deal.assignment:
                n = len(next(i for i in issues if i.id == iid).options)
                if not 1 <= opt <= n:
                    diags.append(f"initial_deal.{iid}: option {opt} out of range 1..{n}")
    return diags


def game_from_dict(data: Mapping, game_id: str = "game") -> Game:
    """Build a validated Game from parsed config JSON.

    Raises GameValidationError carrying every diagnostic found, not just the
    first, so a broken config can be repaired in one pass.
    """
    diags: list[str] = []
    issues: list[Issue] = []
    for k, entry in enumerate(data.get("issues", [])):
        try:
            issues.append(
                Issue(
                    id=str(entry["id"]),
                    name=str(entry.get("name", entry["id"])),
                    options=tuple(str(o) for o in entry["options"]),
                )
            )
        except GameValidationError as exc:
            diags.extend(f"issues[{k}]: {d}" for d in exc.diagnostics)
        except (KeyError, TypeError) as exc:
            diags.append(f"issues[{k}]: missing or malformed field ({exc})")

    parties: list[Party] = []
    for k, entry in enumerate(data.get("parties", [])):
        try:
            parties.append(
                Party(
                    id=str(entry["id"]),
                    name=str(entry.get("name", entry["id"])),
                    veto=bool(entry.get("veto", False)),
                    threshold=int(entry["threshold"]),
                    role_text=str(entry.get("role_text", "")),
                )
            )
        except GameValidationError as exc:
            diags.extend(f"parties[{k}]: {d}" for d in exc.diagnostics)
        except (KeyError, TypeError, ValueError) as exc:
            diags.append(f"parties[{k}]: missing or malformed field ({exc})")

    weights: dict[str, dict[str, tuple[int, ...]]] = {}
    raw_weights = data.get("weights", {})
    if not isinstance(raw_weights, Mapping):
        diags.append("weights: expected an object keyed by party id")
        raw_weights = {}
    for pid, rows in raw_weights.items():
        if not isinstance(rows, Mapping):
            diags.append(f"weights.{pid}: expected an object keyed by issue id")
            continue
        parsed_rows = {}
        for iid, row in rows.items():
            try:
                parsed_rows[str(iid)] = tuple(int(w) for w in row)
            except (TypeError, ValueError):
                diags.append(f"weights.{pid}.{iid}: expected an array of integers")
        weights[str(pid)] = parsed_rows

    initial_deal = None
    if "initial_deal" in data:
        try:
            initial_deal = Deal.from_mapping(data["initial_deal"])
        except (TypeError, ValueError, AttributeError):
            diags.append("initial_deal: expected an object of issue id -> option number")
    else:
        diags.append("initial_deal: missing")

    try:
        rounds = int(data.get("rounds", 24))
    except (TypeError, ValueError):
        diags.append("rounds: expected an integer")
        rounds = 24

    party_groups: dict[str, tuple[str, ...]] = {}
    raw_groups = data.get("party_groups", {})
    if not isinstance(raw_groups, Mapping):
        diags.append("party_groups: expected an object of group name -> party ids")
    else:
        for name, members in raw_groups.items():
            try:
                party_groups[str(name)] = tuple(str(m) for m in members)
            except TypeError:
                diags.append(f"party_groups.{name}: expected an array of party ids")

    diags.extend(validate_game_data(issues, parties, weights, initial_deal, rounds))
    if diags:
        raise GameValidationError(diags)

    assert initial_deal is not None
    return Game(
        id=str(data.get("id", game_id)),
        issues=tuple(issues),
        parties=tuple(parties),
        weights=weights,
        initial_deal=initial_deal,
        rounds=rounds,
        setting_text=str(data.get("setting_text", "")),
        party_groups=party_groups,
    )


def load_game(path: str | Path) -> Game:
    """Load and validate a JSON game config; see docs/config-schema.md."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise GameValidationError([f"{path}: unreadable ({exc})"]) from exc
    except json.JSONDecodeError as exc:
        raise GameValidationError([f"{path}: not valid JSON ({exc})"]) from exc
    if not isinstance(data, Mapping):
        raise GameValidationError([f"{path}: top level must be a JSON object"])
    return game_from_dict(data, game_id=path.stem)


def game_to_dict(game: Game) -> dict:
    """Inverse of game_from_dict, suitable for json.dump."""
    return {
        "id": game.id,
        "setting_text": game.setting_text,
        "rounds": game.rounds,
        "issues": [
            {"id": i.id, "name": i.name, "options": list(i.options)} for i in game.issues
        ],
        "parties": [
            {
                "id": p.id,
                "name": p.name,
                "veto": p.veto,
                "threshold": p.threshold,
                "role_text": p.role_text,
            }
            for p in game.parties
        ],
        "weights": {
            pid: {iid: list(row) for iid, row in rows.items()}
            for pid, rows in game.weights.items()
        },
        "initial_deal": game.initial_deal.to_dict(),
        "party_groups": {name: list(members) for name, members in game.party_groups.items()},
    }


def save_game(game: Game, path: str | Path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game), indent=2) + "\n", encoding="utf-8")
