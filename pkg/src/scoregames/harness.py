"""Experiment orchestration: batches of sessions, persisted artifacts, and
reproducible manifests.

A run directory contains:

    manifest.json      everything needed to re-execute the batch
    transcripts/       one JSON file per session
    metrics.csv        one Table-shaped row for the batch
    metrics.json       the full aggregate report
    welfare/           one per-session CSV of welfare over turns

Nothing under the run directory carries wall-clock data, so a repeated run
with rule-based or scripted agents is byte-identical, regardless of worker
pool size.
"""

from __future__ import annotations

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import metadata
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .agents import (
    AblationConfig,
    Agent,
    ChatAgent,
    ChatClient,
    Incentive,
    IncentiveKind,
    PriorityAgent,
    RandomSequenceAgent,
    SamplingParams,
    ScriptedAgent,
    load_template,
)
from .dealspace import all_welfare_bounds, compute_stats
from .game import Deal, Game, GameValidationError, game_from_dict, load_game
from .metrics import (
    AggregateReport,
    aggregate,
    session_metrics,
    write_aggregate_csv,
    write_report_json,
    write_welfare_csv,
)
from .protocol import Transcript, run_session, save_transcript

AGENT_KINDS = ("baseline", "priority", "chat", "scripted")


def _package_version() -> str:
    try:
        return metadata.version("scoregames")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass(frozen=True)
class AgentSpec:
    """How to build the agent for one party (fresh instance per session)."""

    kind: str = "baseline"
    model: str = ""
    base_url: str = ""
    temperature: float = 0.0
    max_tokens: int = 1024
    scripts: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}; valid: {AGENT_KINDS}")
        if self.kind == "scripted" and not self.scripts:
            raise ValueError("scripted agent needs at least one text")


@dataclass(frozen=True)
class ExperimentSpec:
    """One batch: a game, an agent per party, incentives, and an ablation.

    Session i runs with seed base_seed + i, so any single session can be
    re-run in isolation. Parties without an explicit entry in ``agents`` or
    ``incentives`` get ``default_agent`` / the cooperative incentive.
    """

    game_config: Optional[str] = None
    game: Optional[Game] = None
    default_agent: AgentSpec = AgentSpec()
    agents: Mapping[str, AgentSpec] = field(default_factory=dict)
    incentives: Mapping[str, Incentive] = field(default_factory=dict)
    ablation: AblationConfig = AblationConfig()
    n_sessions: int = 20
    base_seed: int = 0
    history_window: Optional[int] = None
    strict_parsing: bool = False
    dry_run: bool = False
    out_dir: Optional[str] = None

    def load_game(self) -> Game:
        if self.game is not None:
            return self.game
        if self.game_config is None:
            raise ValueError("spec needs either game or game_config")
        return load_game(self.game_config)

    def seeds(self) -> list[int]:
        return [self.base_seed + i for i in range(self.n_sessions)]


def validate_spec(spec: ExperimentSpec, game: Game) -> None:
    party_ids = {p.id for p in game.parties}
    if spec.n_sessions < 1:
        raise ValueError("n_sessions must be >= 1")
    unknown_agents = set(spec.agents) - party_ids
    if unknown_agents:
        raise ValueError(f"agents assigned to unknown parties {sorted(unknown_agents)}")
    unknown_inc = set(spec.incentives) - party_ids
    if unknown_inc:
        raise ValueError(f"incentives assigned to unknown parties {sorted(unknown_inc)}")
    for pid, incentive in spec.incentives.items():
        if incentive.target is not None:
            if incentive.target not in party_ids:
                raise ValueError(f"incentive for {pid} targets unknown party {incentive.target!r}")
            if incentive.target == pid:
                raise ValueError(f"incentive for {pid} cannot target itself")


@dataclass
class RunResult:
    report: AggregateReport
    transcripts: list[Transcript]
    sessions: list
    run_dir: Optional[Path]


class _ClientCache:
    """One shared ChatClient per (base_url, model), so the concurrency cap and
    rate limiter apply endpoint-wide across sessions."""

    def __init__(self, dry_run: bool):
        self.dry_run = dry_run
        self._clients: dict[tuple[str, str], ChatClient] = {}

    def get(self, spec: AgentSpec) -> ChatClient:
        key = (spec.base_url, spec.model)
        if key not in self._clients:
            import os

            self._clients[key] = ChatClient(
                base_url=spec.base_url or os.environ.get("SCOREGAMES_BASE_URL", ""),
                model=spec.model or os.environ.get("SCOREGAMES_MODEL", ""),
                api_key=os.environ.get("SCOREGAMES_API_KEY"),
                dry_run=self.dry_run,
            )
        return self._clients[key]


def _build_agents(
    spec: ExperimentSpec, game: Game, clients: _ClientCache
) -> dict[str, Agent]:
    agents: dict[str, Agent] = {}
    for party in game.parties:
        entry = spec.agents.get(party.id, spec.default_agent)
        incentive = spec.incentives.get(party.id, Incentive())
        if entry.kind == "baseline":
            agents[party.id] = RandomSequenceAgent()
        elif entry.kind == "priority":
            agents[party.id] = PriorityAgent()
        elif entry.kind == "scripted":
            agents[party.id] = ScriptedAgent(entry.scripts)
        else:
            agents[party.id] = ChatAgent(
                clients.get(entry),
                incentive=incentive,
                ablation=spec.ablation,
                sampling=SamplingParams(
                    temperature=entry.temperature, max_tokens=entry.max_tokens
                ),
            )
    return agents


def run_experiment(spec: ExperimentSpec, *, workers: int = 1) -> RunResult:
    """Run the batch, optionally in parallel, and persist artifacts.

    Partial session failures (transport, unparseable turns) are recorded in
    their transcripts; the batch itself never aborts on one bad session.
    """
    game = spec.load_game()
    validate_spec(spec, game)
    clients = _ClientCache(dry_run=spec.dry_run)
    seeds = spec.seeds()

    def one_session(seed: int) -> Transcript:
        agents = _build_agents(spec, game, clients)
        return run_session(
            game,
            agents,
            seed,
            history_window=spec.history_window,
            strict=spec.strict_parsing,
        )

    if workers <= 1:
        transcripts = [one_session(seed) for seed in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            transcripts = list(pool.map(one_session, seeds))

    bounds = all_welfare_bounds(game)
    sessions = [session_metrics(t, game, bounds=bounds) for t in transcripts]
    report = aggregate(sessions, bounds=bounds)

    run_dir: Optional[Path] = None
    if spec.out_dir is not None:
        run_dir = Path(spec.out_dir)
        _persist_run(spec, game, transcripts, report, run_dir)
    return RunResult(report=report, transcripts=transcripts, sessions=sessions, run_dir=run_dir)


def _persist_run(
    spec: ExperimentSpec,
    game: Game,
    transcripts: Sequence[Transcript],
    report: AggregateReport,
    run_dir: Path,
) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "transcripts").mkdir(exist_ok=True)
    (run_dir / "welfare").mkdir(exist_ok=True)
    for i, transcript in enumerate(transcripts):
        stem = f"session_{i:03d}_seed_{transcript.seed}"
        save_transcript(transcript, run_dir / "transcripts" / f"{stem}.json")
        series = session_metrics(transcript, game, bounds=report.welfare_bounds).welfare
        write_welfare_csv(series, run_dir / "welfare" / f"{stem}.csv")
    write_aggregate_csv(report, game.id, run_dir / "metrics.csv")
    write_report_json(report, run_dir / "metrics.json")
    (run_dir / "manifest.json").write_text(
        json.dumps(spec_to_manifest(spec, game), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# Manifest round trip
# ---------------------------------------------------------------------------


def spec_to_manifest(spec: ExperimentSpec, game: Game) -> dict:
    from .game import game_to_dict

    manifest = {
        "package_version": _package_version(),
        "game": game_to_dict(game),
        "game_config": spec.game_config,
        "game_sha256": _game_digest(game),
        "default_agent": _agent_spec_dict(spec.default_agent),
        "agents": {pid: _agent_spec_dict(a) for pid, a in sorted(spec.agents.items())},
        "incentives": {
            pid: {"kind": inc.kind.value, "target": inc.target}
            for pid, inc in sorted(spec.incentives.items())
        },
        "ablation": {
            "prev_deals": spec.ablation.prev_deals,
            "others_prefer": spec.ablation.others_prefer,
            "candidates": spec.ablation.candidates,
            "planning": spec.ablation.planning,
        },
        "n_sessions": spec.n_sessions,
        "base_seed": spec.base_seed,
        "seeds": spec.seeds(),
        "history_window": spec.history_window,
        "strict_parsing": spec.strict_parsing,
        "dry_run": spec.dry_run,
    }
    return manifest


def _agent_spec_dict(a: AgentSpec) -> dict:
    return {
        "kind": a.kind,
        "model": a.model,
        "base_url": a.base_url,
        "temperature": a.temperature,
        "max_tokens": a.max_tokens,
        "scripts": list(a.scripts),
    }


def _agent_spec_from_dict(d: Mapping) -> AgentSpec:
    return AgentSpec(
        kind=d.get("kind", "baseline"),
        model=d.get("model", ""),
        base_url=d.get("base_url", ""),
        temperature=d.get("temperature", 0.0),
        max_tokens=d.get("max_tokens", 1024),
        scripts=tuple(d.get("scripts", ())),
    )


def _game_digest(game: Game) -> str:
    from .game import game_to_dict

    blob = json.dumps(game_to_dict(game), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def spec_from_manifest(path: str | Path) -> ExperimentSpec:
    """Rebuild an ExperimentSpec from a persisted manifest; the embedded game
    definition is authoritative, so the original config file is not needed."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    game = game_from_dict(data["game"], game_id=data["game"].get("id", "game"))
    incentives = {
        pid: Incentive(kind=IncentiveKind(d["kind"]), target=d.get("target"))
        for pid, d in data.get("incentives", {}).items()
    }
    return ExperimentSpec(
        game_config=data.get("game_config"),
        game=game,
        default_agent=_agent_spec_from_dict(data.get("default_agent", {})),
        agents={pid: _agent_spec_from_dict(d) for pid, d in data.get("agents", {}).items()},
        incentives=incentives,
        ablation=AblationConfig(**data.get("ablation", {})),
        n_sessions=data["n_sessions"],
        base_seed=data["base_seed"],
        history_window=data.get("history_window"),
        strict_parsing=data.get("strict_parsing", False),
        dry_run=data.get("dry_run", False),
    )


# ---------------------------------------------------------------------------
# Ablation grid
# ---------------------------------------------------------------------------

GRID_CSV_COLUMNS = [
    "prev_deals",
    "others_prefer",
    "candidates",
    "planning",
    "final_5way_pct",
    "final_6way_pct",
    "any_pct",
]


def run_ablation_grid(
    spec: ExperimentSpec, *, workers: int = 1
) -> list[tuple[AblationConfig, AggregateReport]]:
    """Run the batch once per ablation configuration (16 in total).

    When the spec has an out_dir, each configuration lands in a subdirectory
    named by its flag mask and a grid.csv summarises the sweep.
    """
    results = []
    base_out = Path(spec.out_dir) if spec.out_dir else None
    for config in AblationConfig.grid():
        sub_spec = replace(
            spec,
            ablation=config,
            out_dir=str(base_out / f"ablation_{config.mask()}") if base_out else None,
        )
        result = run_experiment(sub_spec, workers=workers)
        results.append((config, result.report))
    if base_out is not None:
        import csv as _csv

        with open(base_out / "grid.csv", "w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            writer.writerow(GRID_CSV_COLUMNS)
            for config, report in results:
                writer.writerow(
                    [
                        int(config.prev_deals),
                        int(config.others_prefer),
                        int(config.candidates),
                        int(config.planning),
                        "n/a" if report.final_5way_pct is None else f"{report.final_5way_pct:.2f}",
                        "n/a" if report.final_6way_pct is None else f"{report.final_6way_pct:.2f}",
                        "n/a" if report.any_pct is None else f"{report.any_pct:.2f}",
                    ]
                )
    return results


# ---------------------------------------------------------------------------
# Game-generation prompt emission
# ---------------------------------------------------------------------------

DEFAULT_BANNED_WORDS = ("project", "resources")

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def emit_generation_prompt(banned_words: Optional[Sequence[str]] = None) -> str:
    """Prompt text for generating new games with an external model.

    With the default ban list the neutral template is returned verbatim (it
    already avoids those terms). Other non-empty ban lists drop any sentence
    of the neutral template containing a banned term. An empty ban list
    returns the legacy-style template, kept for comparison; it deliberately
    carries the scenario-steering vocabulary the neutral one avoids.

    Generated games re-enter the pipeline through the JSON config schema and
    validate_game_config; nothing is ingested automatically.
    """
    if banned_words is None:
        banned_words = DEFAULT_BANNED_WORDS
    banned = [w.strip().lower() for w in banned_words if w.strip()]
    if not banned:
        return load_template("generation_original.txt")
    text = load_template("generation_alternative.txt")
    sentences = _SENTENCE_SPLIT_RE.split(text)
    kept = [s for s in sentences if not any(w in s.lower() for w in banned)]
    return " ".join(kept)


# ---------------------------------------------------------------------------
# Config validation and text-config conversion
# ---------------------------------------------------------------------------


def validate_game_config(path: str | Path) -> list[str]:
    """Full structural and invariant validation of a JSON game config.

    Returns an empty list when the config is valid; otherwise one diagnostic
    per violation, each citing the offending field path.
    """
    try:
        load_game(path)
    except GameValidationError as exc:
        return list(exc.diagnostics)
    return []


def game_stats_row(path: str | Path) -> str:
    game = load_game(path)
    return f"{game.id}: {compute_stats(game).row()}"


def convert_text_config(directory: str | Path) -> dict:
    """Convert a directory of per-agent text files into the JSON config shape.

    Expected layout (see docs/config-schema.md for the full note):

        issues.txt        one line per issue:  ID | Name | opt1; opt2; ...
        parties.txt       party ids in speaking order (p1 first, p2 second)
        <party>.txt       per party: 'name:', 'veto:', 'threshold:' headers,
                          free role text, then a 'scores:' block with one
                          'ISSUE: w1 w2 ...' line per issue
        initial_deal.txt  a deal in the canonical text form, e.g. A1, B2, ...
        setting.txt       shared background prose (optional)
        rounds.txt        number of negotiation turns (optional, default 24)
    """
    directory = Path(directory)
    diags: list[str] = []

    issues = []
    issues_path = directory / "issues.txt"
    if not issues_path.exists():
        raise GameValidationError([f"{issues_path}: missing"])
    for line_no, line in enumerate(issues_path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 3:
            diags.append(f"issues.txt:{line_no}: expected 'ID | Name | opt1; opt2; ...'")
            continue
        issues.append(
            {
                "id": parts[0],
                "name": parts[1],
                "options": [o.strip() for o in parts[2].split(";") if o.strip()],
            }
        )

    parties_path = directory / "parties.txt"
    if not parties_path.exists():
        raise GameValidationError([f"{parties_path}: missing"])
    party_ids = [
        line.strip()
        for line in parties_path.read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    ]

    parties = []
    weights: dict[str, dict[str, list[int]]] = {}
    for pid in party_ids:
        party_path = directory / f"{pid}.txt"
        if not party_path.exists():
            diags.append(f"{pid}.txt: missing")
            continue
        entry, rows, entry_diags = _parse_party_text(party_path, pid)
        parties.append(entry)
        weights[pid] = rows
        diags.extend(entry_diags)

    data: dict = {
        "id": directory.name,
        "issues": issues,
        "parties": parties,
        "weights": weights,
    }

    setting_path = directory / "setting.txt"
    data["setting_text"] = (
        setting_path.read_text(encoding="utf-8").strip() if setting_path.exists() else ""
    )
    rounds_path = directory / "rounds.txt"
    if rounds_path.exists():
        data["rounds"] = int(rounds_path.read_text(encoding="utf-8").strip())

    deal_path = directory / "initial_deal.txt"
    if deal_path.exists():
        tokens = re.findall(r"([A-Za-z]+)\s*(\d+)", deal_path.read_text(encoding="utf-8"))
        data["initial_deal"] = {iid.upper(): int(opt) for iid, opt in tokens}
    else:
        diags.append("initial_deal.txt: missing")

    if diags:
        raise GameValidationError(diags)
    return data


def _parse_party_text(path: Path, pid: str) -> tuple[dict, dict[str, list[int]], list[str]]:
    diags: list[str] = []
    entry: dict = {"id": pid, "name": pid, "veto": False, "threshold": 0, "role_text": ""}
    rows: dict[str, list[int]] = {}
    role_lines: list[str] = []
    in_scores = False
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        lowered = stripped.lower()
        if lowered.startswith("scores:"):
            in_scores = True
            continue
        if in_scores:
            if ":" not in stripped:
                diags.append(f"{path.name}:{line_no}: score line needs 'ISSUE: w1 w2 ...'")
                continue
            iid, values = stripped.split(":", 1)
            try:
                rows[iid.strip()] = [int(v) for v in values.split()]
            except ValueError:
                diags.append(f"{path.name}:{line_no}: non-integer weight")
        elif lowered.startswith("name:"):
            entry["name"] = stripped.split(":", 1)[1].strip()
        elif lowered.startswith("veto:"):
            entry["veto"] = stripped.split(":", 1)[1].strip().lower() in ("true", "yes", "1")
        elif lowered.startswith("threshold:"):
            try:
                entry["threshold"] = int(stripped.split(":", 1)[1].strip())
            except ValueError:
                diags.append(f"{path.name}:{line_no}: non-integer threshold")
        elif lowered.startswith("role:"):
            role_lines.append(stripped.split(":", 1)[1].strip())
        else:
            role_lines.append(stripped)
    entry["role_text"] = " ".join(role_lines)
    return entry, rows, diags
