"""Command-line interface.

Subcommands:

    run             run a batch of negotiation sessions and persist artifacts
    stats           deal-space statistics for a game config
    ablation-grid   run all 16 prompt-ablation configurations
    gen-prompt      emit the game-generation prompt for an external model
    validate        check a game config against the schema and invariants

Endpoint credentials come from the environment: SCOREGAMES_BASE_URL,
SCOREGAMES_MODEL, and SCOREGAMES_API_KEY (CLI flags override the first two).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .agents import AblationConfig, Incentive, IncentiveKind
from .dealspace import compute_stats
from .game import load_game
from .harness import (
    AgentSpec,
    ExperimentSpec,
    emit_generation_prompt,
    run_ablation_grid,
    run_experiment,
    validate_game_config,
)
from .metrics import aggregate_csv_row, AGGREGATE_CSV_COLUMNS


def _parse_incentives(specs: list[str]) -> tuple[dict[str, Incentive], Incentive | None]:
    """Each spec is 'kind' (applies to every party), 'party=kind', a named
    game group '@group=kind', or 'party=adversarial_targeted:target'."""
    per_party: dict[str, Incentive] = {}
    default: Incentive | None = None
    for spec in specs:
        if "=" in spec:
            party, _, rest = spec.partition("=")
            kind_name, _, target = rest.partition(":")
            incentive = Incentive(
                kind=IncentiveKind(kind_name.strip()), target=target.strip() or None
            )
            per_party[party.strip()] = incentive
        else:
            kind_name, _, target = spec.partition(":")
            default = Incentive(
                kind=IncentiveKind(kind_name.strip()), target=target.strip() or None
            )
    return per_party, default


def _experiment_spec(args) -> ExperimentSpec:
    default_agent = AgentSpec(
        kind=args.agent,
        model=args.model or "",
        base_url=args.base_url or "",
        temperature=args.temperature,
    )
    per_party, default_incentive = _parse_incentives(args.incentive or [])
    spec = ExperimentSpec(
        game_config=args.game,
        default_agent=default_agent,
        agents={},
        incentives=per_party,
        ablation=AblationConfig.from_string(args.ablation),
        n_sessions=args.sessions,
        base_seed=args.seed,
        history_window=args.history_window,
        strict_parsing=args.restrict_leakage,
        dry_run=args.dry_run,
        out_dir=args.out,
    )
    needs_game = default_incentive is not None or any(k.startswith("@") for k in per_party)
    if needs_game:
        game = spec.load_game()
        incentives: dict[str, Incentive] = (
            {p.id: default_incentive for p in game.parties} if default_incentive else {}
        )
        for key, incentive in per_party.items():
            if key.startswith("@"):
                members = game.party_groups.get(key[1:])
                if members is None:
                    raise SystemExit(
                        f"unknown party group {key!r}; game defines {sorted(game.party_groups)}"
                    )
                for pid in members:
                    incentives[pid] = incentive
            else:
                incentives[key] = incentive
        spec = replace(spec, incentives=incentives)
    return spec


def _add_run_flags(parser: argparse.ArgumentParser, with_ablation: bool = True):
    parser.add_argument("--game", required=True, help="path to a JSON game config")
    parser.add_argument(
        "--agent",
        default="baseline",
        choices=("baseline", "priority", "chat"),
        help="agent kind for every party (default: baseline; use chat with --model)",
    )
    parser.add_argument("--model", default=None, help="chat model name (implies --agent chat)")
    parser.add_argument("--base-url", default=None, help="chat endpoint base URL")
    parser.add_argument("--temperature", type=float, default=0.0)
    parser.add_argument(
        "--incentive",
        action="append",
        metavar="SPEC",
        help="'kind' for all parties, or 'party=kind[:target]'; repeatable",
    )
    if with_ablation:
        parser.add_argument(
            "--ablation",
            default="all",
            help="'all', 'none', a 4-bit mask (prev,others,cand,plan), or a comma list",
        )
    parser.add_argument("--sessions", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--history-window", type=int, default=None)
    parser.add_argument(
        "--dry_run",
        action="store_true",
        help="never call the endpoint; log prompts and use placeholder replies",
    )
    parser.add_argument(
        "--restrict_leakage",
        action="store_true",
        help="strict parsing: only balanced <ANSWER> blocks count as public answers",
    )
    parser.add_argument("--out", default=None, help="run directory for artifacts")


def cmd_run(args) -> int:
    if args.model and args.agent == "baseline":
        args.agent = "chat"
    spec = _experiment_spec(args)
    result = run_experiment(spec, workers=args.workers)
    game = spec.load_game()
    header = ",".join(AGGREGATE_CSV_COLUMNS)
    row = ",".join(aggregate_csv_row(result.report, game.id))
    print(header)
    print(row)
    if result.run_dir:
        print(f"artifacts written to {result.run_dir}", file=sys.stderr)
    return 0


def cmd_stats(args) -> int:
    game = load_game(args.game)
    stats = compute_stats(game)
    if args.json:
        print(json.dumps(stats.to_dict(), indent=2, sort_keys=True))
    else:
        print(f"{game.id}: {stats.row()}")
    return 0


def cmd_ablation_grid(args) -> int:
    if args.model and args.agent == "baseline":
        args.agent = "chat"
    args.ablation = "all"
    spec = _experiment_spec(args)
    results = run_ablation_grid(spec, workers=args.workers)
    print("prev_deals,others_prefer,candidates,planning,final_5way_pct,final_6way_pct,any_pct")
    for config, report in results:
        def fmt(x):
            return "n/a" if x is None else f"{x:.2f}"

        print(
            f"{int(config.prev_deals)},{int(config.others_prefer)},"
            f"{int(config.candidates)},{int(config.planning)},"
            f"{fmt(report.final_5way_pct)},{fmt(report.final_6way_pct)},{fmt(report.any_pct)}"
        )
    return 0


def cmd_gen_prompt(args) -> int:
    if args.ban is None:
        banned = None
    else:
        banned = [w for w in args.ban.split(",") if w.strip()]
    print(emit_generation_prompt(banned))
    return 0


def cmd_validate(args) -> int:
    diagnostics = validate_game_config(args.game)
    if not diagnostics:
        print(f"{args.game}: valid")
        return 0
    for diagnostic in diagnostics:
        print(f"{args.game}: {diagnostic}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scoregames", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run a batch of sessions")
    _add_run_flags(run_parser)
    run_parser.set_defaults(func=cmd_run)

    stats_parser = sub.add_parser("stats", help="deal-space statistics for a game")
    stats_parser.add_argument("game", help="path to a JSON game config")
    stats_parser.add_argument("--json", action="store_true", help="machine-readable output")
    stats_parser.set_defaults(func=cmd_stats)

    grid_parser = sub.add_parser("ablation-grid", help="run all 16 ablation configurations")
    _add_run_flags(grid_parser, with_ablation=False)
    grid_parser.set_defaults(func=cmd_ablation_grid)

    gen_parser = sub.add_parser("gen-prompt", help="emit the game-generation prompt")
    gen_parser.add_argument(
        "--ban",
        default=None,
        metavar="WORDS",
        help="comma-separated terms to avoid (default: project,resources; '' for the legacy template)",
    )
    gen_parser.set_defaults(func=cmd_gen_prompt)

    validate_parser = sub.add_parser("validate", help="validate a game config")
    validate_parser.add_argument("game", help="path to a JSON game config")
    validate_parser.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
