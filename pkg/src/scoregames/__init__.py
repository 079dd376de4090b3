"""Multi-party scoreable-game negotiation engine and experiment harness.

A scoreable game is a multi-issue negotiation where each party scores deals
through a private weight table and accepts only above a private threshold.
This package defines such games, enumerates and characterises their deal
spaces, runs round-based sessions with rule-based or chat-endpoint agents,
and computes the full metric suite (final 5/6-way and 6-way agreement, any,
wrong, leakage, failure rates, and social-welfare series).
"""

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
    TransportError,
    baseline_priority_propose,
    baseline_propose,
    build_prompt,
)
from .dealspace import (
    DealSpaceStats,
    all_welfare_bounds,
    compute_stats,
    enumerate_deals,
    overall_iou,
    pairwise_iou,
    utilities_matrix,
    welfare_bounds,
)
from .game import (
    Deal,
    Game,
    GameValidationError,
    Issue,
    Party,
    PartyView,
    game_from_dict,
    game_to_dict,
    is_acceptable,
    is_hard_acceptable,
    load_game,
    restrict_players,
    save_game,
    scale_thresholds,
    utility,
)
from .harness import (
    AgentSpec,
    ExperimentSpec,
    convert_text_config,
    emit_generation_prompt,
    run_ablation_grid,
    run_experiment,
    spec_from_manifest,
    validate_game_config,
)
from .metrics import (
    AggregateReport,
    SessionMetrics,
    TrendStats,
    aggregate,
    esw,
    nsw,
    nsw_geometric,
    session_metrics,
    trend_regression,
    usw,
    welfare_series,
)
from .parsing import (
    AgentResponse,
    parse_deal,
    parse_response,
    serialize_deal,
)
from .protocol import (
    Transcript,
    TurnEvent,
    build_turn_order,
    load_transcript,
    run_session,
    save_transcript,
    visible_history,
)

__version__ = "0.1.0"


def sample_game_path(name: str = "harborfront") -> str:
    """Path to a bundled sample game config."""
    from importlib import resources

    return str(resources.files("scoregames").joinpath("games", f"{name}.json"))


def load_sample_game(name: str = "harborfront") -> Game:
    return load_game(sample_game_path(name))
