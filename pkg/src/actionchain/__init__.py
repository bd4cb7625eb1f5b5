"""Multi-agent task planning with intention-bound action chains."""

from .chain import ActionChain, new_chain, parse_chain_document, render_chain_document
from .engine import EpisodeTrace, RunConfig, load_config, replay, run_episode
from .metrics import MetricsRecord, aggregate, finalize
from .scenarios import SCENARIOS, init_world
from .validator import Verdict, classify, extract_target
from .world import WorldState, apply, is_terminal, legal_actions, observe, step

__version__ = "0.1.0"

__all__ = [
    "ActionChain",
    "EpisodeTrace",
    "MetricsRecord",
    "RunConfig",
    "SCENARIOS",
    "Verdict",
    "WorldState",
    "aggregate",
    "apply",
    "classify",
    "extract_target",
    "finalize",
    "init_world",
    "is_terminal",
    "legal_actions",
    "load_config",
    "new_chain",
    "observe",
    "parse_chain_document",
    "render_chain_document",
    "replay",
    "run_episode",
    "step",
]
