"""Command-line entry point: ``actionchain <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .engine import EpisodeTrace, RunConfig, load_config, replay, run_episode
from .errors import ActionChainError, ConfigurationError, ReplayError
from .metrics import aggregate, comparison_table
from .refiner import ABLATIONS
from .scenarios import SCENARIOS

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def parse_seeds(text: str) -> list[int]:
    """``7``, ``1,3,5`` or an inclusive range ``1..5``."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("seed list is empty")
    return seeds


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON or YAML run config")
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    p.add_argument("--backend", choices=["scripted", "llm"])
    p.add_argument("--ablation", action="append", choices=ABLATIONS, default=None,
                   help="repeatable; omit for the full configuration")
    p.add_argument("--step-limit", type=int)
    p.add_argument("--out", type=Path, help="directory for traces and reports")
    p.add_argument("--trace", choices=["on", "off"], default="on")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actionchain", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("episode", help="run one episode and print its metrics as JSON")
    _common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--world", type=Path, help="fixture world file instead of a generated one")

    for name, text in (("suite", "run a suite of seeds and aggregate"),
                       ("ablate", "compare the full configuration with each ablation")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--seeds", type=parse_seeds)
        p.add_argument("--seed", type=int, help="first seed when --seeds is not given")
        p.add_argument("--tasks", type=int, default=5, help="task count when --seeds is not given")
        p.add_argument("--format", choices=["json", "table"], default="json" if name == "suite" else "table")

    p = sub.add_parser("replay", help="re-execute a trace and verify its state digests")
    p.add_argument("trace", type=Path)

    p = sub.add_parser("export-trajectory", help="per-agent room visits with distances, as JSON")
    p.add_argument("trace", type=Path)
    p.add_argument("--out", type=Path)
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    for flag, key in (("scenario", "scenario"), ("backend", "backend"), ("step_limit", "step_limit")):
        if getattr(args, flag, None) is not None:
            changes[key] = getattr(args, flag)
    if args.ablation is not None:
        changes["ablations"] = frozenset(args.ablation)
    if getattr(args, "world", None) is not None:
        changes["world_file"] = str(args.world)
    if isinstance(getattr(args, "seed", None), int) and args.command == "episode":
        changes["seed"] = args.seed
    try:
        return replace(cfg, **changes)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def _seeds(args, cfg: RunConfig) -> list[int]:
    if args.seeds:
        return args.seeds
    start = args.seed if args.seed is not None else cfg.seed
    return [start + i for i in range(args.tasks)]


def _write_trace(args, trace: EpisodeTrace, name: str) -> None:
    if args.out and args.trace == "on":
        args.out.mkdir(parents=True, exist_ok=True)
        trace.write(args.out / name)


def _suite(args, cfg: RunConfig, seeds: list[int]):
    records = []
    for i, seed in enumerate(seeds):
        metrics, trace = run_episode(replace(cfg, seed=seed))
        tag = "-".join(sorted(cfg.ablations)) or "full"
        _write_trace(args, trace, f"trace-{tag}-{i:03d}-seed{seed}.jsonl")
        records.append(metrics)
    return records


def cmd_episode(args) -> int:
    cfg = _config(args)
    metrics, trace = run_episode(cfg)
    _write_trace(args, trace, "trace.jsonl")
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    return EXIT_FAILED if metrics.aborted else EXIT_OK


def cmd_suite(args) -> int:
    cfg = _config(args)
    report = aggregate(_suite(args, cfg, _seeds(args, cfg)))
    print(report.to_json() if args.format == "json" else report.to_table())
    if args.out:
        (args.out / "report.json").write_text(report.to_json() + "\n")
    return EXIT_FAILED if any(r.aborted for r in report.records) else EXIT_OK


def cmd_ablate(args) -> int:
    base = _config(args)
    seeds = _seeds(args, base)
    reports = {}
    for label, flags in [("full", ())] + [(a, (a,)) for a in ABLATIONS]:
        cfg = replace(base, ablations=frozenset(flags))
        reports[label] = aggregate(_suite(args, cfg, seeds))
    if args.format == "json":
        print(json.dumps({k: r.to_dict() for k, r in reports.items()}, indent=2, sort_keys=True))
    else:
        print(f"{base.scenario}, seeds {seeds[0]}..{seeds[-1]}, {base.backend} backend")
        print(comparison_table(reports))
    aborted = any(r.aborted for rep in reports.values() for r in rep.records)
    return EXIT_FAILED if aborted else EXIT_OK


def cmd_replay(args) -> int:
    trace = EpisodeTrace.load(args.trace)
    world = replay(trace)
    steps = len(trace.of("step"))
    print(json.dumps({"ok": True, "steps": steps, "final_step_count": world.step_count}))
    return EXIT_OK


def trajectories(trace: EpisodeTrace) -> dict:
    """Room-visit sequence per agent with cumulative distance."""
    head = trace.header
    names = {r["id"]: r["name"] for r in head["world"]["rooms"]}
    out: dict[str, list[dict]] = {}
    for a in head["world"]["agents"]:
        out[str(a["id"])] = [{"step": head["step"], "room": a["room"], "room_name": names[a["room"]],
                              "distance": a["distance_traveled"]}]
    for ev in trace.of("step"):
        for a in ev["agents"]:
            path = out[str(a["id"])]
            if a["room"] != path[-1]["room"]:
                path.append({"step": ev["step"], "room": a["room"], "room_name": names[a["room"]],
                             "distance": a["distance"]})
    return {"rooms": names, "edges": head["world"]["edges"], "agents": out}


def cmd_export(args) -> int:
    data = json.dumps(trajectories(EpisodeTrace.load(args.trace)), indent=2)
    if args.out:
        args.out.write_text(data + "\n")
    else:
        print(data)
    return EXIT_OK


COMMANDS = {
    "episode": cmd_episode,
    "suite": cmd_suite,
    "ablate": cmd_ablate,
    "replay": cmd_replay,
    "export-trajectory": cmd_export,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"actionchain: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ReplayError as exc:
        print(f"actionchain: replay failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ActionChainError, OSError) as exc:
        print(f"actionchain: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
