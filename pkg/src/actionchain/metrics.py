"""Episode metrics and suite aggregation."""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from .errors import ConfigurationError
from .world import TaskSpec, WorldState, completed_count, is_terminal


@dataclass(frozen=True)
class MetricsRecord:
    scenario: str
    seed: int
    backend: str
    ablations: tuple[str, ...]
    status: str
    aborted: bool
    completed: int
    quota_basis: int
    transport_rate: float
    move_distance_total: int
    move_distance_mean: float
    simulation_steps: int
    inference_time: float
    input_tokens: int
    output_tokens: int
    total_tokens: int
    backend_call_count: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ablations"] = list(self.ablations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsRecord":
        return cls(**{**d, "ablations": tuple(d["ablations"])})


def finalize(trace, world: WorldState, task: TaskSpec) -> MetricsRecord:
    """Compute the episode metrics from its trace and final state."""
    head = trace.header
    config = head.get("config", {})
    aborted = bool(trace.of("abort"))
    done = completed_count(world, task)
    basis = task.quota_basis
    rate = 1.0 if basis == 0 else min(done, basis) / basis
    dist = [a.distance_traveled for a in world.agents.values()]
    calls = trace.of("backend")
    tin = sum(c["usage"]["input"] for c in calls)
    tout = sum(c["usage"]["output"] for c in calls)
    return MetricsRecord(
        scenario=config.get("scenario", task.scenario),
        seed=int(config.get("seed", world.rng_seed)),
        backend=head.get("backend", "unknown"),
        ablations=tuple(config.get("ablations", ())),
        status="aborted" if aborted else is_terminal(world, task).value,
        aborted=aborted,
        completed=done,
        quota_basis=basis,
        transport_rate=rate,
        move_distance_total=sum(dist),
        move_distance_mean=sum(dist) / len(dist) if dist else 0.0,
        simulation_steps=world.step_count,
        inference_time=round(sum(c["latency"] for c in calls), 9),
        input_tokens=tin,
        output_tokens=tout,
        total_tokens=tin + tout,
        backend_call_count=len(calls),
    )


# short label -> record attribute, in report order
COLUMNS = (
    ("TR", "transport_rate"),
    ("MD", "move_distance_total"),
    ("MD/agent", "move_distance_mean"),
    ("SS", "simulation_steps"),
    ("IT", "inference_time"),
    ("TC", "total_tokens"),
    ("calls", "backend_call_count"),
)


@dataclass(frozen=True)
class SuiteReport:
    scenario: str
    backend: str
    ablations: tuple[str, ...]
    records: tuple[MetricsRecord, ...]
    means: dict

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "backend": self.backend,
            "ablations": list(self.ablations),
            "tasks": len(self.records),
            "success_rate": sum(r.status == "success" for r in self.records) / len(self.records),
            "means": self.means,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        head = ["task", "seed", "status"] + [c for c, _ in COLUMNS]
        rows = [[str(i), str(r.seed), r.status] + [_fmt(getattr(r, f)) for _, f in COLUMNS]
                for i, r in enumerate(self.records)]
        rows.append(["mean", "", ""] + [_fmt(self.means[f]) for _, f in COLUMNS])
        title = f"{self.scenario} / {self.backend} backend / " + (",".join(self.ablations) or "full")
        return title + "\n" + _align([head] + rows)


def aggregate(records: Sequence[MetricsRecord]) -> SuiteReport:
    """Per-metric means plus the per-task table for one homogeneous suite."""
    records = list(records)
    if not records:
        raise ConfigurationError("cannot aggregate an empty list of records")
    for key in ("scenario", "backend", "ablations"):
        values = {getattr(r, key) for r in records}
        if len(values) > 1:
            raise ConfigurationError(f"records mix different {key} values: {sorted(map(str, values))}")
    means = {f: statistics.fmean(getattr(r, f) for r in records) for _, f in COLUMNS}
    first = records[0]
    return SuiteReport(first.scenario, first.backend, first.ablations, tuple(records), means)


def comparison_table(reports: dict[str, SuiteReport]) -> str:
    """Metrics as rows, one column per configuration label."""
    labels = list(reports)
    head = ["metric"] + labels
    rows = [[short] + [_fmt(reports[l].means[f]) for l in labels] for short, f in COLUMNS]
    return _align([head] + rows)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}" if abs(v) < 10 else f"{v:.1f}"
    return str(v)


def _align(rows: Iterable[list[str]]) -> str:
    rows = list(rows)
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for r in rows:
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)
