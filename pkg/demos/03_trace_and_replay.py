# coding: utf-8

# # Traces, replay, and where the agents went
#
# Every episode leaves a JSON-lines trace behind. It records the starting
# world, every planner call with its prompt and reply, every verdict, and
# every joint step with a digest of the resulting state. Replaying it redoes
# the physics from the recorded actions and checks each digest along the way.

import json
import tempfile
from pathlib import Path

from actionchain import EpisodeTrace, RunConfig, replay, run_episode
from actionchain.errors import ReplayError
from actionchain.cli import trajectories

metrics, trace = run_episode(RunConfig(scenario="transport-small", seed=7))
print(json.dumps(metrics.to_dict(), indent=1))

# In[1]:
# Count the event kinds.

kinds = {}
for e in trace.events:
    kinds[e["stage"]] = kinds.get(e["stage"], 0) + 1
print(kinds)

# In[2]:
# One planner exchange, trimmed.

call = trace.of("backend")[0]
print(call["purpose"], call["usage"])
print(call["prompt"][:600], "...")
print(call["response"])

# In[3]:
# Write it out, read it back, replay it.

path = Path(tempfile.mkdtemp()) / "seed7.jsonl"
trace.write(path)
final = replay(EpisodeTrace.load(path))
print("replayed", final.step_count, "steps; final digest matches")

# In[4]:
# Now break it: claim the first move went somewhere else.

events = [dict(e) for e in EpisodeTrace.load(path).events]
for e in events:
    if e["stage"] == "execute" and e["action"].startswith("goto"):
        e["action"] = "wait"
        break
try:
    replay(EpisodeTrace(events))
except ReplayError as exc:
    print("tampered trace rejected:", exc)

# In[5]:
# Room-by-room paths with running distance.

for agent, path in trajectories(trace)["agents"].items():
    hops = " -> ".join(f"{p['room_name']}@{p['step']}" for p in path)
    print(f"agent {agent}: {hops}  ({path[-1]['distance']} m)")
