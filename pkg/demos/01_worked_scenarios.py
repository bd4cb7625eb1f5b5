# coding: utf-8

# # Three small scenes, one mechanism each
#
# The package ships three hand-built worlds. Each one is set up so that a
# single refinement mechanism has to fire: two agents reaching for the same
# apple, an agent walking into a room nobody has looked at yet, and an
# agent holding a plan it cannot carry out.
#
# Everything here runs on the scripted backend, so the output is the same
# every time.

from importlib import resources

from actionchain import RunConfig, run_episode

WORLDS = resources.files("actionchain").joinpath("data/worlds")


def show(name):
    metrics, trace = run_episode(RunConfig(world_file=str(WORLDS / f"{name}.json")))
    print(f"--- {name}: {metrics.status} in {metrics.simulation_steps} steps, "
          f"{metrics.backend_call_count} planner calls, {metrics.total_tokens} tokens")
    for e in trace.events:
        if e["stage"] == "validate" and e["verdict"]["kind"] != "executable":
            v = e["verdict"]
            extra = f" (peer {v['peer']}, object {v['contested']})" if v["kind"] == "conflict" else ""
            extra = f" ({v['reason']})" if v["kind"] == "infeasible" else extra
            print(f"  step {e['step']:2d}  agent {e['agent']}  {e['action']:<28} -> {v['kind']}{extra}")
        elif e["stage"] == "refine" and e["outcome"] != "rejected":
            chains = e.get("chains") or [e["chain"]]
            for c in chains:
                print(f"           {e['mechanism']:<10} now: {c['actions'][c['cursor']:]}")
    return trace


# ## Both agents want apple (23)
#
# The agents start in the kitchen and their opening chains are identical.
# Agent 1 has the higher id, so its validation raises the conflict, and the
# pair is rewritten together. The apple stays with agent 0; agent 1 goes
# looking for the other target.

show("contested_apple")

# ## A placeholder in an unexplored room
#
# Agent 0's chain ends with `replan` right after entering the bedroom. The
# validator never lets that placeholder reach the simulator; it is swapped
# for a sub-chain built from what the room turns out to contain.

show("replan_bedroom")

# ## An infeasible grasp
#
# Agent 1 is told to grasp the apple while standing in the living room. The
# team does not know where the apple is from there, so the step is
# infeasible and the rest of the chain gets rebuilt around the same intention.

show("infeasible_grasp")
