"""Randomized checks of validator soundness and chain algebra."""

import random
from functools import lru_cache

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from actionchain.actions import GOAL, PrimitiveAction, Ref, parse_action
from actionchain.chain import (
    AgentPlan,
    ChainPlanDocument,
    new_chain,
    parse_chain_document,
    render_chain_document,
)
from actionchain.memory import SharedMemory
from actionchain.scenarios import init_world
from actionchain.validator import EXECUTABLE, classify
from actionchain.world import apply, legal_actions, observe, step

SOUNDNESS_CASES = 10_000
ALGEBRA_CASES = 1_000

# -- validator soundness -------------------------------------------------------------------


@lru_cache(maxsize=None)
def state_pool():
    """Mid-episode (world, memory view) pairs from random team walks.

    Every agent observes after every joint step, as in the engine, so the
    team's memory is exactly what it would be during a real run.
    """
    pool = []
    rng = random.Random(2024)
    for scenario in ("transport-small", "watch-help-small"):
        for seed in range(12):
            world, task = init_world(seed, scenario)
            mem = SharedMemory.for_task(world, task)
            for a in sorted(world.agents):
                mem.update(observe(world, a))
            for _ in range(40):
                joint = {}
                for a in sorted(world.agents):
                    acts = sorted(legal_actions(world, a), key=str)
                    joint[a] = rng.choice(acts)
                world, _ = step(world, joint, task.sub_goals)
                for a in sorted(world.agents):
                    mem.update(observe(world, a))
                pool.append((world, mem.view()))
    return pool


def candidates(world, view, agent):
    """Legal actions plus plausible-looking ones that may well be illegal."""
    out = set(legal_actions(world, agent)) | set(view.legal_actions(agent))
    rooms = [r.ref for r in world.rooms]
    objs = [o.ref for o in world.objects.values()]
    out |= {PrimitiveAction("goto", (r,)) for r in rooms}
    out |= {PrimitiveAction("grasp", (o,)) for o in objs}
    out |= {PrimitiveAction("open", (o,)) for o in objs}
    out |= {PrimitiveAction("put_on", (o, GOAL)) for o in objs}
    out |= {PrimitiveAction("put_on", (o, r)) for o in objs for r in rooms[:2]}
    out |= {PrimitiveAction("put_in", (o, c)) for o in objs[:4] for c in objs[:4] if o != c}
    return sorted(out, key=str)


@settings(max_examples=SOUNDNESS_CASES, deadline=None, derandomize=True,
          suppress_health_check=list(HealthCheck))
@given(st.data())
def test_executable_verdicts_apply_cleanly(data):
    world, view = data.draw(st.sampled_from(state_pool()))
    agent = data.draw(st.sampled_from(sorted(world.agents)))
    plausible = sorted(set(legal_actions(world, agent)) | set(view.legal_actions(agent)), key=str)
    pick_from = data.draw(st.sampled_from([plausible, candidates(world, view, agent)]))
    action = data.draw(st.sampled_from(pick_from))
    chain = new_chain("do something", [action])
    verdict = classify(agent, chain, view, {agent: (action, chain.intention)})
    if verdict.kind == EXECUTABLE:
        res = apply(world, agent, action)
        assert res.success, f"{action} judged executable but failed: {res.reason}"


# -- chain algebra -------------------------------------------------------------------------------

names = st.sampled_from(["apple", "cup", "box", "kitchen", "bedroom", "pen", "hall_2"])
refs = st.builds(Ref, names, st.integers(0, 999))
actions = st.one_of(
    st.sampled_from([PrimitiveAction("explore"), PrimitiveAction("wait"), PrimitiveAction("replan")]),
    st.builds(lambda r: PrimitiveAction("goto", (r,)), refs),
    st.builds(lambda r: PrimitiveAction("grasp", (r,)), refs),
    st.builds(lambda r: PrimitiveAction("open", (r,)), refs),
    st.builds(lambda r, d: PrimitiveAction("put_on", (r, d)), refs, st.one_of(refs, st.just(GOAL))),
    st.builds(lambda r, c: PrimitiveAction("put_in", (r, c)), refs, refs),
)
intentions = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40).filter(str.strip)


@st.composite
def chains(draw):
    acts = draw(st.lists(actions, min_size=1, max_size=12))
    chain = new_chain(draw(intentions), acts)
    for _ in range(draw(st.integers(0, len(acts)))):
        chain = chain.advance()
    return chain


@settings(max_examples=ALGEBRA_CASES, deadline=None, derandomize=True)
@given(chains(), st.lists(actions, max_size=8))
def test_splice_preserves_prefix_and_intention(chain, replacement):
    out = chain.splice_unexecuted(replacement)
    assert out.executed == chain.executed
    assert out.remaining == tuple(replacement)
    assert out.cursor == chain.cursor
    assert (out.intention, out.insertions) == (chain.intention, chain.insertions)
    assert chain.splice_unexecuted(chain.remaining) == chain


@settings(max_examples=ALGEBRA_CASES, deadline=None, derandomize=True)
@given(st.sampled_from(["refinement", "insertion"]), st.lists(actions, min_size=1, max_size=10),
       intentions, st.text(max_size=60))
def test_single_plan_round_trip(purpose, acts, intention, rationale):
    doc = ChainPlanDocument(purpose, (AgentPlan(0, tuple(acts), intention, rationale),))
    assert parse_chain_document(render_chain_document(doc), purpose) == doc


@settings(max_examples=ALGEBRA_CASES, deadline=None, derandomize=True)
@given(st.lists(st.tuples(st.lists(actions, min_size=1, max_size=6), st.one_of(st.none(), intentions)),
                min_size=1, max_size=4), st.text(max_size=40))
def test_assignment_round_trip(pairs, reason):
    plans = tuple(AgentPlan(i, tuple(a), intent) for i, (a, intent) in enumerate(pairs))
    doc = ChainPlanDocument("assignment", plans, reason)
    assert parse_chain_document(render_chain_document(doc), "assignment") == doc


@settings(max_examples=ALGEBRA_CASES, deadline=None, derandomize=True)
@given(actions)
def test_action_text_round_trip(action):
    assert parse_action(str(action)) == action
