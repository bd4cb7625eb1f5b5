import pytest

from actionchain.actions import parse_action
from actionchain.chain import chain_from_dict, new_chain
from actionchain.errors import ChainLogicError
from actionchain.memory import SharedMemory
from actionchain.validator import (
    CONFLICT,
    EXECUTABLE,
    INFEASIBLE,
    NEEDS_INSERTION,
    classify,
    extract_target,
)
from actionchain.world import load_world_file, observe

from conftest import world_path


def _view(world, task):
    mem = SharedMemory.for_task(world, task)
    for a in sorted(world.agents):
        mem.update(observe(world, a))
    return mem.view()


def _next(chains):
    return {a: (c.peek_next(), c.active_intention) for a, c in chains.items()}


@pytest.fixture
def conflict_fixture():
    world, task, extra = load_world_file(world_path("contested_apple"))
    chains = {int(k): chain_from_dict(v) for k, v in extra["initial_chains"].items()}
    return _view(world, task), chains


@pytest.mark.parametrize("action, target", [
    ("grasp apple (23)", 23), ("wait", None), ("put_in cup (9) box (4)", 9),
    ("goto kitchen (3)", None), ("open box (4)", 4), ("put_on cup (9) goal", 9),
])
def test_extract_target(action, target):
    assert extract_target(parse_action(action)) == target


def test_replan_needs_insertion(three_room):
    view = _view(*three_room)
    chain = new_chain("s", ["goto bedroom (5)", "replan"]).advance()
    assert classify(0, chain, view, _next({0: chain})).kind == NEEDS_INSERTION


def test_unknown_location_is_infeasible(three_room):
    view = _view(*three_room)
    chain = new_chain("fetch apple (23)", ["grasp apple (23)"])
    v = classify(0, chain, view, _next({0: chain}))
    assert v.kind == INFEASIBLE and v.reason == "unknown location"


def test_feasibility_check_can_be_skipped(three_room):
    view = _view(*three_room)
    chain = new_chain("fetch apple (23)", ["grasp apple (23)"])
    assert classify(0, chain, view, _next({0: chain}), check_feasibility=False).kind == EXECUTABLE


def test_both_grasp_apple_conflict_only_for_higher_id(conflict_fixture):
    view, chains = conflict_fixture
    nxt = _next(chains)
    assert classify(0, chains[0], view, nxt).kind == EXECUTABLE
    v = classify(1, chains[1], view, nxt)
    assert (v.kind, v.peer, v.contested) == (CONFLICT, 0, 23)


def test_conflict_via_next_actions_without_intentions(conflict_fixture):
    view, chains = conflict_fixture
    nxt = {a: (c.peek_next(), None) for a, c in chains.items()}
    assert classify(1, chains[1], view, nxt).kind == CONFLICT


def test_conflict_via_intention_alone(conflict_fixture):
    view, chains = conflict_fixture
    nxt = {0: (parse_action("wait"), "deliver apple (23) to the goal zone"),
           1: (chains[1].peek_next(), None)}
    v = classify(1, chains[1], view, nxt)
    assert (v.kind, v.contested) == (CONFLICT, 23)


def test_room_mentions_do_not_conflict(three_room):
    view = _view(*three_room)
    a = new_chain("search kitchen (3)", ["goto kitchen (3)"])
    b = new_chain("search kitchen (3)", ["goto kitchen (3)"])
    nxt = _next({0: a, 1: b})
    assert classify(1, b, view, nxt).kind == EXECUTABLE


def test_replan_takes_precedence_over_conflict(conflict_fixture):
    view, chains = conflict_fixture
    c1 = new_chain("deliver apple (23) to the goal zone", ["replan"])
    assert classify(1, c1, view, _next({0: chains[0], 1: c1})).kind == NEEDS_INSERTION


def test_exhausted_chain_is_logic_error(three_room):
    view = _view(*three_room)
    chain = new_chain("x", ["wait"]).advance()
    with pytest.raises(ChainLogicError):
        classify(0, chain, view, {})


def test_verdict_dict_shape(conflict_fixture):
    view, chains = conflict_fixture
    d = classify(1, chains[1], view, _next(chains)).to_dict()
    assert d["kind"] == CONFLICT and d["peer"] == 0 and d["contested"] == 23
