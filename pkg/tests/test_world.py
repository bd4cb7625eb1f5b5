from dataclasses import replace

import pytest

from actionchain.actions import parse_action
from actionchain.errors import ConfigurationError, MalformedActionError, NotFoundError
from actionchain.scenarios import get_scenario, init_world
from actionchain.world import (
    HOLD_CAPACITY,
    TaskSpec,
    SubGoal,
    TerminationStatus,
    apply,
    canonical_json,
    digest,
    held_by,
    is_terminal,
    legal_actions,
    observe,
    step,
    world_from_dict,
    world_to_dict,
)


def run(world, agent, *actions, goals=()):
    results = []
    for a in actions:
        res = apply(world, agent, a, goals)
        world = res.world
        results.append(res)
    return world, results


# -- init_world ---------------------------------------------------------------


def test_init_world_is_deterministic():
    a = init_world(7, "transport-small")
    b = init_world(7, "transport-small")
    assert canonical_json(world_to_dict(a[0])) == canonical_json(world_to_dict(b[0]))
    assert a[1] == b[1]


def test_different_seeds_differ():
    a, _ = init_world(7, "transport-small")
    b, _ = init_world(8, "transport-small")
    assert digest(a) != digest(b)


def test_watch_help_step_limit():
    _, task = init_world(1, "watch-help-small")
    assert task.step_limit == 150
    assert 3 <= len(task.sub_goals) <= 5
    assert task.scenario == "watch-help"


def test_transport_small_shape():
    world, task = init_world(3, "transport-small")
    assert len(world.rooms) == 6
    assert len(task.sub_goals) == 6
    assert task.sub_goal_quota == 6
    assert task.step_limit == 200
    assert world.step_count == 0
    assert all(a.room == world.start_room for a in world.agents.values())


def test_paper_scale_constants():
    _, task = init_world(0, "transport-paper")
    assert task.step_limit == 3000
    assert task.sub_goal_quota == 10


@pytest.mark.parametrize("override", [{"n_rooms": 1}, {"min_sub_goals": 0}, {"step_limit": 0}])
def test_invalid_template_rejected(override):
    with pytest.raises(ConfigurationError):
        init_world(0, "transport-small", **override)


def test_unknown_scenario_rejected():
    with pytest.raises(ConfigurationError):
        get_scenario("nope")


# -- observe ------------------------------------------------------------------


def test_fresh_agent_sees_only_start_room(three_room):
    world, _ = three_room
    obs = observe(world, 0)
    assert obs.explored_rooms == (1,)
    assert obs.visible_objects == ()  # the living room is empty


def test_goto_then_explore_reveals_apple(three_room):
    world, _ = three_room
    world, _ = run(world, 0, "goto kitchen (3)")
    assert observe(world, 0).visible_objects == ()
    world, _ = run(world, 0, "explore")
    obs = observe(world, 0)
    assert ("apple (23)", "on floor of kitchen (3)") in obs.visible_objects
    assert 3 in obs.explored_rooms


def test_closed_container_hides_contents(three_room):
    world, _ = three_room
    world, _ = run(world, 0, "goto bedroom (5)", "explore")
    names = [n for n, _ in observe(world, 0).visible_objects]
    assert "box (4)" in names and "cup (9)" in names and "pen (41)" not in names
    world, _ = run(world, 0, "open box (4)")
    assert "pen (41)" in [n for n, _ in observe(world, 0).visible_objects]


def test_exploration_is_shared_with_the_team(three_room):
    world, _ = three_room
    world, _ = run(world, 0, "goto kitchen (3)", "explore")
    world, _ = run(world, 1, "goto kitchen (3)")
    assert "apple (23)" in [n for n, _ in observe(world, 1).visible_objects]
    assert 3 not in observe(world, 1).explored_rooms


def test_observe_unknown_agent(three_room):
    with pytest.raises(NotFoundError):
        observe(three_room[0], 9)


# -- legal_actions ---------------------------------------------------------------


def test_fresh_agent_action_space(three_room):
    world, _ = three_room
    got = {str(a) for a in legal_actions(world, 0)}
    assert got == {"goto kitchen (3)", "goto bedroom (5)", "explore", "wait"}


def test_goal_zone_put_on_available(three_room):
    world, _ = three_room
    world, _ = run(world, 0, "goto kitchen (3)", "explore", "grasp apple (23)", "goto living_room (1)")
    assert parse_action("put_on apple (23) goal") in legal_actions(world, 0)


def test_full_hands_forbid_grasp(three_room):
    world, _ = three_room
    world, _ = run(world, 0, "goto bedroom (5)", "explore", "open box (4)", "grasp cup (9)", "grasp pen (41)")
    assert len(world.agent(0).held) == HOLD_CAPACITY
    assert not any(a.verb == "grasp" for a in legal_actions(world, 0))


# -- apply ----------------------------------------------------------------------


def test_wait_only_advances_clock(three_room):
    world, _ = three_room
    res = apply(world, 0, "wait")
    assert res.success
    assert res.world.step_count == 1
    assert replace(res.world, step_count=0) == world


def test_grasp_in_other_room_fails_not_visible(three_room):
    world, _ = three_room
    res = apply(world, 0, "grasp apple (23)")
    assert not res.success and res.reason == "not visible"
    assert res.world.step_count == 1
    assert replace(res.world, step_count=0) == world


def test_put_on_goal_completes_sub_goal(three_room):
    world, task = three_room
    world, results = run(world, 0, "goto kitchen (3)", "explore", "grasp apple (23)",
                         "goto living_room (1)", "put_on apple (23) goal", goals=task.sub_goals)
    assert all(r.success for r in results)
    assert results[-1].completed == (23,)
    assert task.refreshed(world).sub_goals[1].done


def test_goto_accumulates_edge_length(three_room):
    world, _ = three_room
    world, _ = run(world, 0, "goto kitchen (3)", "goto living_room (1)", "goto bedroom (5)")
    assert world.agent(0).distance_traveled == 4 + 4 + 6


def test_goto_non_adjacent_fails(three_room):
    world, _ = three_room
    world, _ = run(world, 0, "goto kitchen (3)")
    res = apply(world, 0, "goto bedroom (5)")
    assert not res.success and res.reason == "not adjacent"


@pytest.mark.parametrize("action", ["replan", "goto cellar (7)", "grasp banana (23)", "goto apple (23)"])
def test_malformed_actions_rejected_without_step(three_room, action):
    world, _ = three_room
    with pytest.raises(MalformedActionError):
        apply(world, 0, action)


def test_delivered_objects_are_final(three_room):
    world, _ = three_room
    world, _ = run(world, 0, "goto kitchen (3)", "explore", "grasp apple (23)",
                   "goto living_room (1)", "put_on apple (23) goal")
    res = apply(world, 0, "grasp apple (23)")
    assert not res.success and res.reason == "already delivered"


def test_joint_step_advances_clock_once(three_room):
    world, _ = three_room
    new, results = step(world, {1: "goto bedroom (5)", 0: "goto kitchen (3)"})
    assert new.step_count == 1
    assert new.agent(0).room == 3 and new.agent(1).room == 5
    assert all(r.success for r in results.values())


def test_joint_step_lower_id_wins_contention(three_room):
    world, _ = three_room
    world, _ = step(world, {0: "goto kitchen (3)", 1: "goto kitchen (3)"})
    world, _ = step(world, {0: "explore", 1: "wait"})
    world, res = step(world, {0: "grasp apple (23)", 1: "grasp apple (23)"})
    assert res[0].success and not res[1].success
    assert world.obj(23).location == held_by(0)


# -- is_terminal -------------------------------------------------------------------


def _task(kind, n, limit, quota=None, done=0):
    goals = tuple(SubGoal(10 + i, "goal", i < done) for i in range(n))
    return TaskSpec(kind, goals, limit, quota)


def test_terminal_quota_met(three_room):
    world, _ = three_room
    world = replace(world, step_count=1200)
    assert is_terminal(world, _task("transport", 10, 3000, 10, done=10)) is TerminationStatus.SUCCESS


def test_terminal_watch_help_step_limit(three_room):
    world = replace(three_room[0], step_count=150)
    assert is_terminal(world, _task("watch-help", 3, 150, done=2)) is TerminationStatus.STEP_LIMIT


def test_terminal_running_at_start(three_room):
    world, task = three_room
    assert is_terminal(world, task) is TerminationStatus.RUNNING


def test_zero_sub_goals_is_immediate_success(three_room):
    world, _ = three_room
    assert is_terminal(world, TaskSpec("transport", (), 10)) is TerminationStatus.SUCCESS


# -- serialization ---------------------------------------------------------------------


def test_world_dict_round_trip():
    world, _ = init_world(5, "watch-help-small")
    assert world_from_dict(world_to_dict(world)) == world


def test_world_document_rejects_disconnected_graph():
    world, _ = init_world(5, "transport-small")
    d = world_to_dict(world)
    d["edges"] = d["edges"][:1]
    with pytest.raises(ConfigurationError):
        world_from_dict(d)
