from importlib import resources
from pathlib import Path

import pytest

from actionchain.world import load_world_file

WORLDS = Path(str(resources.files("actionchain").joinpath("data/worlds")))


def world_path(name: str) -> str:
    return str(WORLDS / f"{name}.json")


@pytest.fixture
def three_room():
    world, task, _ = load_world_file(world_path("three_room"))
    return world, task


@pytest.fixture
def fixture_path():
    return world_path


# -- acceptance report ------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
