import json
from pathlib import Path

import pytest

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.json"


def scenario_dict(name: str) -> dict:
    return json.loads(scenario_path(name).read_text())


@pytest.fixture
def pond_dict():
    return scenario_dict("pond")


@pytest.fixture
def underwater_dict():
    return scenario_dict("underwater")


@pytest.fixture
def pond():
    from beliefplan.scenario import load_scenario

    return load_scenario(scenario_path("pond"))


@pytest.fixture
def underwater():
    from beliefplan.scenario import load_scenario

    return load_scenario(scenario_path("underwater"))
