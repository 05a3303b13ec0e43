#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
from pathlib import Path

from selfpower.presets import preset_names
from selfpower.scenario import resolve_scenario

SCENARIO_DIR = Path(__file__).resolve().parent / "scenarios"


def load_scenarios(presets, scenario_files):
    # Presets are resolved as they are, scenario files over the preset they name
    return ([resolve_scenario(preset=name) for name in presets] +
            [resolve_scenario(preset=None, scenario_file=path) for path in scenario_files])


def pytest_addoption(parser):
    parser.addoption("--all", action="store_true", help="run all presets and shipped scenario files")
    parser.addoption("--preset", help="specify the preset to test (default mica2)")
    parser.addoption("--scenario-file", help="specify a scenario JSON file to test")


def pytest_generate_tests(metafunc):
    if "scenario" in metafunc.fixturenames:
        if metafunc.config.getoption("all"):
            scenarios = load_scenarios(preset_names(), sorted(SCENARIO_DIR.glob("*.json")))
        elif metafunc.config.getoption("scenario_file"):
            scenarios = load_scenarios([], [metafunc.config.getoption("scenario_file")])
        else:
            scenarios = load_scenarios([metafunc.config.getoption("preset") or "mica2"], [])
        metafunc.parametrize("scenario", scenarios, ids=[s.name for s in scenarios])
