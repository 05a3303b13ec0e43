#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
import dataclasses
import json

import pytest

from .energy import params_from_table
from .pid import OscillationSearchConfig, UltimateParams
from .presets import preset_names, preset_raw
from .scenario import *


def test_presets_are_listed():
    assert preset_names() == ["mica2", "mica2-full"]
    with pytest.raises(KeyError):
        preset_raw("mica3")


def test_preset_copies_are_independent():
    raw = preset_raw("mica2")
    raw["energy"]["alpha"] = 0.9
    assert preset_raw("mica2")["energy"]["alpha"] == 0.2


def test_default_scenario_is_the_mica2_table():
    scenario = resolve_scenario()
    assert scenario.name == "mica2"
    assert scenario.energy == params_from_table(preset_raw("mica2")["energy"])
    assert scenario.plant_tf().den.coeffs == (0.182, 0.2, 1.232)
    assert scenario.harvest.excitation.frequency_rad_s == pytest.approx(2.6018, abs=1e-4)
    assert scenario.harvest.controller.kp == 20.2366
    assert scenario.tuning == UltimateParams(33.727, 3.90176)
    assert scenario.sim.t_end_s == 20.0


def test_full_packet_preset():
    scenario = resolve_scenario("mica2-full")
    assert scenario.energy.alpha == 1.0
    assert scenario.energy.initial_energy_J == 0.5


def test_merge_is_recursive_and_pure():
    base = {"a": {"b": 1, "c": 2}, "d": 3}
    merged = merge(base, {"a": {"b": 10}, "e": None})
    assert merged == {"a": {"b": 10, "c": 2}, "d": 3, "e": None}
    assert base == {"a": {"b": 1, "c": 2}, "d": 3}


def test_dotted_overrides():
    scenario = resolve_scenario(overrides={"harvest.dt_s": 1e-3, "plant.mass_kg": 0.2, "sim.t_end_s": None})
    assert scenario.harvest.dt_s == 1e-3
    assert scenario.plant.mass_kg == 0.2
    assert scenario.sim.t_end_s == 20.0


def test_scenario_file_over_preset(tmp_path):
    path = tmp_path / "passive.json"
    path.write_text(json.dumps({"preset": "mica2", "harvest": {"controller": None, "distance_m": 20.0}}))
    scenario = resolve_scenario(preset=None, scenario_file=path)
    assert scenario.name == "passive"
    assert scenario.harvest.controller is None
    assert scenario.harvest.distance_m == 20.0
    assert scenario.harvest.electrical_damping_Ns_per_m == 0.2


def test_scenario_file_takes_preset_argument(tmp_path):
    path = tmp_path / "far.json"
    path.write_text(json.dumps({"name": "far", "harvest": {"distance_m": 80.0}}))
    scenario = resolve_scenario(preset="mica2", scenario_file=path)
    assert scenario.name == "far"
    assert scenario.harvest.distance_m == 80.0


def test_search_tuning():
    raw = preset_raw("mica2")
    raw["tuning"] = {"search": {"sample_period_s": 0.1, "cycles_required": 8}}
    scenario = build_scenario(raw)
    assert scenario.tuning == OscillationSearchConfig(sample_period_s=0.1, cycles_required=8)
    del raw["tuning"]
    assert build_scenario(raw).tuning == OscillationSearchConfig()


def test_explicit_excitation_frequency():
    raw = preset_raw("mica2")
    raw["harvest"]["excitation"]["frequency_rad_s"] = 3.0
    assert build_scenario(raw).harvest.excitation.frequency_rad_s == 3.0


def test_unknown_section_is_refused():
    with pytest.raises(ScenarioError):
        build_scenario(dict(preset_raw("mica2"), weather={}))


def test_bad_plant_key_is_refused():
    raw = preset_raw("mica2")
    raw["plant"]["spring"] = 1.0
    with pytest.raises(ScenarioError):
        build_scenario(raw)


def test_missing_section_is_refused():
    raw = preset_raw("mica2")
    del raw["plant"]
    with pytest.raises(ScenarioError):
        build_scenario(raw)


def test_harvest_capacity_follows_the_battery():
    scenario = resolve_scenario(overrides={"energy.battery_capacity_J": 0.6})
    assert scenario.harvest.capacity_J == 0.6
    assert resolve_scenario(overrides={"harvest.capacity_J": 0.5}).harvest.capacity_J == 0.5


def test_disagreeing_capacities_are_refused():
    for capacity in (0.15, 0.6):
        with pytest.raises(ScenarioError):
            resolve_scenario(overrides={"harvest.capacity_J": capacity})


def test_unknown_preset():
    with pytest.raises(ScenarioError):
        resolve_scenario("mica3")


def test_unreadable_scenario_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    with pytest.raises(ScenarioError):
        resolve_scenario(scenario_file=path)
    with pytest.raises(ScenarioError):
        resolve_scenario(scenario_file=tmp_path / "missing.json")


def test_scenario_dict_rebuilds():
    scenario = resolve_scenario()
    data = scenario_to_dict(scenario)
    assert json.loads(json.dumps(data)) == data
    again = build_scenario(data)
    assert again.plant == scenario.plant
    assert again.harvest == scenario.harvest
    assert again.tuning == scenario.tuning
    for field in dataclasses.fields(scenario.energy):
        assert getattr(again.energy, field.name) == pytest.approx(getattr(scenario.energy, field.name), rel=1e-12)
