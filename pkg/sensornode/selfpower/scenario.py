#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
import copy
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .energy import EnergyParams, params_from_table, params_to_table
from .lti import MsdParams, msd_plant, TransferFunction
from .nodesim import Excitation, HarvestConfig
from .pid import OscillationSearchConfig, PidGains, UltimateParams
from .presets import preset_names, preset_raw

__all__ = ["ScenarioError", "SimSettings", "Scenario", "merge", "build_scenario", "load_scenario",
           "resolve_scenario", "scenario_to_dict"]

logger = logging.getLogger(__name__)

SECTIONS = ("name", "preset", "energy", "plant", "harvest", "tuning", "sim")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class SimSettings:
    dt_s: float = 1e-3
    t_end_s: float = 20.0
    closed_loop_dt_s: float = 1e-4
    closed_loop_t_end_s: float = 15.0
    node_t_end_s: float = 300.0


@dataclass(frozen=True)
class Scenario:
    name: str
    energy: EnergyParams
    plant: MsdParams
    harvest: HarvestConfig
    tuning: Union[UltimateParams, OscillationSearchConfig]
    sim: SimSettings

    def plant_tf(self) -> TransferFunction:
        return msd_plant(self.plant)


def merge(base: Dict, override: Dict) -> Dict:
    """Recursive dictionary merge, values of override win. Neither input is modified."""
    result = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)
    return result


def _section(raw: Dict, name: str) -> Dict:
    value = raw.get(name)
    if not isinstance(value, dict):
        raise ScenarioError(f"Scenario '{raw.get('name', '?')}' needs a '{name}' object")
    return value


def _build(factory, values: Dict, where: str):
    try:
        return factory(**values)
    except TypeError as e:
        raise ScenarioError(f"Bad keys in '{where}': {e}")


def build_scenario(raw: Dict) -> Scenario:
    unknown = [key for key in raw if key not in SECTIONS]
    if unknown:
        raise ScenarioError(f"Unknown scenario sections: {', '.join(unknown)}")
    energy = params_from_table(_section(raw, "energy"))
    plant = _build(MsdParams, _section(raw, "plant"), "plant")

    harvest = dict(_section(raw, "harvest"))
    excitation = dict(harvest.pop("excitation", {}))
    if excitation.get("frequency_rad_s") is None:
        excitation["frequency_rad_s"] = plant.natural_frequency_rad_s
    controller = harvest.pop("controller", None)
    capacity = harvest.pop("capacity_J", None)
    if capacity is not None and capacity != energy.battery_capacity_J:
        raise ScenarioError(f"Harvest capacity {capacity} J differs from the battery capacity "
                            f"{energy.battery_capacity_J} J of the energy section")
    harvest_config = _build(HarvestConfig, dict(harvest, plant=plant, capacity_J=energy.battery_capacity_J,
                                                excitation=_build(Excitation, excitation, "harvest.excitation"),
                                                controller=_build(PidGains, controller, "harvest.controller")
                                                if controller is not None else None), "harvest")

    tuning_raw = raw.get("tuning") or {"search": {}}
    if "search" in tuning_raw:
        tuning = _build(OscillationSearchConfig, tuning_raw["search"], "tuning.search")
    else:
        tuning = _build(UltimateParams, tuning_raw, "tuning")
    sim = _build(SimSettings, raw.get("sim", {}), "sim")
    return Scenario(name=raw.get("name", "unnamed"), energy=energy, plant=plant, harvest=harvest_config,
                    tuning=tuning, sim=sim)


def load_scenario(path: Union[str, Path], preset: Optional[str] = None) -> Dict:
    """Read a scenario file and merge it over the preset it names (or the one given)."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioError(f"Cannot read scenario file {path}: {e}")
    if not isinstance(raw, dict):
        raise ScenarioError(f"Scenario file {path} must contain a JSON object")
    name = raw.get("name") or Path(path).stem
    base_name = raw.pop("preset", None) or preset
    if base_name is not None:
        raw = merge(_preset(base_name), raw)
    raw["name"] = name
    return raw


def _preset(name: str) -> Dict:
    try:
        return preset_raw(name)
    except KeyError:
        raise ScenarioError(f"Unknown preset '{name}', choose one of {', '.join(preset_names())}")


def resolve_scenario(preset: Optional[str] = "mica2", scenario_file: Optional[Union[str, Path]] = None,
                     overrides: Optional[Dict[str, Any]] = None) -> Scenario:
    """Layer preset < scenario file < overrides, overrides given as dotted keys like 'harvest.dt_s'."""
    if scenario_file is not None:
        raw = load_scenario(scenario_file, preset)
    elif preset is not None:
        raw = _preset(preset)
    else:
        raise ScenarioError("Need a preset or a scenario file")
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        target = raw
        *parents, leaf = dotted.split(".")
        for key in parents:
            target = target.setdefault(key, {})
        target[leaf] = value
    raw.pop("preset", None)
    return build_scenario(raw)


def scenario_to_dict(scenario: Scenario) -> Dict:
    h = scenario.harvest
    if isinstance(scenario.tuning, UltimateParams):
        tuning = {"ku": scenario.tuning.ku, "tu_s": scenario.tuning.tu_s}
    else:
        tuning = {"search": asdict(scenario.tuning)}
    return {
        "name": scenario.name,
        "energy": params_to_table(scenario.energy),
        "plant": asdict(scenario.plant),
        "harvest": {
            "electrical_damping_Ns_per_m": h.electrical_damping_Ns_per_m,
            "excitation": asdict(h.excitation),
            "controller": h.controller.to_dict() if h.controller else None,
            "dt_s": h.dt_s,
            "distance_m": h.distance_m,
            "activity_window_s": h.activity_window_s,
            "setpoint_gain": h.setpoint_gain,
        },
        "tuning": tuning,
        "sim": asdict(scenario.sim),
    }
