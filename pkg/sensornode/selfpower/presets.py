#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
# Built-in scenarios, written in the same JSON shape a scenario file uses.
#
import copy
from typing import Dict, List

# Mica2 mote with a piezoelectric mass-spring-damper harvester. Energy values carry their table units.
_MICA2_ENERGY = {
    "vdc_V": 2.7,
    "i_sens_mA": 25.0,
    "t_sens_ms": 0.5,
    "i_write_mA": 18.4,
    "t_write_ms": 12.9,
    "i_read_mA": 6.2,
    "t_read_us": 565.0,
    "i_active_mA": 8.0,
    "t_active_ms": 1.0,
    "i_sleep_uA": 1.0,
    "t_sleep_ms": 299.0,
    "e_elec_nJ_per_bit": 50.0,
    "e_fs_pJ_per_bit_m2": 10.0,
    "e_mp_pJ_per_bit_m4": 0.0013,
    "packet_bits": 4000,
    "alpha": 0.2,
    "reference_energy_J": 0.2,
    "threshold_energy_J": 0.1,
    # Initial energy is 0.5 J per unit of alpha
    "initial_energy_J": 0.1,
    "aggregation_energy_J": 5e-12,
    "battery_capacity_J": 0.5,
}

_MICA2 = {
    "name": "mica2",
    "energy": _MICA2_ENERGY,
    "plant": {"mass_kg": 0.182, "damping_Ns_per_m": 0.2, "stiffness_N_per_m": 1.2320},
    "harvest": {
        "electrical_damping_Ns_per_m": 0.2,
        # A null frequency means the plant's natural frequency
        "excitation": {"amplitude_m": 0.0325, "frequency_rad_s": None},
        "controller": {"kp": 20.2366, "ki": 10.3729, "kd": 9.8699},
        "dt_s": 2e-3,
        "distance_m": 50.0,
        "activity_window_s": None,
        "setpoint_gain": 1.0,
    },
    "tuning": {"ku": 33.727, "tu_s": 3.90176},
    "sim": {"dt_s": 1e-3, "t_end_s": 20.0, "closed_loop_dt_s": 1e-4, "closed_loop_t_end_s": 15.0,
            "node_t_end_s": 300.0},
}


def _mica2_full() -> dict:
    scenario = copy.deepcopy(_MICA2)
    scenario["name"] = "mica2-full"
    scenario["energy"]["alpha"] = 1.0
    scenario["energy"]["initial_energy_J"] = 0.5
    return scenario


_PRESETS = {
    "mica2": _MICA2,
    "mica2-full": _mica2_full(),
}


def preset_names() -> List[str]:
    return sorted(_PRESETS.keys())


def preset_raw(name: str) -> Dict:
    if name not in _PRESETS:
        raise KeyError(f"Unknown preset '{name}', choose one of {', '.join(preset_names())}")
    return copy.deepcopy(_PRESETS[name])
