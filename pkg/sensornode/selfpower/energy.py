#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
# Per-activity energy budget of a Mica2-class sensor node. All arithmetic is done in SI units,
# the mixed units of the parameter table are converted when a table is parsed.
#
import logging
import math
from dataclasses import MISSING, dataclass, fields
from typing import Dict, Tuple

__all__ = ["InvalidEnergyParamsError", "UnknownUnitError", "EnergyParams", "EnergyBreakdown",
           "e_sense", "e_process", "threshold_distance", "e_transmit", "transmit_branch", "e_receive",
           "e_mcu_switch", "cycle_energy", "energy_error", "battery_capacitance", "voltage_from_energy",
           "energy_error_from_voltage", "params_from_table", "params_to_table", "TABLE_FIELDS"]

logger = logging.getLogger(__name__)


class InvalidEnergyParamsError(ValueError):
    pass


class UnknownUnitError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyParams:
    vdc_V: float
    i_sens_A: float
    t_sens_s_per_bit: float
    i_write_A: float
    t_write_s: float
    i_read_A: float
    t_read_s: float
    i_active_A: float
    t_active_s: float
    i_sleep_A: float
    t_sleep_s: float
    e_elec_J_per_bit: float
    e_fs_J_per_bit_m2: float
    e_mp_J_per_bit_m4: float
    packet_bits: float
    alpha: float
    reference_energy_J: float
    threshold_energy_J: float
    initial_energy_J: float
    aggregation_energy_J: float = 0.0
    battery_capacity_J: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0.0):
                raise InvalidEnergyParamsError(f"{f.name} must be a finite non-negative number, got {value!r}")
        if not self.vdc_V > 0.0:
            raise InvalidEnergyParamsError(f"Supply voltage must be positive, got {self.vdc_V}")
        if not self.packet_bits > 0.0:
            raise InvalidEnergyParamsError(f"Packet size must be positive, got {self.packet_bits}")
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidEnergyParamsError(f"Compression fraction alpha must lie in (0, 1], got {self.alpha}")
        if not self.threshold_energy_J < self.reference_energy_J <= self.battery_capacity_J:
            raise InvalidEnergyParamsError(f"Need threshold < reference <= capacity, got T={self.threshold_energy_J}, "
                                           f"RE={self.reference_energy_J}, capacity={self.battery_capacity_J}")
        if self.initial_energy_J > self.battery_capacity_J:
            raise InvalidEnergyParamsError(f"Initial energy {self.initial_energy_J} J exceeds the capacity "
                                           f"{self.battery_capacity_J} J")

    @property
    def data_bits(self) -> float:
        # Retained message length after compression
        return self.alpha * self.packet_bits


@dataclass(frozen=True)
class EnergyBreakdown:
    sense_J: float
    process_J: float
    transmit_J: float
    receive_J: float
    mcu_switch_J: float

    @property
    def total_J(self) -> float:
        return self.sense_J + self.process_J + self.transmit_J + self.receive_J + self.mcu_switch_J

    def to_dict(self) -> dict:
        return {"sense_J": self.sense_J,
                "process_J": self.process_J,
                "transmit_J": self.transmit_J,
                "receive_J": self.receive_J,
                "mcu_switch_J": self.mcu_switch_J,
                "total_J": self.total_J}


def e_sense(p: EnergyParams) -> float:
    return p.data_bits * p.vdc_V * p.i_sens_A * p.t_sens_s_per_bit


def e_process(p: EnergyParams) -> float:
    # Memory write and read per byte of retained data
    return p.data_bits * p.vdc_V / 8.0 * (p.i_write_A * p.t_write_s + p.i_read_A * p.t_read_s)


def threshold_distance(p: EnergyParams) -> float:
    if not (p.e_fs_J_per_bit_m2 > 0.0 and p.e_mp_J_per_bit_m4 > 0.0):
        raise InvalidEnergyParamsError("Crossover distance needs positive free-space and multipath amplifier constants")
    return math.sqrt(p.e_fs_J_per_bit_m2 / p.e_mp_J_per_bit_m4)


def _crossover(p: EnergyParams) -> float:
    if p.e_mp_J_per_bit_m4 == 0.0:
        return math.inf
    return math.sqrt(p.e_fs_J_per_bit_m2 / p.e_mp_J_per_bit_m4)


def transmit_branch(p: EnergyParams, distance_m: float) -> str:
    return "free_space" if distance_m < _crossover(p) else "multipath"


def e_transmit(p: EnergyParams, distance_m: float) -> float:
    if not distance_m >= 0.0:
        raise InvalidEnergyParamsError(f"Distance must be non-negative, got {distance_m}")
    electronics = p.data_bits * p.e_elec_J_per_bit
    if transmit_branch(p, distance_m) == "free_space":
        return electronics + p.data_bits * p.e_fs_J_per_bit_m2 * distance_m ** 2
    return electronics + p.data_bits * p.e_mp_J_per_bit_m4 * distance_m ** 4


def e_receive(p: EnergyParams) -> float:
    return p.data_bits * p.e_elec_J_per_bit


def e_mcu_switch(p: EnergyParams) -> float:
    return p.vdc_V * (p.i_active_A * p.t_active_s + p.i_sleep_A * p.t_sleep_s)


def cycle_energy(p: EnergyParams, distance_m: float) -> EnergyBreakdown:
    return EnergyBreakdown(sense_J=e_sense(p),
                           process_J=e_process(p),
                           transmit_J=e_transmit(p, distance_m),
                           receive_J=e_receive(p),
                           mcu_switch_J=e_mcu_switch(p))


def energy_error(re_J: float, er_J: float) -> float:
    if re_J < 0.0 or er_J < 0.0:
        raise InvalidEnergyParamsError(f"Energies must be non-negative, got RE={re_J}, E_r={er_J}")
    return re_J - er_J


def battery_capacitance(p: EnergyParams) -> float:
    """Capacitance of the storage element that holds the full capacity at the supply voltage."""
    return 2.0 * p.battery_capacity_J / p.vdc_V ** 2


def voltage_from_energy(p: EnergyParams, energy_J: float) -> float:
    return math.sqrt(2.0 * energy_J / battery_capacitance(p))


def energy_error_from_voltage(p: EnergyParams, v_ref: float, v_r: float) -> float:
    return 0.5 * battery_capacitance(p) * (v_ref ** 2 - v_r ** 2)


# Unit suffixes accepted in parameter tables, grouped by dimension, as factors to SI
_UNITS = {
    "voltage": {"V": 1.0, "mV": 1e-3},
    "current": {"A": 1.0, "mA": 1e-3, "uA": 1e-6},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6},
    "time_per_bit": {"s_per_bit": 1.0, "ms_per_bit": 1e-3, "us_per_bit": 1e-6, "ms": 1e-3, "us": 1e-6, "s": 1.0},
    "energy": {"J": 1.0, "mJ": 1e-3, "uJ": 1e-6, "nJ": 1e-9, "pJ": 1e-12},
    "energy_per_bit": {"J_per_bit": 1.0, "nJ_per_bit": 1e-9, "pJ_per_bit": 1e-12},
    "energy_per_bit_m2": {"J_per_bit_m2": 1.0, "nJ_per_bit_m2": 1e-9, "pJ_per_bit_m2": 1e-12},
    "energy_per_bit_m4": {"J_per_bit_m4": 1.0, "nJ_per_bit_m4": 1e-9, "pJ_per_bit_m4": 1e-12},
    "count": {"bits": 1.0},
    "fraction": {"": 1.0, "percent": 1e-2},
}

# (table name, field, dimension, unit used when writing a table)
TABLE_FIELDS: Tuple[Tuple[str, str, str, str], ...] = (
    ("vdc", "vdc_V", "voltage", "V"),
    ("i_sens", "i_sens_A", "current", "mA"),
    ("t_sens", "t_sens_s_per_bit", "time_per_bit", "ms"),
    ("i_write", "i_write_A", "current", "mA"),
    ("t_write", "t_write_s", "time", "ms"),
    ("i_read", "i_read_A", "current", "mA"),
    ("t_read", "t_read_s", "time", "us"),
    ("i_active", "i_active_A", "current", "mA"),
    ("t_active", "t_active_s", "time", "ms"),
    ("i_sleep", "i_sleep_A", "current", "uA"),
    ("t_sleep", "t_sleep_s", "time", "ms"),
    ("e_elec", "e_elec_J_per_bit", "energy_per_bit", "nJ_per_bit"),
    ("e_fs", "e_fs_J_per_bit_m2", "energy_per_bit_m2", "pJ_per_bit_m2"),
    ("e_mp", "e_mp_J_per_bit_m4", "energy_per_bit_m4", "pJ_per_bit_m4"),
    ("packet", "packet_bits", "count", "bits"),
    ("alpha", "alpha", "fraction", ""),
    ("reference_energy", "reference_energy_J", "energy", "J"),
    ("threshold_energy", "threshold_energy_J", "energy", "J"),
    ("initial_energy", "initial_energy_J", "energy", "J"),
    ("aggregation_energy", "aggregation_energy_J", "energy", "J"),
    ("battery_capacity", "battery_capacity_J", "energy", "J"),
)


def _table_key(name: str, unit: str) -> str:
    return f"{name}_{unit}" if unit else name


def _parse_key(key: str) -> Tuple[str, float]:
    # Longest names first, so that "t_sens" never swallows a longer name
    for name, field_name, dimension, _ in sorted(TABLE_FIELDS, key=lambda f: -len(f[0])):
        if key == name:
            unit = ""
        elif key.startswith(name + "_"):
            unit = key[len(name) + 1:]
        else:
            continue
        units = _UNITS[dimension]
        if unit not in units:
            raise UnknownUnitError(f"Unknown unit '{unit}' in '{key}', {name} accepts "
                                   f"{', '.join(u or '(none)' for u in units)}")
        return field_name, units[unit]
    raise UnknownUnitError(f"Unknown energy parameter '{key}'")


def params_from_table(table: Dict[str, float]) -> EnergyParams:
    """Build parameters from a table whose keys carry unit suffixes, e.g. {"i_sens_mA": 25, ...}."""
    values = {}
    for key, value in table.items():
        field_name, factor = _parse_key(key)
        if field_name in values:
            raise InvalidEnergyParamsError(f"Parameter {field_name} given twice (last as '{key}')")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidEnergyParamsError(f"'{key}' must be a number, got {value!r}")
        values[field_name] = float(value) * factor
    missing = [f.name for f in fields(EnergyParams) if f.default is MISSING and f.name not in values]
    if missing:
        raise InvalidEnergyParamsError(f"Missing energy parameters: {', '.join(missing)}")
    if values.get("aggregation_energy_J", 0.0) > 0.0:
        logger.info("Aggregation energy %g J is carried but not part of the cycle energy", values["aggregation_energy_J"])
    return EnergyParams(**values)


def params_to_table(p: EnergyParams) -> Dict[str, float]:
    table = {}
    for name, field_name, dimension, unit in TABLE_FIELDS:
        table[_table_key(name, unit)] = getattr(p, field_name) / _UNITS[dimension][unit]
    return table
