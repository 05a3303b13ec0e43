#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
import enum
import functools
import io
import json
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, TextIO, Tuple

import numpy as np

from .energy import EnergyParams, cycle_energy, e_mcu_switch, energy_error
from .lti import IntegratorStabilityError, InvalidParameterError, MsdParams, RK4_STABILITY_LIMIT
from .pid import PidGains

__all__ = ["LivelockError", "InsufficientTransitionsError", "McuMode", "Excitation", "HarvestConfig", "NodeState",
           "NodeRecord", "NodeTrace", "CycleReport", "initial_state", "harvest_power", "step_node", "run_sim",
           "detect_cycle", "recharge_times", "summary", "summary_json", "read_node_csv"]

logger = logging.getLogger(__name__)


class LivelockError(ValueError):
    pass


class InsufficientTransitionsError(ValueError):
    pass


class McuMode(enum.Enum):
    On = "on"
    Off = "off"


@dataclass(frozen=True)
class Excitation:
    amplitude_m: float
    frequency_rad_s: float

    def __post_init__(self):
        if not (self.amplitude_m >= 0.0 and self.frequency_rad_s > 0.0):
            raise InvalidParameterError(f"Excitation needs amplitude >= 0 and frequency > 0, got {self}")


@dataclass(frozen=True)
class HarvestConfig:
    plant: MsdParams
    electrical_damping_Ns_per_m: float
    excitation: Excitation
    controller: Optional[PidGains]
    dt_s: float = 2e-3
    capacity_J: float = 0.5
    distance_m: float = 50.0
    activity_window_s: Optional[float] = None
    setpoint_gain: float = 1.0

    def __post_init__(self):
        if not self.electrical_damping_Ns_per_m > 0.0:
            raise InvalidParameterError(f"Electrical damping must be positive, got {self.electrical_damping_Ns_per_m}")
        if not self.dt_s > 0.0:
            raise InvalidParameterError(f"Time step must be positive, got {self.dt_s}")
        if not self.capacity_J > 0.0:
            raise InvalidParameterError(f"Battery capacity must be positive, got {self.capacity_J}")
        if not self.distance_m >= 0.0:
            raise InvalidParameterError(f"Distance must be non-negative, got {self.distance_m}")
        if self.activity_window_s is not None and not self.activity_window_s > 0.0:
            raise InvalidParameterError(f"Activity window must be positive, got {self.activity_window_s}")
        if not self.setpoint_gain >= 0.0:
            raise InvalidParameterError(f"Setpoint gain must be non-negative, got {self.setpoint_gain}")

    def without_controller(self) -> "HarvestConfig":
        return HarvestConfig(self.plant, self.electrical_damping_Ns_per_m, self.excitation, None, self.dt_s,
                             self.capacity_J, self.distance_m, self.activity_window_s, self.setpoint_gain)


class NodeState(NamedTuple):
    residual_energy_J: float
    mode: McuMode
    plant_position_m: float
    plant_velocity_m_s: float
    time_s: float
    cycle_count: int
    integral_error: float = 0.0
    harvested_J: float = 0.0
    consumed_J: float = 0.0
    excitation_work_J: float = 0.0
    wake_switch_pending: bool = False


class NodeRecord(NamedTuple):
    t_s: float
    mode: McuMode
    residual_J: float
    harvested_J: float
    consumed_J: float
    z_m: float
    excitation_work_J: float = 0.0


@dataclass(frozen=True)
class NodeTrace:
    dt_s: float
    records: Tuple[NodeRecord, ...]

    def residuals(self) -> np.ndarray:
        return np.array([r.residual_J for r in self.records])

    def times(self) -> np.ndarray:
        return np.array([r.t_s for r in self.records])

    def write_csv(self, stream: TextIO):
        stream.write("t,mode,residual_J,harvested_J,consumed_J,z_m\n")
        for r in self.records:
            stream.write(f"{r.t_s:.17g},{r.mode.value},{r.residual_J:.17g},{r.harvested_J:.17g},"
                         f"{r.consumed_J:.17g},{r.z_m:.17g}\n")

    def to_csv(self) -> str:
        buffer = io.StringIO()
        self.write_csv(buffer)
        return buffer.getvalue()


def read_node_csv(stream: TextIO) -> NodeTrace:
    header = stream.readline().strip()
    if header != "t,mode,residual_J,harvested_J,consumed_J,z_m":
        raise InvalidParameterError(f"Not a node trace, unexpected header '{header}'")
    records = []
    for line in stream:
        if line.strip():
            t, mode, residual, harvested, consumed, z = line.strip().split(",")
            records.append(NodeRecord(float(t), McuMode(mode), float(residual), float(harvested), float(consumed),
                                      float(z)))
    dt = records[1].t_s - records[0].t_s if len(records) > 1 else 0.0
    return NodeTrace(dt, tuple(records))


class _StepPlan(NamedTuple):
    drain_per_step_J: float
    switch_J: float
    force_amplitude_N: float
    passive_amplitude_m: float
    passive_phase_rad: float


@functools.lru_cache(maxsize=32)
def _plan(params: EnergyParams, cfg: HarvestConfig) -> _StepPlan:
    """Validate a parameter/config pair once and precompute the per-step constants."""
    if cfg.capacity_J != params.battery_capacity_J:
        raise InvalidParameterError(f"Harvester capacity {cfg.capacity_J} J differs from the battery capacity "
                                    f"{params.battery_capacity_J} J")
    cycle = cycle_energy(params, cfg.distance_m).total_J
    budget = params.reference_energy_J - params.threshold_energy_J
    if cycle > budget:
        raise LivelockError(f"One activity cycle costs {cycle:.6g} J, more than RE - T = {budget:.6g} J, "
                            "the node could never complete a cycle between wake-up and sleep")
    window = cfg.activity_window_s or (params.t_active_s + params.t_sleep_s)

    m = cfg.plant.mass_kg
    k = cfg.plant.stiffness_N_per_m
    c = cfg.plant.damping_Ns_per_m + cfg.electrical_damping_Ns_per_m
    gains = cfg.controller or PidGains(0.0, 0.0, 0.0)
    # Modes of [z, z', integral of e] with the load and the controller connected
    a = np.array([[0.0, 1.0, 0.0],
                  [-(k + gains.kp) / m, -(c + gains.kd) / m, gains.ki / m],
                  [-1.0, 0.0, 0.0]])
    fastest = float(np.max(np.abs(np.linalg.eigvals(a))))
    if fastest * cfg.dt_s > RK4_STABILITY_LIMIT:
        raise IntegratorStabilityError(f"dt = {cfg.dt_s} s is too large for the harvester loop "
                                       f"(|lambda| = {fastest:.6g} rad/s)", 2.0 / fastest)

    w = cfg.excitation.frequency_rad_s
    force = m * cfg.excitation.amplitude_m * w ** 2
    amplitude = force / math.hypot(k - m * w ** 2, c * w)
    phase = math.atan2(c * w, k - m * w ** 2)
    return _StepPlan(drain_per_step_J=cycle * cfg.dt_s / window,
                     switch_J=e_mcu_switch(params),
                     force_amplitude_N=force,
                     passive_amplitude_m=amplitude,
                     passive_phase_rad=phase)


def initial_state(params: EnergyParams) -> NodeState:
    mode = McuMode.On if params.initial_energy_J >= params.threshold_energy_J else McuMode.Off
    return NodeState(residual_energy_J=params.initial_energy_J, mode=mode, plant_position_m=0.0,
                     plant_velocity_m_s=0.0, time_s=0.0, cycle_count=0)


def _damper_power(c_e: float, velocity: float) -> float:
    return c_e * velocity * velocity


def harvest_power(state: NodeState, cfg: HarvestConfig) -> float:
    """Power drawn through the electrical damper, only while the MCU is off.

    step_node integrates the same power over each Off step.
    """
    if state.mode is not McuMode.Off:
        return 0.0
    return _damper_power(cfg.electrical_damping_Ns_per_m, state.plant_velocity_m_s)


def _advance(state: NodeState, plan: _StepPlan, cfg: HarvestConfig, harvesting: bool,
             setpoint_scale: float) -> Tuple[float, float, float, float, float]:
    """One RK4 step of [z, z', integral of e, harvested energy, work of the base excitation]."""
    m = cfg.plant.mass_kg
    d = cfg.plant.damping_Ns_per_m
    k = cfg.plant.stiffness_N_per_m
    c_e = cfg.electrical_damping_Ns_per_m if harvesting else 0.0
    gains = cfg.controller if harvesting else None
    w = cfg.excitation.frequency_rad_s
    f0 = plan.force_amplitude_N
    r0 = setpoint_scale * plan.passive_amplitude_m
    phi = plan.passive_phase_rad

    def derivatives(t: float, z: float, v: float, xi: float) -> Tuple[float, float, float, float, float]:
        f = f0 * math.sin(w * t)
        u = 0.0
        e = 0.0
        if gains is not None:
            r = r0 * math.sin(w * t - phi)
            r_dot = r0 * w * math.cos(w * t - phi)
            e = r - z
            u = gains.kp * e + gains.ki * xi + gains.kd * (r_dot - v)
        acceleration = (f + u - (d + c_e) * v - k * z) / m
        return v, acceleration, e, _damper_power(c_e, v), f * v

    h = cfg.dt_s
    t = state.time_s
    y = (state.plant_position_m, state.plant_velocity_m_s, state.integral_error, 0.0, 0.0)
    k1 = derivatives(t, y[0], y[1], y[2])
    y2 = [y[i] + 0.5 * h * k1[i] for i in range(3)]
    k2 = derivatives(t + 0.5 * h, *y2)
    y3 = [y[i] + 0.5 * h * k2[i] for i in range(3)]
    k3 = derivatives(t + 0.5 * h, *y3)
    y4 = [y[i] + h * k3[i] for i in range(3)]
    k4 = derivatives(t + h, *y4)
    return tuple(y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(5))


def step_node(state: NodeState, params: EnergyParams, cfg: HarvestConfig) -> NodeState:
    plan = _plan(params, cfg)
    previous = state.residual_energy_J
    if state.mode is McuMode.On:
        z, v, _, _, work = _advance(state, plan, cfg, harvesting=False, setpoint_scale=1.0)
        consumed = plan.drain_per_step_J + (plan.switch_J if state.wake_switch_pending else 0.0)
        sleeping = previous - consumed < params.threshold_energy_J
        if sleeping:
            consumed += plan.switch_J
        consumed = min(consumed, previous)
        harvested = 0.0
        residual = harvested + previous - consumed
        mode = McuMode.Off if sleeping else McuMode.On
        if sleeping:
            logger.debug("t=%.4f s: residual %.6g J below threshold, MCU off", state.time_s, residual)
        return NodeState(residual_energy_J=residual, mode=mode, plant_position_m=z, plant_velocity_m_s=v,
                         time_s=state.time_s + cfg.dt_s,
                         cycle_count=state.cycle_count + (1 if sleeping else 0),
                         integral_error=0.0, harvested_J=harvested, consumed_J=consumed,
                         excitation_work_J=work, wake_switch_pending=False)

    error = max(energy_error(params.reference_energy_J, previous), 0.0)
    scale = 1.0 + cfg.setpoint_gain * error / params.reference_energy_J
    z, v, xi, gathered, work = _advance(state, plan, cfg, harvesting=True, setpoint_scale=scale)
    harvested = min(max(gathered, 0.0), cfg.capacity_J - previous)
    if harvested < gathered:
        logger.debug("t=%.4f s: battery full at %.6g J, harvest clamped", state.time_s, cfg.capacity_J)
    consumed = 0.0
    residual = harvested + previous - consumed
    waking = residual >= params.reference_energy_J
    if waking:
        logger.debug("t=%.4f s: residual %.6g J reached RE, MCU on", state.time_s, residual)
    return NodeState(residual_energy_J=residual, mode=McuMode.On if waking else McuMode.Off,
                     plant_position_m=z, plant_velocity_m_s=v, time_s=state.time_s + cfg.dt_s,
                     cycle_count=state.cycle_count, integral_error=xi, harvested_J=harvested,
                     consumed_J=consumed, excitation_work_J=work, wake_switch_pending=waking)


def run_sim(params: EnergyParams, cfg: HarvestConfig, t_end_s: float) -> NodeTrace:
    if not t_end_s >= 0.0:
        raise InvalidParameterError(f"End time must be non-negative, got {t_end_s}")
    _plan(params, cfg)
    state = initial_state(params)
    records = [NodeRecord(0.0, state.mode, state.residual_energy_J, 0.0, 0.0, 0.0)]
    clamped = False
    for _ in range(int(round(t_end_s / cfg.dt_s))):
        following = step_node(state, params, cfg)
        records.append(NodeRecord(following.time_s, state.mode, following.residual_energy_J, following.harvested_J,
                                  following.consumed_J, following.plant_position_m, following.excitation_work_J))
        if not clamped and state.mode is McuMode.Off and following.residual_energy_J >= cfg.capacity_J:
            logger.warning("Battery reached its capacity of %g J at t=%.3f s", cfg.capacity_J, following.time_s)
            clamped = True
        state = following
    logger.info("Simulated %d steps, %d sleep transitions", len(records) - 1, state.cycle_count)
    return NodeTrace(cfg.dt_s, tuple(records))


def _transitions(trace: NodeTrace, old: McuMode, new: McuMode) -> List[float]:
    # Time at which the step that switched modes ended
    records = trace.records
    return [records[i - 1].t_s for i in range(1, len(records))
            if records[i - 1].mode is old and records[i].mode is new]


class CycleReport(NamedTuple):
    periodic: bool
    period_s: float
    duty_fraction: float
    cycles: int


def detect_cycle(trace: NodeTrace, tolerance: float = 0.05) -> CycleReport:
    """Cycles run from one sleep transition to the next, an Off phase followed by an On phase."""
    sleeps = _transitions(trace, McuMode.On, McuMode.Off)
    if len(sleeps) < 3:
        raise InsufficientTransitionsError(f"Need at least 3 sleep transitions, got {len(sleeps)}")
    durations = np.diff(sleeps)
    periodic = bool(np.all(np.abs(np.diff(durations)) <= tolerance * durations[:-1]))
    start, end = sleeps[0], sleeps[-1]
    on_time = 0.0
    for before, record in zip(trace.records, trace.records[1:]):
        if record.mode is McuMode.On and start < record.t_s <= end:
            on_time += record.t_s - before.t_s
    return CycleReport(periodic=periodic, period_s=float(np.mean(durations)), duty_fraction=on_time / (end - start),
                       cycles=len(durations))


def recharge_times(trace: NodeTrace) -> List[float]:
    """Durations of complete Off phases, from falling asleep to waking up."""
    sleeps = _transitions(trace, McuMode.On, McuMode.Off)
    wakes = _transitions(trace, McuMode.Off, McuMode.On)
    durations = []
    for sleep in sleeps:
        following = [w for w in wakes if w > sleep]
        if following:
            durations.append(following[0] - sleep)
    return durations


def summary(trace: NodeTrace) -> dict:
    residuals = trace.residuals()
    sleeps = _transitions(trace, McuMode.On, McuMode.Off)
    try:
        report = detect_cycle(trace)
        periodic, period, duty = report.periodic, report.period_s, report.duty_fraction
    except InsufficientTransitionsError:
        periodic, period, duty = None, None, None
    return {"cycles": len(sleeps),
            "period_s": period,
            "duty_fraction": duty,
            "periodic": periodic,
            "min_residual_J": float(np.min(residuals)),
            "max_residual_J": float(np.max(residuals)),
            "recharge_times_s": recharge_times(trace)}


def summary_json(trace: NodeTrace) -> str:
    return json.dumps(summary(trace), indent=2) + "\n"
