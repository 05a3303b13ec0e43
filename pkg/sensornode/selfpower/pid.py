#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np
from scipy import signal

from .lti import (InvalidParameterError, Polynomial, SimSample, SimTrace, TransferFunction, dc_gain, to_state_space,
                  unity_feedback)

__all__ = ["NoUltimateGainError", "ClosedLoopMismatchError", "PidGains", "UltimateParams", "OscillationSearchConfig",
           "OscillationMeasurement", "pid_tf", "zn_gains", "closed_loop", "sampled_loop_trace", "measure_oscillation",
           "find_ultimate", "tuning_report", "explain_table", "GAIN_EFFECTS"]

logger = logging.getLogger(__name__)

# Samples above this deviation from the set point count as a diverged loop
DIVERGENCE_LIMIT = 1e8


class NoUltimateGainError(ValueError):
    pass


class ClosedLoopMismatchError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float
    kd: float

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            value = getattr(self, name)
            if not (value >= 0.0 and math.isfinite(value)):
                raise InvalidParameterError(f"PID gain {name} must be a finite non-negative number, got {value}")

    def to_dict(self) -> dict:
        return {"kp": self.kp, "ki": self.ki, "kd": self.kd}


@dataclass(frozen=True)
class UltimateParams:
    ku: float
    tu_s: float

    def __post_init__(self):
        if not (self.ku > 0.0 and self.tu_s > 0.0):
            raise InvalidParameterError(f"Ultimate gain and period must be positive, got Ku={self.ku}, Tu={self.tu_s}")


@dataclass(frozen=True)
class OscillationSearchConfig:
    sample_period_s: float = 0.05
    gain_lo: float = 0.0
    gain_hi: float = 100.0
    gain_tolerance: float = 1e-3
    cycles_required: int = 5
    amplitude_ratio_band: float = 0.05
    horizon_s: float = 200.0

    def __post_init__(self):
        if not self.sample_period_s > 0.0:
            raise InvalidParameterError(f"Sample period must be positive, got {self.sample_period_s}")
        if not 0.0 <= self.gain_lo < self.gain_hi:
            raise InvalidParameterError(f"Gain range must satisfy 0 <= lo < hi, got [{self.gain_lo}, {self.gain_hi}]")
        if not 0.0 < self.gain_tolerance < 1.0:
            raise InvalidParameterError(f"Relative gain tolerance must lie in (0, 1), got {self.gain_tolerance}")
        if self.cycles_required < 3:
            raise InvalidParameterError(f"At least three cycles are required, got {self.cycles_required}")
        if not 0.0 < self.amplitude_ratio_band < 0.5:
            raise InvalidParameterError(f"Amplitude ratio band must lie in (0, 0.5), got {self.amplitude_ratio_band}")
        if not self.horizon_s > 10.0 * self.sample_period_s:
            raise InvalidParameterError(f"Horizon {self.horizon_s} s is too short for h = {self.sample_period_s} s")


def pid_tf(gains: PidGains) -> TransferFunction:
    # U(s) = (kd s^2 + kp s + ki) / s
    return TransferFunction([gains.kd, gains.kp, gains.ki], [1.0, 0.0])


def zn_gains(ultimate: UltimateParams) -> PidGains:
    # Classic Ziegler-Nichols closed-loop rule: Kp = 0.6 Ku, Ti = Tu / 2, Td = Tu / 8
    kp = 0.6 * ultimate.ku
    return PidGains(kp=kp, ki=1.2 * ultimate.ku / ultimate.tu_s, kd=0.075 * ultimate.ku * ultimate.tu_s)


def _same_rational(first: TransferFunction, second: TransferFunction, rel_tol: float = 1e-9) -> bool:
    a = first.normalized()
    b = second.normalized()
    for p, q in ((a.num, b.num), (a.den, b.den)):
        if p.degree != q.degree:
            return False
        scale = max(max(abs(c) for c in p.coeffs), 1e-300)
        if not np.allclose(p.coeffs, q.coeffs, rtol=rel_tol, atol=rel_tol * scale):
            return False
    return True


def closed_loop(plant: TransferFunction, gains: PidGains) -> TransferFunction:
    """Reference-to-output transfer function of a mass-spring-damper under PID control.

    For P = b / (M s^2 + D s + K) this is
        b (kd s^2 + kp s + ki) / (M s^3 + (D + b kd) s^2 + (K + b kp) s + b ki)
    The explicit form is cross-checked against the generic unity feedback composition.
    """
    if plant.num.degree != 0 or plant.den.degree != 2:
        raise InvalidParameterError(f"closed_loop expects a mass-spring-damper plant b / (M s^2 + D s + K), got {plant}")
    b = plant.num.leading
    m, d, k = plant.den.coeffs
    explicit = TransferFunction(Polynomial([b * gains.kd, b * gains.kp, b * gains.ki]),
                                Polynomial([m, d + b * gains.kd, k + b * gains.kp, b * gains.ki])).cancel_origin()
    generic = unity_feedback(plant, pid_tf(gains)).complementary.cancel_origin()
    if not _same_rational(explicit, generic):
        raise ClosedLoopMismatchError(f"Closed loop {explicit} disagrees with feedback composition {generic}")
    return explicit


def sampled_loop_trace(plant: TransferFunction, gain: float, config: OscillationSearchConfig,
                       setpoint: float = 1.0) -> SimTrace:
    """Proportional-only loop sampled with a zero-order hold, u_k = gain * (setpoint - y_k).

    The input column of the trace holds the controller output. The run stops early once the
    loop has diverged.
    """
    ss = to_state_space(plant)
    if ss.order == 0:
        raise InvalidParameterError(f"Plant {plant} is static, it cannot oscillate")
    h = config.sample_period_s
    ad, bd, cd, dd, _ = signal.cont2discrete((ss.a, ss.b, ss.c, np.array([[ss.d]])), h, method="zoh")
    bd = bd[:, 0]
    cd = cd[0]
    feedthrough = float(dd[0, 0])
    b = ss.b[:, 0]
    c = ss.c[0]
    limit = DIVERGENCE_LIMIT * max(1.0, abs(setpoint))
    x = np.zeros(ss.order)
    samples = []
    for k in range(int(round(config.horizon_s / h)) + 1):
        y_free = float(cd @ x)
        u = gain * (setpoint - y_free) / (1.0 + gain * feedthrough)
        y = y_free + feedthrough * u
        samples.append(SimSample(k * h, u, y, float(c @ (ss.a @ x + b * u))))
        if abs(y) > limit:
            break
        x = ad @ x + bd * u
    return SimTrace(h, tuple(samples))


class OscillationMeasurement(NamedTuple):
    peak_times_s: List[float]
    peak_amplitudes: List[float]
    growth_rate_per_s: float
    period_s: float
    diverged: bool

    @property
    def decaying(self) -> bool:
        return self.growth_rate_per_s < 0.0

    def amplitude_ratios(self) -> List[float]:
        return [b / a for a, b in zip(self.peak_amplitudes, self.peak_amplitudes[1:])]

    def sustained(self, cycles_required: int, band: float) -> bool:
        run = 0
        for ratio in self.amplitude_ratios():
            run = run + 1 if abs(ratio - 1.0) <= band else 0
            if run >= cycles_required:
                return True
        return False


def measure_oscillation(trace: SimTrace, level: float) -> OscillationMeasurement:
    """Find the peaks of (output - level) and fit an exponential envelope through them."""
    deviation = trace.outputs() - level
    times = trace.times()
    diverged = abs(deviation[-1]) > DIVERGENCE_LIMIT * max(1.0, abs(level))
    indices, _ = signal.find_peaks(deviation)
    peak_times = []
    peak_values = []
    for i in indices:
        y0, y1, y2 = deviation[i - 1], deviation[i], deviation[i + 1]
        curvature = y0 - 2.0 * y1 + y2
        offset = 0.5 * (y0 - y2) / curvature if curvature != 0.0 else 0.0
        peak_times.append(float(times[i] + offset * trace.dt_s))
        peak_values.append(float(y1 - 0.25 * (y0 - y2) * offset))
    if peak_values:
        floor = 1e-9 * max(abs(v) for v in peak_values)
        kept = [(t, v) for t, v in zip(peak_times, peak_values) if v > floor]
        peak_times = [t for t, _ in kept]
        peak_values = [v for _, v in kept]
    if len(peak_values) < 3:
        growth = math.inf if diverged else -math.inf
        return OscillationMeasurement(peak_times, peak_values, growth, math.nan, diverged)
    growth = float(np.polyfit(peak_times, np.log(peak_values), 1)[0])
    period = float(np.mean(np.diff(peak_times)))
    return OscillationMeasurement(peak_times, peak_values, growth, period, diverged)


def _closed_loop_level(plant_gain: float, gain: float, setpoint: float = 1.0) -> float:
    return setpoint * gain * plant_gain / (1.0 + gain * plant_gain)


def find_ultimate(plant: TransferFunction, config: Optional[OscillationSearchConfig] = None) -> UltimateParams:
    """Bisect the proportional gain at which the sampled loop neither decays nor grows.

    The result depends on config.sample_period_s: a continuous second-order plant never
    oscillates under pure proportional feedback, the boundary comes from the sampling delay.
    """
    config = config or OscillationSearchConfig()
    poles = plant.poles()
    if len(poles) == 0 or np.any(poles.real >= 0.0):
        raise InvalidParameterError(f"Plant {plant} must be dynamic and open-loop stable for the oscillation search")
    plant_gain = dc_gain(plant)

    def measure(gain: float) -> OscillationMeasurement:
        return measure_oscillation(sampled_loop_trace(plant, gain, config), _closed_loop_level(plant_gain, gain))

    lo, hi = config.gain_lo, config.gain_hi
    if not measure(lo).decaying:
        raise NoUltimateGainError(f"The sampled loop already fails to decay at the lower gain {lo}, "
                                  f"lower gain_lo (h = {config.sample_period_s} s)")
    if measure(hi).decaying:
        raise NoUltimateGainError(f"No ultimate gain in [{lo}, {hi}] for h = {config.sample_period_s} s. "
                                  "The oscillation boundary of a sampled loop moves with the sample period, "
                                  "widen the gain range or use a longer sample period")
    while hi - lo > config.gain_tolerance * hi:
        mid = 0.5 * (lo + hi)
        if measure(mid).decaying:
            lo = mid
        else:
            hi = mid
        logger.debug("Ultimate gain bracket [%.6g, %.6g]", lo, hi)

    boundary = measure(hi)
    if not boundary.sustained(config.cycles_required, config.amplitude_ratio_band):
        raise NoUltimateGainError(f"The loop at gain {hi:.6g} does not hold {config.cycles_required} cycles within "
                                  f"{100.0 * config.amplitude_ratio_band:g}% amplitude ratio "
                                  f"(h = {config.sample_period_s} s)")
    logger.info("Ultimate gain %.6g, period %.6g s at h = %g s", hi, boundary.period_s, config.sample_period_s)
    return UltimateParams(ku=hi, tu_s=boundary.period_s)


def tuning_report(ultimate: UltimateParams, gains: PidGains, sample_period_s: Optional[float] = None) -> dict:
    return {"ku": ultimate.ku,
            "tu_s": ultimate.tu_s,
            "kp": gains.kp,
            "ki": gains.ki,
            "kd": gains.kd,
            "sample_period_s": sample_period_s}


# Qualitative effect of raising one gain on the closed-loop step response
GAIN_EFFECTS = [
    ("kp", "decrease", "increase", "small change", "decrease", "degrade"),
    ("ki", "decrease", "increase", "increase", "eliminate", "degrade"),
    ("kd", "minor change", "decrease", "decrease", "no effect", "improve if kd small"),
]
GAIN_EFFECT_COLUMNS = ["gain", "rise time", "overshoot", "settling time", "steady-state error", "stability"]


def explain_table() -> str:
    widths = [max(len(str(row[i])) for row in [GAIN_EFFECT_COLUMNS] + GAIN_EFFECTS) for i in range(len(GAIN_EFFECT_COLUMNS))]
    lines = []
    for row in [GAIN_EFFECT_COLUMNS] + GAIN_EFFECTS:
        lines.append("  ".join(str(cell).ljust(width) for cell, width in zip(row, widths)).rstrip())
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines) + "\n"
