#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
import io
import logging
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, TextIO, Tuple, Union

import numpy as np
from scipy import signal

__all__ = ["InvalidParameterError", "ImproperTransferFunctionError", "ZeroDenominatorError", "PoleAtOriginError",
           "IntegratorStabilityError", "NotSettledError",
           "Polynomial", "TransferFunction", "MsdParams", "StateSpace", "SimSample", "SimTrace", "StepMetrics",
           "FeedbackLoop",
           "msd_plant", "dc_gain", "unity_feedback", "to_state_space", "to_transfer_function", "rk4_propagator",
           "simulate_step", "step_metrics", "read_trace_csv"]

logger = logging.getLogger(__name__)

# Largest |lambda|*dt we accept for the classical RK4 scheme (its real-axis stability limit is about 2.785)
RK4_STABILITY_LIMIT = 2.5


class InvalidParameterError(ValueError):
    pass


class ImproperTransferFunctionError(ValueError):
    pass


class ZeroDenominatorError(ArithmeticError):
    pass


class PoleAtOriginError(ArithmeticError):
    pass


class IntegratorStabilityError(ValueError):
    def __init__(self, message: str, suggested_dt_s: float):
        super().__init__(message)
        self.suggested_dt_s = suggested_dt_s


class NotSettledError(ValueError):
    pass


class Polynomial:
    """Real polynomial, coefficients in descending powers. The zero polynomial is stored as (0.0,)."""

    def __init__(self, coeffs: Union["Polynomial", Iterable[float], float]):
        if isinstance(coeffs, Polynomial):
            values = list(coeffs.coeffs)
        elif isinstance(coeffs, (int, float)):
            values = [float(coeffs)]
        else:
            values = [float(c) for c in coeffs]
        first = next((i for i, c in enumerate(values) if c != 0.0), len(values))
        self._coeffs = tuple(values[first:]) or (0.0,)

    @property
    def coeffs(self) -> Tuple[float, ...]:
        return self._coeffs

    @property
    def degree(self) -> int:
        return len(self._coeffs) - 1

    @property
    def leading(self) -> float:
        return self._coeffs[0]

    def is_zero(self) -> bool:
        return self._coeffs == (0.0,)

    def trailing_zeros(self) -> int:
        # Multiplicity of the root at s = 0
        if self.is_zero():
            return 0
        count = 0
        for c in reversed(self._coeffs):
            if c != 0.0:
                break
            count += 1
        return count

    def __call__(self, s):
        return np.polyval(self._coeffs, s)

    def __add__(self, other) -> "Polynomial":
        return Polynomial(np.polyadd(self._coeffs, Polynomial(other).coeffs))

    __radd__ = __add__

    def __sub__(self, other) -> "Polynomial":
        return Polynomial(np.polysub(self._coeffs, Polynomial(other).coeffs))

    def __neg__(self) -> "Polynomial":
        return Polynomial([-c for c in self._coeffs])

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            return Polynomial([c * other for c in self._coeffs])
        return Polynomial(np.convolve(self._coeffs, Polynomial(other).coeffs))

    __rmul__ = __mul__

    def derivative(self) -> "Polynomial":
        if self.degree == 0:
            return Polynomial([0.0])
        return Polynomial(np.polyder(np.array(self._coeffs)))

    def divide_by_s(self, power: int) -> "Polynomial":
        if power > self.trailing_zeros():
            raise InvalidParameterError(f"{self} is not divisible by s^{power}")
        return Polynomial(self._coeffs[:len(self._coeffs) - power]) if power else self

    def __eq__(self, other) -> bool:
        if isinstance(other, Polynomial):
            return self._coeffs == other._coeffs
        return NotImplemented

    def __hash__(self):
        return hash(self._coeffs)

    def __repr__(self) -> str:
        return f"Polynomial({list(self._coeffs)})"


class TransferFunction:
    """Rational function num(s)/den(s) in the Laplace variable."""

    def __init__(self, num, den):
        self._num = Polynomial(num)
        self._den = Polynomial(den)
        if self._den.is_zero():
            raise ZeroDenominatorError("Transfer function denominator is the zero polynomial")

    @property
    def num(self) -> Polynomial:
        return self._num

    @property
    def den(self) -> Polynomial:
        return self._den

    def is_proper(self) -> bool:
        return self._num.degree <= self._den.degree or self._num.is_zero()

    def __call__(self, s):
        return self._num(s) / self._den(s)

    def __mul__(self, other: "TransferFunction") -> "TransferFunction":
        # Series connection
        return TransferFunction(self._num * other.num, self._den * other.den)

    def poles(self) -> np.ndarray:
        if self._den.degree == 0:
            return np.array([], dtype=complex)
        return np.roots(self._den.coeffs)

    def cancel_origin(self) -> "TransferFunction":
        """Cancel common factors of s between numerator and denominator."""
        common = min(self._num.trailing_zeros(), self._den.trailing_zeros())
        if common == 0:
            return self
        return TransferFunction(self._num.divide_by_s(common), self._den.divide_by_s(common))

    def normalized(self) -> "TransferFunction":
        lead = self._den.leading
        return TransferFunction(self._num * (1.0 / lead), self._den * (1.0 / lead))

    def __repr__(self) -> str:
        return f"TransferFunction(num={list(self._num.coeffs)}, den={list(self._den.coeffs)})"


@dataclass(frozen=True)
class MsdParams:
    mass_kg: float
    damping_Ns_per_m: float
    stiffness_N_per_m: float

    def __post_init__(self):
        for name in ("mass_kg", "damping_Ns_per_m", "stiffness_N_per_m"):
            value = getattr(self, name)
            if not value > 0.0:
                raise InvalidParameterError(f"Mass-spring-damper parameter {name} must be positive, got {value}")

    @property
    def natural_frequency_rad_s(self) -> float:
        return math.sqrt(self.stiffness_N_per_m / self.mass_kg)

    @property
    def damping_ratio(self) -> float:
        return self.damping_Ns_per_m / (2.0 * math.sqrt(self.mass_kg * self.stiffness_N_per_m))


def msd_plant(params: MsdParams) -> TransferFunction:
    # Displacement per unit force: 1 / (M s^2 + D s + K)
    return TransferFunction([1.0], [params.mass_kg, params.damping_Ns_per_m, params.stiffness_N_per_m])


def dc_gain(tf: TransferFunction) -> float:
    den_at_zero = tf.den.coeffs[-1]
    if den_at_zero == 0.0:
        raise PoleAtOriginError(f"{tf} has a pole at the origin, the DC gain is unbounded")
    return tf.num.coeffs[-1] / den_at_zero


class FeedbackLoop(NamedTuple):
    sensitivity: TransferFunction
    complementary: TransferFunction
    input_sensitivity: TransferFunction


def unity_feedback(plant: TransferFunction, controller: TransferFunction) -> FeedbackLoop:
    # With P = Np/Dp and U = Nu/Du all three loop functions share the denominator Dp*Du + Np*Nu
    open_den = plant.den * controller.den
    open_num = plant.num * controller.num
    closed_den = open_den + open_num
    if closed_den.is_zero():
        raise ZeroDenominatorError(f"1 + P*U vanishes identically for P={plant}, U={controller}")
    return FeedbackLoop(sensitivity=TransferFunction(open_den, closed_den),
                        complementary=TransferFunction(open_num, closed_den),
                        input_sensitivity=TransferFunction(controller.num * plant.den, closed_den))


class StateSpace:
    """Single-input single-output realization x' = A x + B u, y = C x + D u."""

    def __init__(self, a: np.ndarray, b: np.ndarray, c: np.ndarray, d: float):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.d = float(d)

    @property
    def order(self) -> int:
        return self.a.shape[0]

    def __repr__(self) -> str:
        return f"StateSpace(a={self.a.tolist()}, b={self.b.tolist()}, c={self.c.tolist()}, d={self.d})"


def to_state_space(tf: TransferFunction) -> StateSpace:
    """Controllable canonical form of a proper transfer function."""
    if not tf.is_proper():
        raise ImproperTransferFunctionError(f"{tf} is improper, it has no state-space realization")
    if tf.den.degree == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), tf.num.coeffs[-1] / tf.den.leading)
    a, b, c, d = signal.tf2ss(tf.num.coeffs, tf.den.coeffs)
    return StateSpace(a, b, c, d[0, 0])


def to_transfer_function(ss: StateSpace) -> TransferFunction:
    if ss.order == 0:
        return TransferFunction([ss.d], [1.0])
    num, den = signal.ss2tf(ss.a, ss.b, ss.c, np.array([[ss.d]]))
    num = np.real(num[0])
    den = np.real(den)
    # Leading terms that cancel in ss2tf come back as rounding noise
    num[np.abs(num) <= 1e-12 * np.max(np.abs(den))] = 0.0
    return TransferFunction(num, den)


def rk4_propagator(a: np.ndarray, b: np.ndarray, dt_s: float) -> Tuple[np.ndarray, np.ndarray]:
    """One classical RK4 step of x' = A x + B u with u held constant, in closed matrix form.

    x_next = phi @ x + gamma * u
    """
    order = a.shape[0]
    eye = np.eye(order)
    ah = a * dt_s
    ah2 = ah @ ah
    ah3 = ah2 @ ah
    ah4 = ah3 @ ah
    phi = eye + ah + ah2 / 2.0 + ah3 / 6.0 + ah4 / 24.0
    gamma = dt_s * (eye + ah / 2.0 + ah2 / 6.0 + ah3 / 24.0) @ b[:, 0]
    return phi, gamma


class SimSample(NamedTuple):
    t_s: float
    input: float
    output: float
    derivative_of_output: float


@dataclass(frozen=True)
class SimTrace:
    dt_s: float
    samples: Tuple[SimSample, ...]

    def times(self) -> np.ndarray:
        return np.array([s.t_s for s in self.samples])

    def inputs(self) -> np.ndarray:
        return np.array([s.input for s in self.samples])

    def outputs(self) -> np.ndarray:
        return np.array([s.output for s in self.samples])

    def write_csv(self, stream: TextIO):
        stream.write("t,input,output,doutput\n")
        for s in self.samples:
            stream.write(f"{s.t_s:.17g},{s.input:.17g},{s.output:.17g},{s.derivative_of_output:.17g}\n")

    def to_csv(self) -> str:
        buffer = io.StringIO()
        self.write_csv(buffer)
        return buffer.getvalue()


def read_trace_csv(stream: TextIO) -> SimTrace:
    header = stream.readline().strip()
    if header != "t,input,output,doutput":
        raise InvalidParameterError(f"Not a step trace, unexpected header '{header}'")
    samples = [SimSample(*[float(v) for v in line.split(",")]) for line in stream if line.strip()]
    dt = samples[1].t_s - samples[0].t_s if len(samples) > 1 else 0.0
    return SimTrace(dt, tuple(samples))


def simulate_step(tf: TransferFunction, dt_s: float, t_end_s: float, amplitude: float = 1.0) -> SimTrace:
    if not dt_s > 0.0:
        raise InvalidParameterError(f"Time step must be positive, got {dt_s}")
    if t_end_s < dt_s:
        raise InvalidParameterError(f"End time {t_end_s} s is shorter than one time step {dt_s} s")
    ss = to_state_space(tf)
    if ss.order > 0:
        fastest = float(np.max(np.abs(np.linalg.eigvals(ss.a))))
        if fastest * dt_s > RK4_STABILITY_LIMIT:
            suggested = 2.0 / fastest
            raise IntegratorStabilityError(f"dt = {dt_s} s is too large for the pole at |lambda| = {fastest:.6g} rad/s "
                                           f"(|lambda|*dt = {fastest * dt_s:.3g} > {RK4_STABILITY_LIMIT}), "
                                           f"use dt <= {suggested:.3g} s", suggested)
    phi, gamma = rk4_propagator(ss.a, ss.b, dt_s)
    b = ss.b[:, 0]
    c = ss.c[0]
    steps = int(round(t_end_s / dt_s))
    x = np.zeros(ss.order)
    samples = []
    for k in range(steps + 1):
        x_dot = ss.a @ x + b * amplitude
        samples.append(SimSample(k * dt_s, amplitude, float(c @ x + ss.d * amplitude), float(c @ x_dot)))
        x = phi @ x + gamma * amplitude
    logger.debug("Simulated %d steps of %s with dt=%g", steps, tf, dt_s)
    return SimTrace(dt_s, tuple(samples))


@dataclass(frozen=True)
class StepMetrics:
    dc_gain: float
    rise_time_s: float
    settling_time_s: float
    percent_overshoot: float
    peak_value: float
    peak_time_s: float

    def to_dict(self) -> dict:
        return {"dc_gain": self.dc_gain,
                "rise_time_s": self.rise_time_s,
                "settling_time_s": self.settling_time_s,
                "percent_overshoot": self.percent_overshoot,
                "peak_value": self.peak_value,
                "peak_time_s": self.peak_time_s}


def _first_crossing(t: np.ndarray, w: np.ndarray, level: float) -> float:
    above = np.nonzero(w >= level)[0]
    if len(above) == 0:
        raise NotSettledError(f"Response never reaches {level:.6g}")
    i = above[0]
    if i == 0:
        return float(t[0])
    return float(t[i - 1] + (level - w[i - 1]) / (w[i] - w[i - 1]) * (t[i] - t[i - 1]))


def step_metrics(trace: SimTrace, settle_band: float = 0.02) -> StepMetrics:
    t = trace.times()
    y = trace.outputs()
    if len(y) < 2:
        raise NotSettledError("A step trace needs at least two samples")
    tail = max(1, int(math.ceil(0.05 * len(y))))
    steady = float(np.mean(y[-tail:]))
    if steady == 0.0:
        raise NotSettledError("Steady state is zero, relative step metrics are undefined")
    spread = float(np.max(np.abs(y[-tail:] - steady)))
    if spread > 0.01 * abs(steady):
        raise NotSettledError(f"Trace has not settled: the last {tail} samples deviate up to {spread:.3g} "
                              f"from their mean {steady:.6g} (more than 1%), simulate longer")
    amplitude = trace.samples[-1].input
    if amplitude == 0.0:
        raise InvalidParameterError("Step amplitude is zero, DC gain is undefined")

    # Work on the response as if it were positive going
    sign = 1.0 if steady > 0.0 else -1.0
    w = y * sign
    level = abs(steady)

    rise = _first_crossing(t, w, 0.9 * level) - _first_crossing(t, w, 0.1 * level)

    peak_index = int(np.argmax(w))
    peak = float(w[peak_index])
    overshoot = 0.0
    if peak > level and peak > w[-1]:
        overshoot = 100.0 * (peak - level) / level

    settling = 0.0
    outside = np.nonzero(np.abs(w - level) > settle_band * level)[0]
    if len(outside) > 0:
        i = int(outside[-1])
        if i == len(w) - 1:
            raise NotSettledError(f"The last sample is still outside the {100.0 * settle_band:g}% band")
        bound = level * (1.0 + settle_band) if w[i] > level else level * (1.0 - settle_band)
        settling = float(t[i] + (w[i] - bound) / (w[i] - w[i + 1]) * (t[i + 1] - t[i]))

    return StepMetrics(dc_gain=steady / amplitude,
                       rise_time_s=rise,
                       settling_time_s=settling,
                       percent_overshoot=overshoot,
                       peak_value=float(y[peak_index]),
                       peak_time_s=float(t[peak_index]))
