#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
import math

import numpy as np
import pytest
from scipy import signal

from .lti import *
from .pid import *
from .test_helper import coefficients_close

TABLE_PLANT = msd_plant(MsdParams(0.182, 0.2, 1.2320))
TABLE_GAINS = PidGains(kp=20.2366, ki=10.3729, kd=9.8699)


def test_pid_transfer_function():
    tf = pid_tf(TABLE_GAINS)
    assert tf.num.coeffs == (9.8699, 20.2366, 10.3729)
    assert tf.den.coeffs == (1.0, 0.0)


def test_pid_proportional_only_keeps_representation():
    tf = pid_tf(PidGains(1.0, 0.0, 0.0))
    assert tf.num.coeffs == (1.0, 0.0)
    assert tf.den.coeffs == (1.0, 0.0)
    assert tf(2.0 + 1.0j) == 1.0


def test_pid_pure_integrator():
    tf = pid_tf(PidGains(0.0, 1.0, 0.0))
    assert tf.num.coeffs == (1.0,)
    assert tf.den.coeffs == (1.0, 0.0)


def test_negative_gain_is_refused():
    with pytest.raises(InvalidParameterError):
        PidGains(-1.0, 0.0, 0.0)


def test_zn_gains_reproduce_tuned_values():
    gains = zn_gains(UltimateParams(ku=33.727, tu_s=3.90176))
    assert gains.kp == pytest.approx(20.2366, abs=5e-4)
    assert gains.ki == pytest.approx(10.3729, abs=5e-4)
    assert gains.kd == pytest.approx(9.8699, abs=5e-4)


def test_zn_gains_table_constants():
    gains = zn_gains(UltimateParams(1.0, 1.0))
    assert (gains.kp, gains.ki, gains.kd) == pytest.approx((0.6, 1.2, 0.075))
    gains = zn_gains(UltimateParams(10.0, 2.0))
    assert (gains.kp, gains.ki, gains.kd) == pytest.approx((6.0, 6.0, 1.5))


def test_zn_gains_homogeneous_in_ku():
    base = zn_gains(UltimateParams(7.0, 1.3))
    scaled = zn_gains(UltimateParams(3.0 * 7.0, 1.3))
    assert (scaled.kp, scaled.ki, scaled.kd) == pytest.approx((3.0 * base.kp, 3.0 * base.ki, 3.0 * base.kd))


def test_ultimate_params_must_be_positive():
    with pytest.raises(InvalidParameterError):
        UltimateParams(0.0, 1.0)


def test_closed_loop_structure():
    tf = closed_loop(TABLE_PLANT, TABLE_GAINS)
    assert coefficients_close(tf.num.coeffs, [9.8699, 20.2366, 10.3729], rel_tol=1e-9)
    assert coefficients_close(tf.den.coeffs, [0.182, 10.0699, 21.4686, 10.3729], rel_tol=1e-9)
    assert dc_gain(tf) == pytest.approx(1.0, abs=1e-12)


def test_closed_loop_matches_generic_composition():
    generic = unity_feedback(TABLE_PLANT, pid_tf(TABLE_GAINS)).complementary.cancel_origin().normalized()
    explicit = closed_loop(TABLE_PLANT, TABLE_GAINS).normalized()
    assert coefficients_close(explicit.den.coeffs, generic.den.coeffs, rel_tol=1e-9)
    assert coefficients_close(explicit.num.coeffs, generic.num.coeffs, rel_tol=1e-9)


def test_closed_loop_proportional_only():
    tf = closed_loop(TABLE_PLANT, PidGains(5.0, 0.0, 0.0))
    assert tf.num.coeffs == (5.0,)
    assert coefficients_close(tf.den.coeffs, [0.182, 0.2, 1.232 + 5.0], rel_tol=1e-12)


def test_closed_loop_needs_msd_plant():
    with pytest.raises(InvalidParameterError):
        closed_loop(TransferFunction([1.0], [1.0, 1.0]), TABLE_GAINS)


def test_closed_loop_step_response_properties():
    open_metrics = step_metrics(simulate_step(TABLE_PLANT, 1e-3, 20.0))
    trace = simulate_step(closed_loop(TABLE_PLANT, TABLE_GAINS), 1e-4, 15.0)
    metrics = step_metrics(trace)
    assert abs(trace.samples[-1].output - 1.0) < 1e-3
    assert metrics.dc_gain == pytest.approx(1.0, abs=1e-3)
    assert 5.0 * metrics.rise_time_s <= open_metrics.rise_time_s
    assert metrics.rise_time_s < 0.1
    assert metrics.percent_overshoot < 5.0
    assert metrics.percent_overshoot < open_metrics.percent_overshoot
    print(f"closed loop: {metrics.to_dict()}")


def _spectral_radius(plant, gain, h):
    numd, dend, _ = signal.cont2discrete((plant.num.coeffs, plant.den.coeffs), h, method="zoh")
    numd = np.ravel(numd)
    charpoly = np.asarray(dend, dtype=float) + gain * np.concatenate([np.zeros(len(dend) - len(numd)), numd])
    return np.max(np.abs(np.roots(charpoly))), charpoly


@pytest.fixture(scope="module")
def ultimate():
    return find_ultimate(TABLE_PLANT, OscillationSearchConfig(sample_period_s=0.05))


def test_find_ultimate_brackets_the_stability_boundary(ultimate):
    below, _ = _spectral_radius(TABLE_PLANT, 0.99 * ultimate.ku, 0.05)
    above, _ = _spectral_radius(TABLE_PLANT, 1.01 * ultimate.ku, 0.05)
    assert below < 1.0
    assert above > 1.0


def test_find_ultimate_period_matches_boundary_poles(ultimate):
    _, charpoly = _spectral_radius(TABLE_PLANT, ultimate.ku, 0.05)
    roots = np.roots(charpoly)
    angle = np.max(np.abs(np.angle(roots)))
    assert ultimate.tu_s == pytest.approx(2.0 * math.pi * 0.05 / angle, rel=0.02)


def test_find_ultimate_is_robust_to_cycle_count(ultimate):
    longer = find_ultimate(TABLE_PLANT, OscillationSearchConfig(sample_period_s=0.05, cycles_required=10))
    assert abs(longer.ku - ultimate.ku) <= 1e-3 * ultimate.ku


def test_find_ultimate_gives_usable_gains(ultimate):
    gains = zn_gains(ultimate)
    assert gains.kp > 0.0 and gains.ki > 0.0 and gains.kd > 0.0


def test_find_ultimate_out_of_range():
    heavily_damped = msd_plant(MsdParams(1.0, 10.0, 1.0))
    with pytest.raises(NoUltimateGainError) as e:
        find_ultimate(heavily_damped, OscillationSearchConfig(gain_lo=0.0, gain_hi=0.1))
    assert "sample period" in str(e.value)


def test_find_ultimate_needs_stable_plant():
    with pytest.raises(InvalidParameterError):
        find_ultimate(TransferFunction([1.0], [1.0, -1.0]))


def test_search_config_validation():
    with pytest.raises(InvalidParameterError):
        OscillationSearchConfig(gain_lo=5.0, gain_hi=1.0)
    with pytest.raises(InvalidParameterError):
        OscillationSearchConfig(cycles_required=2)
    with pytest.raises(InvalidParameterError):
        OscillationSearchConfig(amplitude_ratio_band=0.5)


def test_sampled_loop_first_sample():
    trace = sampled_loop_trace(TABLE_PLANT, 4.0, OscillationSearchConfig())
    assert trace.samples[0].output == 0.0
    assert trace.samples[0].input == 4.0
    assert trace.dt_s == 0.05


def test_measure_oscillation_on_damped_sinusoid():
    dt = 0.01
    samples = [SimSample(k * dt, 0.0, math.exp(-0.1 * k * dt) * math.sin(2.0 * math.pi * k * dt), 0.0)
               for k in range(3001)]
    measured = measure_oscillation(SimTrace(dt, tuple(samples)), 0.0)
    assert measured.decaying
    assert measured.growth_rate_per_s == pytest.approx(-0.1, abs=1e-3)
    assert measured.period_s == pytest.approx(1.0, rel=1e-3)
    assert not measured.sustained(5, 0.05)
    assert measured.sustained(5, 0.15)


def test_tuning_report_keys():
    ultimate = UltimateParams(33.727, 3.90176)
    report = tuning_report(ultimate, zn_gains(ultimate), 0.05)
    assert list(report.keys()) == ["ku", "tu_s", "kp", "ki", "kd", "sample_period_s"]


def test_explain_table_lists_every_gain():
    text = explain_table()
    lines = text.splitlines()
    assert lines[0].startswith("gain")
    assert [line.split()[0] for line in lines[2:]] == ["kp", "ki", "kd"]
