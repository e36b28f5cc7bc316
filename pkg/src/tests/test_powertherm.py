import math

import numpy as np
import pytest

from vlcakit.errors import CalibrationInfeasible, NoPositivePowerInterval
from vlcakit.models.actuator import ActuatorParams
from vlcakit.models.thermal import Cooling, ThermalParams, ThermalState, ThermalTargets
from vlcakit.models.trace import SimTrace
from vlcakit.services import powertherm


@pytest.fixture(scope='module')
def calibrated() -> ThermalParams:
    return powertherm.calibrate_thermal()


@pytest.fixture()
def actuator() -> ActuatorParams:
    return ActuatorParams()


def power_trace(dt: float, joint_sign: np.ndarray | None = None) -> SimTrace:
    n = 40
    actuator = ActuatorParams()
    current = np.full(n, 10.0)
    speed = np.full(n, 100.0)
    joint = 0.9 * actuator.k_tau * current * speed
    if joint_sign is not None:
        joint = joint * joint_sign
    return SimTrace(dt=dt, columns={'t_s': np.arange(n) * dt, 'i_m_A': current, 'motor_speed_rad_s': speed,
                                    'joint_power_W': joint})


def test_zero_current_cools_toward_ambient() -> None:
    params = ThermalParams()
    trace = powertherm.simulate_thermal([0.0], 60.0, Cooling.ON, params, dt=0.01,
                                        initial=ThermalState(t_winding=80.0, t_housing=80.0))
    winding, housing = trace['T_winding_C'], trace['T_housing_C']
    assert np.all(np.diff(winding) <= 1e-12)
    assert np.all(np.diff(housing) <= 1e-12)
    assert params.ambient_c < winding[-1] < 80.0
    assert powertherm.steady_state_winding(0.0, Cooling.ON, params) == params.ambient_c


def test_step_size_is_bounded() -> None:
    state = ThermalState(t_winding=25.0, t_housing=25.0)
    with pytest.raises(ValueError):
        powertherm.step_thermal(state, 1.0, Cooling.ON, 0.05)


def test_calibrated_settle_temperature(calibrated: ThermalParams, actuator: ActuatorParams) -> None:
    settle = powertherm.steady_state_winding(860.0 / actuator.N, Cooling.ON, calibrated)
    assert settle == pytest.approx(115.0, abs=3.0)


def test_calibrated_peak_pulse(calibrated: ThermalParams) -> None:
    peak = powertherm.peak_winding_temperature(31.0, 0.5, Cooling.ON, calibrated)
    assert peak == pytest.approx(107.0, abs=5.0)
    assert peak < calibrated.winding_limit_c


def test_stepped_pulse_matches_single_transition(calibrated: ThermalParams) -> None:
    trace = powertherm.simulate_thermal([31.0], 0.5, 'on', calibrated, dt=1e-3)
    peak = powertherm.peak_winding_temperature(31.0, 0.5, Cooling.ON, calibrated)
    assert trace['T_winding_C'][-1] == pytest.approx(peak, abs=1e-6)
    assert np.all(trace['cooling'] == 1.0)


def test_calibrated_current_ratio(calibrated: ThermalParams) -> None:
    on = powertherm.continuous_current_limit(calibrated, Cooling.ON)
    off = powertherm.continuous_current_limit(calibrated, Cooling.OFF)
    assert on / off == pytest.approx(3.59, rel=0.01)


def test_current_ratio_spans_whole_ambient_path(calibrated: ThermalParams) -> None:
    r_wh = calibrated.r_winding_housing
    whole_path = math.sqrt((r_wh + calibrated.r_housing_ambient_off) / (r_wh + calibrated.r_housing_ambient_on))
    housing_only = math.sqrt(calibrated.r_housing_ambient_off / calibrated.r_housing_ambient_on)
    on = powertherm.continuous_current_limit(calibrated, Cooling.ON)
    off = powertherm.continuous_current_limit(calibrated, Cooling.OFF)
    assert on / off == pytest.approx(whole_path, rel=1e-9)
    assert housing_only > whole_path


def test_unit_ratio_collapses_cooling_paths() -> None:
    params = powertherm.calibrate_thermal(ThermalTargets(current_ratio=1.0))
    assert params.r_housing_ambient_off == pytest.approx(params.r_housing_ambient_on, rel=1e-9)


def test_unreachable_targets_raise_with_residuals() -> None:
    with pytest.raises(CalibrationInfeasible) as info:
        powertherm.calibrate_thermal(ThermalTargets(peak_c=20.0), max_sweeps=50)
    assert set(info.value.residuals) == {'settle_c', 'peak_c', 'current_ratio'}


def test_force_limit_with_zero_moment_arm(calibrated: ThermalParams, actuator: ActuatorParams) -> None:
    limit = powertherm.continuous_force_limit(calibrated, actuator, 0.0, Cooling.ON)
    assert limit['torque_Nm'] == 0.0
    assert limit['force_N'] == pytest.approx(actuator.N * limit['current_A'])
    assert limit['force_N'] > 0.0


def test_limit_at_ambient_allows_no_current() -> None:
    params = ThermalParams(winding_limit_c=25.0)
    assert powertherm.continuous_current_limit(params, Cooling.ON) == 0.0


def test_continuous_limit_reaches_winding_limit() -> None:
    params = ThermalParams()
    current = powertherm.continuous_current_limit(params, Cooling.ON)
    assert powertherm.steady_state_winding(current, Cooling.ON, params) == pytest.approx(params.winding_limit_c)


def test_steady_state_ignores_capacitances() -> None:
    base = ThermalParams()
    heavy = ThermalParams(c_winding=5.0, c_housing=500.0)
    assert powertherm.steady_state_winding(6.0, 'on', heavy) == pytest.approx(
        powertherm.steady_state_winding(6.0, 'on', base))


def test_steady_state_is_monotonic() -> None:
    params = ThermalParams()
    temps = [powertherm.steady_state_winding(i, Cooling.OFF, params) for i in (0.5, 1.0, 1.5, 2.0)]
    assert temps == sorted(temps)
    assert powertherm.steady_state_winding(2.0, Cooling.ON, params) < temps[-1]


def test_cooling_raises_continuous_current() -> None:
    params = ThermalParams()
    assert (powertherm.continuous_current_limit(params, Cooling.ON)
            > powertherm.continuous_current_limit(params, Cooling.OFF))


def test_electrical_power_includes_hot_winding_resistance(actuator: ActuatorParams) -> None:
    thermal = ThermalParams()
    assert powertherm.electrical_power(2.0, 0.0, actuator, thermal) == pytest.approx(4.0 * 0.3)
    hot = powertherm.electrical_power(2.0, 0.0, actuator, thermal, t_winding=125.0)
    assert hot == pytest.approx(4.0 * 0.3 * (1 + 0.0039 * 100.0))
    back_emf = powertherm.electrical_power(2.0, 50.0, actuator, thermal) - 1.2
    assert back_emf == pytest.approx(actuator.k_tau * 100.0)


def test_power_flow_averages(actuator: ActuatorParams) -> None:
    report = powertherm.power_flow(power_trace(1e-3), actuator)
    motor = actuator.k_tau * 1000.0
    assert report.drivetrain_efficiency_avg == pytest.approx(0.9)
    assert report.electrical_efficiency_avg == pytest.approx(motor / (motor + 30.0))
    assert len(report.samples) == 40


def test_power_flow_skips_negative_joint_power(actuator: ActuatorParams) -> None:
    sign = np.where(np.arange(40) % 2 == 0, 1.0, -1.0)
    report = powertherm.power_flow(power_trace(1e-3, sign), actuator)
    assert report.drivetrain_efficiency_avg == pytest.approx(0.9)


def test_power_flow_is_time_scale_invariant(actuator: ActuatorParams) -> None:
    fast = powertherm.power_flow(power_trace(1e-3), actuator)
    slow = powertherm.power_flow(power_trace(5e-3), actuator)
    assert slow.drivetrain_efficiency_avg == pytest.approx(fast.drivetrain_efficiency_avg)
    assert slow.electrical_efficiency_avg == pytest.approx(fast.electrical_efficiency_avg)


def test_power_flow_without_positive_interval(actuator: ActuatorParams) -> None:
    with pytest.raises(NoPositivePowerInterval):
        powertherm.power_flow(power_trace(1e-3, -np.ones(40)), actuator)
