"""Two-node motor thermal model, continuous-rating limits and the power-flow efficiency pipeline."""
import logging
import math
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from vlcakit.errors import CalibrationInfeasible, NoPositivePowerInterval
from vlcakit.models.actuator import ActuatorParams
from vlcakit.models.thermal import (Cooling, PowerFlowReport, PowerSample, ThermalParams, ThermalState,
                                    ThermalTargets)
from vlcakit.models.trace import SimTrace

logger = logging.getLogger(__name__)

THERMAL_CSV_HEADER = ('t_s', 'i_A', 'T_winding_C', 'T_housing_C', 'cooling')
EFFICIENCY_CSV_HEADER = ('t_s', 'input_power_W', 'motor_power_W', 'joint_power_W')
MOTOR_POWER_FLOOR_W = 1.0
MAX_THERMAL_STEP_S = 10e-3


@lru_cache(maxsize=4096)
def _transition(params: ThermalParams, cooling: Cooling, current: float, dt: float) -> np.ndarray:
    """Exact one-step map of (rise_winding, rise_housing, 1) over dt at constant current."""
    r_amb = params.r_ambient(cooling)
    heat = current ** 2 * params.r_electrical(params.ambient_c)
    heat_slope = current ** 2 * params.r_electrical_25c * params.alpha_cu
    g_wh = 1.0 / params.r_winding_housing
    system = np.array([
        [(heat_slope - g_wh) / params.c_winding, g_wh / params.c_winding, heat / params.c_winding],
        [g_wh / params.c_housing, -(g_wh + 1.0 / r_amb) / params.c_housing, 0.0],
        [0.0, 0.0, 0.0],
    ])
    return expm(system * dt)


def step_thermal(state: ThermalState, current: float, cooling: Cooling | str, dt: float,
                 params: ThermalParams | None = None) -> ThermalState:
    """Advance winding/housing temperatures with i²·R(T_winding) heating, exact for constant current."""
    params = params or ThermalParams()
    if not 0.0 < dt <= MAX_THERMAL_STEP_S:
        raise ValueError(f"thermal step must lie in (0, {MAX_THERMAL_STEP_S}] s, got {dt}")
    phi = _transition(params, Cooling(cooling), float(abs(current)), float(dt))
    rise = phi @ np.array([state.t_winding - params.ambient_c, state.t_housing - params.ambient_c, 1.0])
    return ThermalState(t_winding=params.ambient_c + float(rise[0]), t_housing=params.ambient_c + float(rise[1]))


def total_ambient_resistance(params: ThermalParams, cooling: Cooling) -> float:
    return params.r_winding_housing + params.r_ambient(Cooling(cooling))


def steady_state_winding(current: float, cooling: Cooling | str, params: ThermalParams | None = None) -> float:
    """Winding temperature at equilibrium; +inf past the i²R thermal-runaway point."""
    params = params or ThermalParams()
    r_total = total_ambient_resistance(params, Cooling(cooling))
    heat = current ** 2 * params.r_electrical(params.ambient_c)
    gain = 1.0 - current ** 2 * params.r_electrical_25c * params.alpha_cu * r_total
    if gain <= 0.0:
        return math.inf
    return params.ambient_c + heat * r_total / gain


def continuous_current_limit(params: ThermalParams, cooling: Cooling | str) -> float:
    """Largest constant current whose steady winding temperature stays at or below the limit."""
    rise = params.winding_limit_c - params.ambient_c
    if rise <= 0.0:
        return 0.0
    r_total = total_ambient_resistance(params, Cooling(cooling))
    return math.sqrt(rise / (params.r_electrical(params.winding_limit_c) * r_total))


def continuous_force_limit(thermal: ThermalParams, actuator: ActuatorParams, moment_arm: float,
                           cooling: Cooling | str) -> dict[str, float]:
    current = continuous_current_limit(thermal, cooling)
    force = actuator.N * current
    return {'current_A': current, 'force_N': force, 'torque_Nm': force * moment_arm}


def simulate_thermal(currents: Sequence[float] | Callable[[float], float], duration: float,
                     cooling: Cooling | str, params: ThermalParams | None = None, dt: float = 1e-3,
                     initial: ThermalState | None = None) -> SimTrace:
    """Thermal trace for a current profile given as samples at dt or as a function of time."""
    params = params or ThermalParams()
    cooling = Cooling(cooling)
    n = int(round(duration / dt))
    t = np.arange(n + 1) * dt
    if callable(currents):
        profile = np.array([currents(tk) for tk in t])
    else:
        profile = np.resize(np.asarray(currents, dtype=float), n + 1)
    state = initial or ThermalState(t_winding=params.ambient_c, t_housing=params.ambient_c)
    winding = np.empty(n + 1)
    housing = np.empty(n + 1)
    for k in range(n + 1):
        winding[k], housing[k] = state.t_winding, state.t_housing
        if k < n:
            state = step_thermal(state, profile[k], cooling, dt, params)
    flag = np.full(n + 1, 1.0 if cooling is Cooling.ON else 0.0)
    return SimTrace(dt=dt, columns={'t_s': t, 'i_A': profile, 'T_winding_C': winding, 'T_housing_C': housing,
                                    'cooling': flag})


def peak_winding_temperature(current: float, duration: float, cooling: Cooling | str,
                             params: ThermalParams) -> float:
    """Winding temperature after a constant-current pulse from ambient."""
    phi = _transition(params, Cooling(cooling), float(abs(current)), float(duration))
    return params.ambient_c + float(phi[0, 2])


def _with_ratio(params: ThermalParams, ratio: float) -> ThermalParams:
    # continuous current goes as 1/sqrt(R_wh + R_amb)
    r_off = ratio ** 2 * (params.r_winding_housing + params.r_housing_ambient_on) - params.r_winding_housing
    return params.model_copy(update={'r_housing_ambient_off': r_off})


def thermal_residuals(params: ThermalParams, targets: ThermalTargets, actuator: ActuatorParams) -> dict[str, float]:
    settle_current = targets.settle_force_n / actuator.N
    settle = steady_state_winding(settle_current, Cooling.ON, params)
    peak = peak_winding_temperature(targets.peak_current_a, targets.peak_duration_s, Cooling.ON, params)
    ratio = continuous_current_limit(params, Cooling.ON) / max(continuous_current_limit(params, Cooling.OFF), 1e-300)
    return {
        'settle_c': settle - targets.settle_c,
        'peak_c': peak - targets.peak_c,
        'current_ratio': ratio - targets.current_ratio,
    }


def calibrate_thermal(targets: ThermalTargets | None = None, actuator: ActuatorParams | None = None,
                      initial: ThermalParams | None = None, max_sweeps: int = 400) -> ThermalParams:
    """Coordinate descent over log(C_w, R_wh, C_h, R_on); the on/off ratio is imposed exactly.

    The ratio acts on the whole winding-to-ambient path: I_on/I_off = sqrt((R_wh + R_off) / (R_wh + R_on)),
    not sqrt(R_off / R_on) over the housing-to-ambient resistance alone.
    """
    targets = targets or ThermalTargets()
    actuator = actuator or ActuatorParams()
    base = initial or ThermalParams()
    names = ('c_winding', 'r_winding_housing', 'c_housing', 'r_housing_ambient_on')
    rise_settle = targets.settle_c - base.ambient_c
    rise_peak = targets.peak_c - base.ambient_c

    def build(x: np.ndarray) -> ThermalParams:
        params = base.model_copy(update={name: float(v) for name, v in zip(names, np.exp(x))})
        return _with_ratio(params, targets.current_ratio)

    def cost(x: np.ndarray) -> float:
        r = thermal_residuals(build(x), targets, actuator)
        if not all(math.isfinite(v) for v in r.values()):
            return math.inf
        return (r['settle_c'] / rise_settle) ** 2 + (r['peak_c'] / rise_peak) ** 2

    x = np.log([getattr(base, name) for name in names])
    best = cost(x)
    step = 0.5
    sweeps = 0
    while step > 1e-7 and best > 1e-14 and sweeps < max_sweeps:
        sweeps += 1
        improved = False
        for i in range(len(names)):
            for direction in (1.0, -1.0):
                trial = x.copy()
                trial[i] += direction * step
                value = cost(trial)
                if value < best:
                    x, best, improved = trial, value, True
                    break
        if not improved:
            step *= 0.5

    params = build(x)
    residuals = thermal_residuals(params, targets, actuator)
    ok = (abs(residuals['settle_c']) <= targets.tolerance * rise_settle
          and abs(residuals['peak_c']) <= targets.tolerance * rise_peak
          and abs(residuals['current_ratio']) <= 0.01 * targets.current_ratio)
    if not ok:
        raise CalibrationInfeasible(f"thermal targets not met after {sweeps} sweeps", residuals)
    logger.info("thermal calibration: C_w=%.4g R_wh=%.4g C_h=%.4g R_on=%.4g R_off=%.4g (%d sweeps)",
                params.c_winding, params.r_winding_housing, params.c_housing,
                params.r_housing_ambient_on, params.r_housing_ambient_off, sweeps)
    return params


def electrical_power(current, motor_speed, actuator: ActuatorParams, thermal: ThermalParams | None = None,
                     t_winding=None):
    """Battery-side power V_b·I_b modeled as copper loss plus back-EMF power."""
    thermal = thermal or ThermalParams()
    current = np.asarray(current, dtype=float)
    resistance = thermal.r_electrical(thermal.ambient_c if t_winding is None else np.asarray(t_winding))
    return current ** 2 * resistance + actuator.k_tau * current * np.asarray(motor_speed, dtype=float)


def power_flow(trace: SimTrace, actuator: ActuatorParams, thermal: ThermalParams | None = None,
               joint_column: str = 'joint_power_W') -> PowerFlowReport:
    """Electrical → motor → joint power chain and their positive-power time averages."""
    current = trace['i_m_A']
    speed = trace['motor_speed_rad_s']
    joint = trace[joint_column]
    t_winding = trace['temp_C'] if 'temp_C' in trace else None
    motor = actuator.k_tau * current * speed
    supplied = electrical_power(current, speed, actuator, thermal, t_winding)

    mask = (motor > MOTOR_POWER_FLOOR_W) & (joint > 0.0)
    if not np.any(mask):
        raise NoPositivePowerInterval("no samples with positive motor and joint power")
    drivetrain = float(np.mean(joint[mask] / motor[mask]))
    electrical = float(np.mean(motor[mask] / supplied[mask]))
    samples = [PowerSample(t=float(t), input_power=float(p_in), motor_power=float(p_m), joint_power=float(p_j))
               for t, p_in, p_m, p_j in zip(trace.time, supplied, motor, joint)]
    logger.debug("power flow: %d of %d samples positive, drivetrain %.4f, electrical %.4f",
                 int(mask.sum()), mask.size, drivetrain, electrical)
    return PowerFlowReport(samples=samples, drivetrain_efficiency_avg=drivetrain,
                           electrical_efficiency_avg=electrical)
