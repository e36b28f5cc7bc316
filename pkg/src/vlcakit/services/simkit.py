"""Fixed-step simulation of the actuator under discrete 1 kHz force and position control."""
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import signal

from vlcakit.config import ToolkitConfig
from vlcakit.errors import InsufficientExcitation, NonFiniteState
from vlcakit.models.actuator import ActuatorParams, ControllerGains, ControllerKind, PositionGains
from vlcakit.models.linear import FrequencyResponsePoint
from vlcakit.models.simulation import (ForceReference, Grounding, ImpactConfig, PlantState, SpringElement,
                                       chirp_value)
from vlcakit.models.thermal import Cooling, ThermalParams, ThermalState
from vlcakit.models.trace import SimTrace
from vlcakit.services import vlca

logger = logging.getLogger(__name__)

SATURATION_EVENT = 'SaturationWarning'


def step_plant(state: PlantState, motor_current: float, external_force: float, dt: float) -> PlantState:
    """One RK4 step of M·x'' + B·x' + k·x = N·i + F_ext."""
    if not 0.0 < dt <= 1e-3:
        raise ValueError(f"dt must lie in (0, 1 ms], got {dt}")
    drive = state.current_gain * motor_current + external_force
    if not math.isfinite(drive):
        raise NonFiniteState(f"non-finite plant input: i={motor_current}, F_ext={external_force}")
    m, b, k = state.mass, state.damping, state.stiffness

    def accel(x: float, v: float) -> float:
        return (drive - b * v - k * x) / m

    x, v = state.x_r, state.v_r
    k1x, k1v = v, accel(x, v)
    k2x, k2v = v + 0.5 * dt * k1v, accel(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
    k3x, k3v = v + 0.5 * dt * k2v, accel(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
    k4x, k4v = v + dt * k3v, accel(x + dt * k3x, v + dt * k3v)
    new = replace(state,
                  x_r=x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x),
                  v_r=v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))
    if not new.is_finite():
        raise NonFiniteState(f"plant state diverged: x_r={new.x_r}, v_r={new.v_r}")
    return new


def rk4_step(deriv: Callable[[np.ndarray], np.ndarray], y: np.ndarray, dt: float) -> np.ndarray:
    k1 = deriv(y)
    k2 = deriv(y + 0.5 * dt * k1)
    k3 = deriv(y + 0.5 * dt * k2)
    k4 = deriv(y + dt * k3)
    out = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"state diverged: {out}")
    return out


class DiscreteFilter:
    """Direct-form II transposed realization of a discretized transfer function."""

    def __init__(self, b: Sequence[float], a: Sequence[float]):
        b = np.atleast_1d(np.asarray(b, dtype=float))
        a = np.atleast_1d(np.asarray(a, dtype=float))
        n = max(len(a), len(b))
        self._b = np.pad(b, (0, n - len(b))) / a[0]
        self._a = np.pad(a, (0, n - len(a))) / a[0]
        self._z = np.zeros(n - 1)

    @classmethod
    def bilinear(cls, num_ascending: Sequence[float], den_ascending: Sequence[float], fs: float) -> 'DiscreteFilter':
        b, a = signal.bilinear(list(num_ascending)[::-1], list(den_ascending)[::-1], fs=fs)
        return cls(b, a)

    @property
    def direct(self) -> float:
        return float(self._b[0])

    @property
    def pending(self) -> float:
        """Output contribution already committed by past inputs."""
        return float(self._z[0]) if self._z.size else 0.0

    def step(self, x: float) -> float:
        y = self._b[0] * x + self.pending
        if self._z.size:
            shifted = np.append(self._z[1:], 0.0)
            self._z = self._b[1:] * x - self._a[1:] * y + shifted
        return float(y)


class CommandDelay:
    """Ring buffer delaying a sampled signal by exactly `length` samples."""

    def __init__(self, length: int):
        if length < 1:
            raise ValueError("delay buffer length must be at least 1")
        self._buffer: deque[float] = deque([0.0] * length, maxlen=length)

    def __len__(self) -> int:
        return len(self._buffer)

    def push(self, value: float) -> float:
        out = self._buffer[0]
        self._buffer.append(value)
        return out


def delay_samples(gains: ControllerGains, plant_step: float | None = None) -> int:
    dt = plant_step or ToolkitConfig.plant_step()
    return max(int(round(gains.delay_T / dt)), 1)


def effective_delay(gains: ControllerGains) -> float:
    """Transport delay seen by a continuous-time model: buffer plus half a hold period."""
    return delay_samples(gains) * ToolkitConfig.plant_step() + 0.5 * ToolkitConfig.control_period()


@dataclass
class ControllerState:
    integrator: float = 0.0
    derivative: DiscreteFilter | None = None
    dob_inverse: DiscreteFilter | None = None
    dob_lowpass: DiscreteFilter | None = None
    delay: CommandDelay = field(default_factory=lambda: CommandDelay(1))
    disturbance: float = 0.0


class ForceController:
    """Discrete force law producing a motor-force command once per control period.

    u = (1+K_p)·F_r - K_p·F_k - (derivative action) [+ K_i·∫e], with the DOB
    replacing F_r by F_d - d̂ where d̂ = Q·P_c⁻¹[F_k] - Q[F_r].
    """

    def __init__(self, kind: ControllerKind, params: ActuatorParams, gains: ControllerGains,
                 period: float | None = None):
        self.kind = ControllerKind(kind)
        self._params = params
        self._gains = gains
        self._period = period or ToolkitConfig.control_period()
        fs = 1.0 / self._period
        self.state = ControllerState(delay=CommandDelay(delay_samples(gains)))
        if self.kind is ControllerKind.PDf:
            q_d = vlca.derivative_filter(gains)
            self.state.derivative = DiscreteFilter.bilinear(
                q_d.numerator.coefficients, q_d.denominator.coefficients, fs)
        if self.kind is ControllerKind.PDmDOB:
            q = vlca.dob_filter(gains)
            inverse = (params.k_r * (1.0 + gains.k_p),
                       params.effective_damping + gains.k_dm * params.N_m,
                       params.effective_mass)
            num = np.polynomial.polynomial.polymul(q.numerator.coefficients, inverse) / (params.k_r * (1.0 + gains.k_p))
            self.state.dob_inverse = DiscreteFilter.bilinear(num, q.denominator.coefficients, fs)
            self.state.dob_lowpass = DiscreteFilter.bilinear(
                q.numerator.coefficients, q.denominator.coefficients, fs)

    def command(self, f_desired: float, f_measured: float, motor_speed: float) -> float:
        g, s = self._gains, self.state
        f_ref = f_desired
        if self.kind is ControllerKind.PDmDOB:
            # solve d̂ = A[F_k] - Q[F_d - d̂] for the direct feedthrough of Q
            a_out = s.dob_inverse.step(f_measured)
            q0 = s.dob_lowpass.direct
            s.disturbance = (a_out - q0 * f_desired - s.dob_lowpass.pending) / (1.0 - q0)
            f_ref = f_desired - s.disturbance
            s.dob_lowpass.step(f_ref)

        u = (1.0 + g.k_p) * f_ref - g.k_p * f_measured
        if self.kind is ControllerKind.PDf:
            u -= g.resolved_k_df(self._params) * s.derivative.step(f_measured)
        else:
            u -= g.k_dm * motor_speed
        if self.kind is ControllerKind.PIDm:
            s.integrator += (f_ref - f_measured) * self._period
            u += g.k_i * s.integrator
        return u


def _thermal_step(thermal: ThermalParams | None, state: ThermalState | None, current: float,
                  cooling: Cooling, dt: float) -> ThermalState | None:
    if thermal is None:
        return None
    from vlcakit.services import powertherm
    return powertherm.step_thermal(state, current, cooling, dt, thermal)


@dataclass
class LoopSample:
    f_measured: float
    current: float
    motor_speed: float
    saturated: bool


class ForceLoop:
    """One actuator: discrete controller, current clip, command delay and the RK4 plant at substep rate."""

    def __init__(self, kind: ControllerKind | str, params: ActuatorParams, gains: ControllerGains):
        self.params = params
        self.period = ToolkitConfig.control_period()
        self.substeps = ToolkitConfig.PLANT_SUBSTEPS
        self.limit = ToolkitConfig.CURRENT_LIMIT_A
        self.controller = ForceController(kind, params, gains, self.period)
        self.plant = PlantState.at_rest(params)

    def tick(self, f_desired: float, external_force: float = 0.0) -> LoopSample:
        """Sample, compute the command and advance the plant by one control period."""
        f_meas = self.plant.spring_force
        motor_speed = self.params.N_m * self.plant.v_r
        current = self.controller.command(f_desired, f_meas, motor_speed) / self.params.N
        saturated = abs(current) > self.limit
        if saturated:
            current = math.copysign(self.limit, current)
        dt = self.period / self.substeps
        for _ in range(self.substeps):
            self.plant = step_plant(self.plant, self.controller.state.delay.push(current), external_force, dt)
        return LoopSample(f_meas, current, motor_speed, saturated)


def run_force_tracking(kind: ControllerKind | str, gains: ControllerGains, params: ActuatorParams,
                       reference: ForceReference, duration: float,
                       thermal: ThermalParams | None = None, cooling: Cooling = Cooling.ON) -> SimTrace:
    kind = ControllerKind(kind)
    loop = ForceLoop(kind, params, gains)
    period = loop.period
    temp = None if thermal is None else ThermalState(t_winding=thermal.ambient_c, t_housing=thermal.ambient_c)

    n = int(round(duration / period))
    cols = {name: np.zeros(n) for name in ('t_s', 'f_cmd_N', 'f_meas_N', 'f_damping_N', 'f_loadcell_N',
                                           'i_m_A', 'x_r_m', 'motor_speed_rad_s', 'motor_force_N')}
    if thermal is not None:
        cols['temp_C'] = np.zeros(n)
    saturated = 0
    for k in range(n):
        t = k * period
        f_des = reference.value(t)
        x_r, v_r = loop.plant.x_r, loop.plant.v_r
        sample = loop.tick(f_des)
        saturated += sample.saturated
        temp = _thermal_step(thermal, temp, sample.current, cooling, period)

        cols['t_s'][k] = t
        cols['f_cmd_N'][k] = f_des
        cols['f_meas_N'][k] = sample.f_measured
        cols['f_damping_N'][k] = params.b_r * v_r
        cols['f_loadcell_N'][k] = sample.f_measured + params.b_r * v_r
        cols['i_m_A'][k] = sample.current
        cols['x_r_m'][k] = x_r
        cols['motor_speed_rad_s'][k] = sample.motor_speed
        cols['motor_force_N'][k] = params.N * sample.current
        if temp is not None:
            cols['temp_C'][k] = temp.t_winding

    events: tuple[str, ...] = ()
    if saturated:
        logger.warning("%s: current clipped at %.1f A on %d of %d control periods",
                       kind.value, loop.limit, saturated, n)
        events = (f"{SATURATION_EVENT}: {saturated} periods clipped at {loop.limit:g} A",)
    return SimTrace(dt=period, columns=cols, events=events, attrs={'delay_s': effective_delay(gains)})


def run_chirp_identification(params: ActuatorParams, f0: float = 0.2, f1: float = 300.0,
                             sweep_time: float = 20.0, amplitude: float = 1.0, tail: float = 0.5) -> SimTrace:
    """Open-loop exponential-chirp current drive of the plant, sampled at the plant rate."""
    dt = ToolkitConfig.plant_step()
    n = int(round((sweep_time + tail) / dt))
    plant = PlantState.at_rest(params)
    t = np.arange(n) * dt
    current = np.zeros(n)
    force = np.zeros(n)
    for k in range(n):
        current[k] = chirp_value(t[k], f0, f1, sweep_time, amplitude)
        force[k] = plant.spring_force
        # hold the midpoint sample over the step
        held = chirp_value(t[k] + 0.5 * dt, f0, f1, sweep_time, amplitude)
        plant = step_plant(plant, held, 0.0, dt)
    columns = {'t_s': t, 'i_m_A': current, 'motor_force_N': params.N * current, 'f_meas_N': force,
               'f_cmd_N': params.N * current}
    return SimTrace(dt=dt, columns=columns, attrs={'f0': f0, 'f1': f1, 'sweep_time': sweep_time})


def empirical_frequency_response(trace: SimTrace, input_column: str = 'f_cmd_N', output_column: str = 'f_meas_N',
                                 frequencies_hz: Sequence[float] | None = None, band: float = 0.02,
                                 min_coherence: float = 0.9) -> list[FrequencyResponsePoint]:
    """H1 estimate ΣY·U*/Σ|U|² over narrow bands of full-record spectra."""
    f0 = trace.attrs.get('f0')
    f1 = trace.attrs.get('f1')
    sweep_time = trace.attrs.get('sweep_time')
    if f0 is not None and f1 is not None:
        if f1 / f0 < 100.0:
            raise InsufficientExcitation(f"chirp spans {math.log10(f1 / f0):.2f} decades, need 2")
        if sweep_time is not None and (f1 - f0) * sweep_time / math.log(f1 / f0) < 40.0:
            raise InsufficientExcitation("chirp holds fewer than 40 cycles")
    if frequencies_hz is None:
        if f0 is None or f1 is None:
            raise ValueError("frequencies_hz is required for traces without chirp metadata")
        decades = math.log10(f1 / f0) - math.log10(4.0)
        frequencies_hz = np.geomspace(2.0 * f0, f1 / 2.0, max(int(round(10 * decades)), 2))

    u = np.asarray(trace[input_column], dtype=float)
    y = np.asarray(trace[output_column], dtype=float)
    u = u - u.mean()
    y = y - y.mean()
    spectrum_u = np.fft.rfft(u)
    spectrum_y = np.fft.rfft(y)
    bins = np.fft.rfftfreq(u.size, trace.dt)
    resolution = bins[1]

    values = []
    for f in frequencies_hz:
        half_width = max(band * f, 1.5 * resolution)
        sel = np.abs(bins - f) <= half_width
        cross = np.sum(spectrum_y[sel] * np.conj(spectrum_u[sel]))
        power_u = np.sum(np.abs(spectrum_u[sel]) ** 2)
        power_y = np.sum(np.abs(spectrum_y[sel]) ** 2)
        if power_u <= 0.0:
            raise InsufficientExcitation(f"no input energy near {f:.4g} Hz")
        coherence = abs(cross) ** 2 / (power_u * power_y) if power_y > 0 else 0.0
        if coherence < min_coherence:
            raise InsufficientExcitation(f"coherence {coherence:.3f} below {min_coherence} at {f:.4g} Hz")
        values.append(cross / power_u)

    values = np.asarray(values)
    phase = np.degrees(np.unwrap(np.angle(values)))
    logger.debug("empirical response: %d bands over [%.3g, %.3g] Hz", len(values), frequencies_hz[0],
                 frequencies_hz[-1])
    return [FrequencyResponsePoint(2.0 * math.pi * float(f), float(abs(v)), float(p))
            for f, v, p in zip(frequencies_hz, values, phase)]


def position_loop_polynomial(element: SpringElement, params: ActuatorParams, gains: PositionGains) -> np.ndarray:
    """Characteristic polynomial (descending) of the two-mass position loop."""
    m_m, m_l = params.effective_mass, gains.load_mass
    d_m = params.b_m * params.N_m ** 2 + gains.k_d
    k, b = element.stiffness, element.damping
    return np.array([m_m * m_l,
                     m_m * b + m_l * (d_m + b),
                     k * (m_m + m_l) + d_m * b,
                     d_m * k + gains.k_p * b,
                     gains.k_p * k])


def dominant_damping_ratio(element: SpringElement, params: ActuatorParams, gains: PositionGains) -> float:
    """Damping ratio of the slowest complex pole pair of the linearized position loop."""
    poles = np.roots(position_loop_polynomial(element, params, gains))
    oscillatory = [p for p in poles if p.imag > 1e-9]
    if not oscillatory:
        return 1.0
    slowest = max(oscillatory, key=lambda p: p.real)
    return float(-slowest.real / abs(slowest))


def run_joint_position_control(element: SpringElement | str, position_gains: PositionGains,
                               params: ActuatorParams | None = None, duration: float = 5.0) -> SimTrace:
    """Output-position step with PD on the joint encoder and motor-velocity damping."""
    params = params or ActuatorParams()
    if isinstance(element, str):
        element = SpringElement.elastomer(params.k_r, params.b_r) if element == 'elastomer' \
            else SpringElement.steel_spring(params.k_r)
    period = ToolkitConfig.control_period()
    substeps = ToolkitConfig.PLANT_SUBSTEPS
    dt = period / substeps
    m_m, m_l = params.effective_mass, position_gains.load_mass
    b_m = params.b_m * params.N_m ** 2
    k, b = element.stiffness, element.damping
    delay = CommandDelay(1)
    force = 0.0

    def deriv(y: np.ndarray) -> np.ndarray:
        x_m, v_m, x_l, v_l = y
        spring = k * (x_m - x_l) + b * (v_m - v_l)
        return np.array([v_m, (force - b_m * v_m - spring) / m_m, v_l, spring / m_l])

    n = int(round(duration / period))
    y = np.zeros(4)
    cols = {name: np.zeros(n) for name in ('t_s', 'f_cmd_N', 'f_meas_N', 'i_m_A', 'x_r_m', 'q_out')}
    for i in range(n):
        target = position_gains.step
        command = position_gains.k_p * (target - y[2]) - position_gains.k_d * y[1]
        current = command / params.N
        cols['t_s'][i] = i * period
        cols['f_cmd_N'][i] = command
        cols['f_meas_N'][i] = k * (y[0] - y[2])
        cols['i_m_A'][i] = current
        cols['x_r_m'][i] = y[0] - y[2]
        cols['q_out'][i] = y[2]
        for _ in range(substeps):
            force = params.N * delay.push(current)
            y = rk4_step(deriv, y, dt)
    return SimTrace(dt=period, columns=cols, attrs={'step': position_gains.step, 'stiffness': k, 'damping': b})


def run_impact(config: ImpactConfig, params: ActuatorParams | None = None, dt: float = 1e-5) -> SimTrace:
    """Half-sine hammer pulse on the load cell with the controller idle."""
    params = params or ActuatorParams()
    m = params.effective_mass + config.sensor_mass
    b, k = params.effective_damping, params.k_r
    n = int(round(config.duration / dt))
    t = np.arange(n) * dt
    hammer = np.array([config.hammer_force(tk) for tk in t])
    x = np.zeros(n)
    loadcell = hammer.copy()
    if config.grounding is Grounding.VISCOELASTIC:

        def deriv(y: np.ndarray) -> np.ndarray:
            # time rides along as the third state so every stage sees the pulse at its own instant
            x_r, v_r, tau = y
            return np.array([v_r, (config.hammer_force(tau) - b * v_r - k * x_r) / m, 1.0])

        state = np.zeros(3)
        for i in range(n):
            x[i] = state[0]
            loadcell[i] = hammer[i] - config.sensor_mass * deriv(state)[1]
            state = rk4_step(deriv, state, dt)
    zeros = np.zeros(n)
    columns = {'t_s': t, 'f_cmd_N': zeros, 'f_meas_N': k * x, 'f_loadcell_N': loadcell, 'i_m_A': zeros,
               'x_r_m': x, 'f_hammer_N': hammer}
    return SimTrace(dt=dt, columns=columns, attrs={'impulse': config.impulse})


def tracking_metrics(trace: SimTrace, start: float = 0.0, full_scale: float | None = None) -> dict[str, float]:
    mask = trace.time >= start
    cmd = trace['f_cmd_N'][mask]
    meas = trace['f_meas_N'][mask]
    scale = full_scale if full_scale is not None else float(np.max(np.abs(cmd)))
    if scale <= 0:
        return {'max_error': 0.0, 'overshoot': 0.0}
    return {'max_error': float(np.max(np.abs(cmd - meas))) / scale,
            'overshoot': max(float(np.max(meas)) - scale, 0.0) / scale}


def step_metrics(trace: SimTrace, column: str = 'q_out', target: float | None = None,
                 band: float = 0.02) -> dict[str, float]:
    """Overshoot fraction and last exit time from the ±band envelope around the target."""
    y = trace[column]
    target = target if target is not None else trace.attrs.get('step', float(y[-1]))
    if target == 0:
        return {'overshoot': 0.0, 'settling_time': 0.0}
    outside = np.nonzero(np.abs(y - target) > band * abs(target))[0]
    if outside.size == 0:
        settling = 0.0
    elif outside[-1] == y.size - 1:
        settling = float(trace.time[-1] + trace.dt)
    else:
        settling = float(trace.time[outside[-1] + 1])
    overshoot = max(float(np.max(y / target)) - 1.0, 0.0)
    return {'overshoot': overshoot, 'settling_time': settling}
