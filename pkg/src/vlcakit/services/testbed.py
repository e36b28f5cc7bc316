"""Planar ankle/knee testbed: rigid-body dynamics, linkage mapping and operational-space control.

Angles are absolute for the shank (q0, from the +x axis) and relative for the knee (q1), so the
hip sits at L0·(cos q0, sin q0) + L1·(cos(q0+q1), sin(q0+q1)) with the foot pinned at the origin.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.interpolate import make_interp_spline

from vlcakit.config import ToolkitConfig
from vlcakit.errors import OutOfRange, WorkspaceViolation
from vlcakit.models.actuator import ActuatorParams, ControllerGains, ControllerKind
from vlcakit.models.testbed import (LinkageProfile, SensingParams, TaskGains, TorqueMode, TrajectorySpec,
                                    TwoDofParams)
from vlcakit.models.trace import SimTrace
from vlcakit.services import simkit, vlca

logger = logging.getLogger(__name__)

SINGULARITY_EVENT = 'SingularityDamped'
SINGULAR_DET_TOL = 1e-6
DAMPING_DET_TOL = 1e-3
DAMPING_SCALE = 0.01
WORKSPACE_MARGIN_M = 0.02
PRE_ROLL_S = 0.2
CASCADE_DOB_CUTOFF_HZ = 60.0
OSC_CSV_HEADER = ('t_s', 'hip_x_m', 'hip_y_m', 'hip_x_des_m', 'hip_y_des_m', 'err_m', 'tau0_Nm', 'tau1_Nm',
                  'f0_N', 'f1_N', 'i0_A', 'i1_A')


def _mass_terms(params: TwoDofParams) -> tuple[float, float, float]:
    shank, thigh = params.links
    # first moments about the ankle (shank) and the knee (thigh plus payload)
    proximal = shank.mass * shank.com + (thigh.mass + params.payload_mass) * shank.length
    distal = thigh.mass * thigh.com + params.payload_mass * thigh.length
    return proximal, distal, distal * shank.length


def mass_matrix(q: Sequence[float], params: TwoDofParams) -> np.ndarray:
    shank, thigh = params.links
    c1 = math.cos(q[1])
    _, _, coupling = _mass_terms(params)
    a22 = thigh.inertia + thigh.mass * thigh.com ** 2 + params.payload_mass * thigh.length ** 2
    a12 = a22 + coupling * c1
    a11 = (shank.inertia + shank.mass * shank.com ** 2
           + (thigh.mass + params.payload_mass) * shank.length ** 2 + a22 + 2.0 * coupling * c1)
    return np.array([[a11, a12], [a12, a22]])


def dynamics_terms(q: Sequence[float], qdot: Sequence[float], params: TwoDofParams) -> dict[str, np.ndarray]:
    """Inertia A(q), Coriolis/centrifugal b(q, q̇) and gravity g(q) of A·q̈ + b + g = τ."""
    q0, q1 = q
    qd0, qd1 = qdot
    proximal, distal, coupling = _mass_terms(params)
    h = coupling * math.sin(q1)
    b = np.array([-h * (2.0 * qd0 * qd1 + qd1 ** 2), h * qd0 ** 2])
    c0, c01 = math.cos(q0), math.cos(q0 + q1)
    g = params.gravity * np.array([proximal * c0 + distal * c01, distal * c01])
    return {'A': mass_matrix(q, params), 'b': b, 'g': g}


def potential_energy(q: Sequence[float], params: TwoDofParams) -> float:
    proximal, distal, _ = _mass_terms(params)
    return params.gravity * (proximal * math.sin(q[0]) + distal * math.sin(q[0] + q[1]))


def mechanical_energy(q: Sequence[float], qdot: Sequence[float], params: TwoDofParams) -> float:
    qdot = np.asarray(qdot, dtype=float)
    return 0.5 * float(qdot @ mass_matrix(q, params) @ qdot) + potential_energy(q, params)


def knee_position(q: Sequence[float], params: TwoDofParams) -> np.ndarray:
    return params.shank.length * np.array([math.cos(q[0]), math.sin(q[0])])


def forward_kinematics(q: Sequence[float], params: TwoDofParams) -> np.ndarray:
    thigh = params.thigh.length * np.array([math.cos(q[0] + q[1]), math.sin(q[0] + q[1])])
    return knee_position(q, params) + thigh


def inverse_kinematics(x: Sequence[float], params: TwoDofParams, knee_forward: bool = True) -> np.ndarray:
    """Joint angles placing the hip at x; the knee sits on the +x side of the foot-hip line when knee_forward."""
    l0, l1 = params.shank.length, params.thigh.length
    px, py = float(x[0]), float(x[1])
    cos_knee = (px ** 2 + py ** 2 - l0 ** 2 - l1 ** 2) / (2.0 * l0 * l1)
    if abs(cos_knee) > 1.0:
        raise WorkspaceViolation(f"hip target ({px:.4f}, {py:.4f}) m is out of reach")
    q1 = math.acos(cos_knee) * (1.0 if knee_forward else -1.0)
    q0 = math.atan2(py, px) - math.atan2(l1 * math.sin(q1), l0 + l1 * math.cos(q1))
    return np.array([q0, q1])


def hip_jacobian(q: Sequence[float], params: TwoDofParams, qdot: Sequence[float] | None = None) -> dict[str, np.ndarray]:
    """Hip Jacobian J(q) and, when q̇ is given, its time derivative J̇(q, q̇)."""
    l0, l1 = params.shank.length, params.thigh.length
    s0, c0 = math.sin(q[0]), math.cos(q[0])
    s01, c01 = math.sin(q[0] + q[1]), math.cos(q[0] + q[1])
    out = {'J': np.array([[-l0 * s0 - l1 * s01, -l1 * s01],
                          [l0 * c0 + l1 * c01, l1 * c01]])}
    if qdot is not None:
        w0, w01 = qdot[0], qdot[0] + qdot[1]
        out['Jdot'] = np.array([[-l0 * c0 * w0 - l1 * c01 * w01, -l1 * c01 * w01],
                                [-l0 * s0 * w0 - l1 * s01 * w01, -l1 * s01 * w01]])
    return out


def is_singular(q: Sequence[float], params: TwoDofParams) -> bool:
    scale = params.shank.length * params.thigh.length
    return abs(np.linalg.det(hip_jacobian(q, params)['J'])) < SINGULAR_DET_TOL * scale


def task_inverse(jacobian: np.ndarray, params: TwoDofParams) -> tuple[np.ndarray, bool]:
    """J⁻¹, or the damped inverse Jᵀ(JJᵀ + λ²I)⁻¹ with λ ramping in as |det J| falls below the threshold."""
    threshold = DAMPING_DET_TOL * params.shank.length * params.thigh.length
    det = abs(np.linalg.det(jacobian))
    if det >= threshold:
        return np.linalg.inv(jacobian), False
    lam = DAMPING_SCALE * np.linalg.norm(jacobian, 2) * (1.0 - det / threshold)
    damped = jacobian.T @ np.linalg.inv(jacobian @ jacobian.T + lam ** 2 * np.eye(2))
    return damped, True


class OscCommand(NamedTuple):
    torque: np.ndarray
    status: str | None = None


def osc_torque(q, qdot, x_des, xd_des, xdd_des, gains: TaskGains, params: TwoDofParams,
               warn: bool = True) -> OscCommand:
    """τ = A·J⁻¹(ẍ_des + K_p·e + K_d·ė − J̇q̇) + b + g.

    Near a singular Jacobian the damped inverse is used and the status is SINGULARITY_EVENT.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    terms = dynamics_terms(q, qdot, params)
    jac = hip_jacobian(q, params, qdot)
    e = np.asarray(x_des, dtype=float) - forward_kinematics(q, params)
    e_dot = np.asarray(xd_des, dtype=float) - jac['J'] @ qdot
    accel = (np.asarray(xdd_des, dtype=float) + np.asarray(gains.kp) * e + np.asarray(gains.kd) * e_dot
             - jac['Jdot'] @ qdot)
    j_inv, damped = task_inverse(jac['J'], params)
    torque = terms['A'] @ (j_inv @ accel) + terms['b'] + terms['g']
    if not damped:
        return OscCommand(torque)
    if warn:
        logger.warning("%s at q=(%.4f, %.4f)", SINGULARITY_EVENT, q[0], q[1])
    return OscCommand(torque, SINGULARITY_EVENT)


def forward_dynamics(q, qdot, torque, params: TwoDofParams, hip_force=(0.0, 0.0)) -> np.ndarray:
    terms = dynamics_terms(q, qdot, params)
    generalized = np.asarray(torque, dtype=float) - terms['b'] - terms['g']
    if hip_force[0] or hip_force[1]:
        generalized = generalized + hip_jacobian(q, params)['J'].T @ np.asarray(hip_force, dtype=float)
    return np.linalg.solve(terms['A'], generalized)


@dataclass(frozen=True)
class LinkageMap:
    """Prismatic-to-revolute transmission at one posture; the same arm maps force and velocity."""
    moment_arm: float

    def torque(self, force: float) -> float:
        return self.moment_arm * force

    def force(self, torque: float) -> float:
        return torque / self.moment_arm

    def screw_speed(self, joint_speed: float) -> float:
        return self.moment_arm * joint_speed


def linkage_map(q: float, joint_index: int, profile: LinkageProfile | Sequence[LinkageProfile]) -> LinkageMap:
    if joint_index not in (0, 1):
        raise ValueError(f"joint index must be 0 or 1, got {joint_index}")
    if not isinstance(profile, LinkageProfile):
        profile = profile[joint_index]
    lo, hi = profile.angle_range
    if not lo <= q <= hi:
        raise OutOfRange(f"joint {joint_index} angle {q:.4f} rad outside linkage table [{lo:.4f}, {hi:.4f}]")
    return LinkageMap(float(np.interp(q, profile.angles, profile.moment_arms)))


def joint_flexion(q: Sequence[float]) -> tuple[float, float]:
    """Linkage table angles: ankle measured from upright, knee as is."""
    return q[0] - math.pi / 2.0, q[1]


def minimum_jerk(s: float) -> tuple[float, float, float]:
    """Normalized minimum-jerk profile and its first two derivatives on s ∈ [0, 1]."""
    s = min(max(s, 0.0), 1.0)
    return (10 * s ** 3 - 15 * s ** 4 + 6 * s ** 5,
            30 * s ** 2 - 60 * s ** 3 + 30 * s ** 4,
            60 * s - 180 * s ** 2 + 120 * s ** 3)


class HipTrajectory:
    """Desired hip position, velocity and acceleration as functions of time."""
    def __init__(self, spec: TrajectorySpec):
        self.spec = spec
        self._axis = np.array([1.0, 0.0]) if spec.axis == 'x' else np.array([0.0, 1.0])
        self._center = np.asarray(spec.center, dtype=float)
        self._spline = None
        if spec.kind == 'bspline':
            if len(spec.knots) < 3:
                raise ValueError("a quadratic B-spline trajectory needs at least 3 knots")
            knots = np.asarray(spec.knots, dtype=float)
            self._spline = make_interp_spline(knots[:, 0], knots[:, 1:], k=2)
            self._t_range = (knots[0, 0], knots[-1, 0])

    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        spec = self.spec
        zero = np.zeros(2)
        if spec.kind == 'sine':
            w = 2.0 * math.pi * spec.frequency
            a = spec.amplitude
            return (self._center + self._axis * a * math.sin(w * t),
                    self._axis * a * w * math.cos(w * t),
                    -self._axis * a * w ** 2 * math.sin(w * t))
        if spec.kind == 'lift':
            T = spec.lift_duration
            p, v, acc = minimum_jerk(t / T)
            inside = 0.0 <= t <= T
            return (self._center + self._axis * spec.amplitude * p,
                    self._axis * spec.amplitude * v / T if inside else zero,
                    self._axis * spec.amplitude * acc / T ** 2 if inside else zero)
        if spec.kind == 'bspline':
            t0, t1 = self._t_range
            if t <= t0 or t >= t1:
                return np.asarray(self._spline(min(max(t, t0), t1)), dtype=float), zero, zero
            return (np.asarray(self._spline(t), dtype=float),
                    np.asarray(self._spline(t, 1), dtype=float),
                    np.asarray(self._spline(t, 2), dtype=float))
        return self._center.copy(), zero, zero


def check_workspace(trajectory: HipTrajectory, duration: float, params: TwoDofParams, step: float = 1e-3) -> None:
    inner = abs(params.shank.length - params.thigh.length) + WORKSPACE_MARGIN_M
    outer = params.reach - WORKSPACE_MARGIN_M
    for t in np.arange(0.0, duration + step, step):
        x, _, _ = trajectory(float(t))
        r = float(np.hypot(*x))
        if not inner <= r <= outer or x[1] <= 0.0:
            raise WorkspaceViolation(
                f"hip target ({x[0]:.4f}, {x[1]:.4f}) m at t={t:.3f} s leaves the workspace "
                f"[{inner:.3f}, {outer:.3f}] m")


class JointSensor:
    """Joint angles delayed by whole control periods; velocity through a first-order low-pass."""
    def __init__(self, sensing: SensingParams, q0: np.ndarray, qdot0: np.ndarray, period: float):
        self._buffer = deque([(q0.copy(), qdot0.copy())] * (sensing.delay_samples + 1),
                             maxlen=sensing.delay_samples + 1)
        self._filters = None
        if sensing.velocity_cutoff_hz is not None:
            wc = 2.0 * math.pi * sensing.velocity_cutoff_hz
            self._filters = [simkit.DiscreteFilter.bilinear((wc,), (wc, 1.0), 1.0 / period) for _ in range(2)]
            # settle the filters on the initial velocity
            for f, v in zip(self._filters, qdot0):
                for _ in range(200):
                    f.step(float(v))

    def read(self, q: np.ndarray, qdot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        self._buffer.append((q.copy(), qdot.copy()))
        q_meas, qdot_meas = self._buffer[0]
        if self._filters is not None:
            qdot_meas = np.array([f.step(float(v)) for f, v in zip(self._filters, qdot_meas)])
        return q_meas, qdot_meas


class OscSimulator:
    """Forward dynamics at the plant rate with the task-space controller at the control rate."""

    def __init__(self, params: TwoDofParams | None = None, gains: TaskGains | None = None,
                 profile: LinkageProfile | Sequence[LinkageProfile] | None = None,
                 actuator: ActuatorParams | None = None, force_gains: ControllerGains | None = None,
                 sensing: SensingParams | None = None):
        self.params = params or TwoDofParams()
        self.gains = gains or TaskGains()
        self.profile = profile or LinkageProfile.constant()
        self.actuator = actuator or ActuatorParams()
        self.force_gains = force_gains or ControllerGains(q_taud_cutoff=2.0 * math.pi * CASCADE_DOB_CUTOFF_HZ)
        self.sensing = sensing or SensingParams()
        self.period = ToolkitConfig.control_period()
        self.substeps = ToolkitConfig.PLANT_SUBSTEPS

    def _linkages(self, q: np.ndarray) -> tuple[LinkageMap, LinkageMap]:
        flex = joint_flexion(q)
        return linkage_map(flex[0], 0, self.profile), linkage_map(flex[1], 1, self.profile)

    def _advance(self, q: np.ndarray, qdot: np.ndarray, torque: np.ndarray, hip_force: np.ndarray,
                 dt: float) -> tuple[np.ndarray, np.ndarray]:
        def deriv(y: np.ndarray) -> np.ndarray:
            return np.concatenate((y[2:], forward_dynamics(y[:2], y[2:], torque, self.params, hip_force)))

        y = np.concatenate((q, qdot))
        for _ in range(self.substeps):
            y = simkit.rk4_step(deriv, y, dt)
        return y[:2], y[2:]

    def run(self, trajectory: TrajectorySpec, duration: float, mode: TorqueMode | str = TorqueMode.IDEAL,
            hip_force: tuple[float, float] = (0.0, 0.0), initial_offset: tuple[float, float] = (0.0, 0.0),
            knee_forward: bool = True) -> SimTrace:
        mode = TorqueMode(mode)
        params = self.params
        path = HipTrajectory(trajectory)
        check_workspace(path, duration, params)

        x0, xd0, _ = path(0.0)
        q = inverse_kinematics(x0 + np.asarray(initial_offset, dtype=float), params, knee_forward)
        qdot = np.linalg.solve(hip_jacobian(q, params)['J'], xd0)
        sensor = JointSensor(self.sensing, q, qdot, self.period)

        loops = None
        if mode is TorqueMode.CASCADED:
            loops = [simkit.ForceLoop(ControllerKind.PDmDOB, self.actuator, self.force_gains) for _ in range(2)]
            hold = osc_torque(q, qdot, *path(0.0), self.gains, params, warn=False).torque
            maps = self._linkages(q)
            for _ in range(int(round(PRE_ROLL_S / self.period))):
                for loop, link, tau in zip(loops, maps, hold):
                    loop.tick(link.force(tau))

        n = int(round(duration / self.period))
        names = ['t_s', 'hip_x_m', 'hip_y_m', 'hip_x_des_m', 'hip_y_des_m', 'err_m']
        for j in (0, 1):
            names += [f'q{j}_rad', f'qd{j}_rad_s', f'tau{j}_Nm', f'tau{j}_cmd_Nm', f'f{j}_N', f'i{j}_A',
                      f'w{j}_rad_s', f'p{j}_W', f'r{j}_m']
        cols = {name: np.zeros(n) for name in names}
        damped_ticks = 0
        saturated = 0
        dt = self.period / self.substeps
        force_vec = np.asarray(hip_force, dtype=float)

        for k in range(n):
            t = k * self.period
            x_des, xd_des, xdd_des = path(t)
            q_meas, qdot_meas = sensor.read(q, qdot)
            tau_cmd, status = osc_torque(q_meas, qdot_meas, x_des, xd_des, xdd_des, self.gains, params, warn=False)
            damped_ticks += status == SINGULARITY_EVENT
            maps = self._linkages(q)

            applied = np.empty(2)
            for j in (0, 1):
                force_cmd = maps[j].force(tau_cmd[j])
                screw = maps[j].screw_speed(qdot[j])
                if loops is None:
                    force, current, deflection_speed = force_cmd, force_cmd / self.actuator.N, 0.0
                    applied[j] = tau_cmd[j]
                else:
                    sample = loops[j].tick(force_cmd)
                    saturated += sample.saturated
                    force, current = sample.f_measured, sample.current
                    deflection_speed = loops[j].plant.v_r
                    # mean spring force over the period
                    applied[j] = maps[j].torque(0.5 * (sample.f_measured + loops[j].plant.spring_force))
                motor_speed = self.actuator.N_m * (screw + deflection_speed)
                cols[f'q{j}_rad'][k] = q[j]
                cols[f'qd{j}_rad_s'][k] = qdot[j]
                cols[f'tau{j}_Nm'][k] = maps[j].torque(force)
                cols[f'tau{j}_cmd_Nm'][k] = tau_cmd[j]
                cols[f'f{j}_N'][k] = force
                cols[f'i{j}_A'][k] = current
                cols[f'w{j}_rad_s'][k] = motor_speed
                cols[f'p{j}_W'][k] = maps[j].torque(force) * qdot[j]
                cols[f'r{j}_m'][k] = maps[j].moment_arm

            hip = forward_kinematics(q, params)
            cols['t_s'][k] = t
            cols['hip_x_m'][k], cols['hip_y_m'][k] = hip
            cols['hip_x_des_m'][k], cols['hip_y_des_m'][k] = x_des
            cols['err_m'][k] = float(np.hypot(*(x_des - hip)))

            q, qdot = self._advance(q, qdot, applied, force_vec, dt)

        events: list[str] = []
        if damped_ticks:
            logger.warning("%s on %d of %d control periods", SINGULARITY_EVENT, damped_ticks, n)
            events.append(f"{SINGULARITY_EVENT}: {damped_ticks} periods")
        if saturated:
            logger.warning("actuator current clipped on %d joint-periods", saturated)
            events.append(f"{simkit.SATURATION_EVENT}: {saturated} joint-periods clipped")
        logger.info("testbed %s run: %s, %.2f s, max hip error %.4g m", mode.value, trajectory.kind, duration,
                    float(np.max(cols['err_m'])) if n else 0.0)
        return SimTrace(dt=self.period, columns=cols, events=tuple(events),
                        attrs={'payload_kg': params.payload_mass, 'mode': mode.value,
                               'singularity_periods': damped_ticks})


def _with_payload(params: TwoDofParams | None, payload: float | None) -> TwoDofParams:
    params = params or TwoDofParams()
    return params if payload is None else params.model_copy(update={'payload_mass': float(payload)})


def simulate_osc(trajectory: TrajectorySpec, payload: float | None = None,
                 mode: TorqueMode | str = TorqueMode.IDEAL, duration: float = 2.0,
                 params: TwoDofParams | None = None, gains: TaskGains | None = None, **options) -> SimTrace:
    """Track a hip trajectory; extra keyword options go to OscSimulator (profile, actuator, sensing, ...).

    In cascaded mode each joint's force loop runs on the fixed-output plant, so joint motion does not
    feed back into it; tracking error and efficiency then stay close to the ideal-torque run.
    """
    run_options = {key: options.pop(key) for key in ('hip_force', 'initial_offset', 'knee_forward') if key in options}
    simulator = OscSimulator(_with_payload(params, payload), gains, **options)
    return simulator.run(trajectory, duration, mode, **run_options)


def simulate_lift(payload: float, travel: float, duration: float, mode: TorqueMode | str = TorqueMode.IDEAL,
                  start: tuple[float, float] = (0.05, 0.40), hold: float = 0.3,
                  params: TwoDofParams | None = None, **options) -> SimTrace:
    """Minimum-jerk vertical hip lift of `travel` metres in `duration` seconds, then a hold."""
    spec = TrajectorySpec(kind='lift', center=start, amplitude=travel, lift_duration=duration, axis='y')
    return simulate_osc(spec, payload, mode, duration + hold, params, **options)


def simulate_push(force: float, gains: TaskGains, duration: float = 2.0, direction: str = 'x',
                  params: TwoDofParams | None = None, center: tuple[float, float] = (0.05, 0.50),
                  **options) -> SimTrace:
    """Hold the hip at `center` under a constant push along x or y; records the deflection."""
    push = (force, 0.0) if direction == 'x' else (0.0, force)
    spec = TrajectorySpec(kind='hold', center=center)
    trace = simulate_osc(spec, None, TorqueMode.IDEAL, duration, params, gains, hip_force=push, **options)
    columns = dict(trace.columns)
    columns['dx_m'] = trace['hip_x_m'] - center[0]
    columns['dy_m'] = trace['hip_y_m'] - center[1]
    return SimTrace(trace.dt, columns, trace.events, dict(trace.attrs, push_N=force))


def lift_summary(trace: SimTrace, actuator: ActuatorParams | None = None) -> dict[str, float]:
    actuator = actuator or ActuatorParams()
    return {
        'peak_torque_Nm': float(max(np.max(np.abs(trace['tau0_Nm'])), np.max(np.abs(trace['tau1_Nm'])))),
        'peak_force_N': float(max(np.max(np.abs(trace['f0_N'])), np.max(np.abs(trace['f1_N'])))),
        'theoretical_peak_force_N': vlca.peak_force(actuator),
        'peak_power_W': float(np.max(trace['p0_W'] + trace['p1_W'])),
        'max_error_m': float(np.max(trace['err_m'])),
    }


def joint_power_trace(trace: SimTrace, joint: int) -> SimTrace:
    """Single-joint view with the columns the power-flow pipeline reads."""
    return SimTrace(trace.dt, {'t_s': trace['t_s'], 'i_m_A': trace[f'i{joint}_A'],
                               'motor_speed_rad_s': trace[f'w{joint}_rad_s'],
                               'joint_power_W': trace[f'p{joint}_W']})
