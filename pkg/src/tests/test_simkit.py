import math

import numpy as np
import pytest
from scipy import signal

from vlcakit.errors import InsufficientExcitation, NonFiniteState
from vlcakit.models.actuator import ActuatorParams, ControllerGains, ControllerKind, PositionGains
from vlcakit.models.simulation import (ForceReference, Grounding, ImpactConfig, PlantState, ReferenceKind,
                                       SpringElement, chirp_value)
from vlcakit.models.thermal import ThermalParams
from vlcakit.models.trace import SimTrace
from vlcakit.services import lintf, simkit, vlca


@pytest.fixture()
def params() -> ActuatorParams:
    return ActuatorParams()


@pytest.fixture()
def gains() -> ControllerGains:
    return ControllerGains(delay_T=0.0)


def free_decay(params: ActuatorParams, x0: float, t: float) -> float:
    wn = vlca.natural_frequency(params)
    zeta = vlca.damping_ratio(params)
    wd = wn * math.sqrt(1 - zeta ** 2)
    return math.exp(-zeta * wn * t) * (x0 * math.cos(wd * t) + zeta * wn * x0 / wd * math.sin(wd * t))


def integrate(state: PlantState, current: float, dt: float, steps: int) -> PlantState:
    for _ in range(steps):
        state = simkit.step_plant(state, current, 0.0, dt)
    return state


def test_equilibrium_stays_at_rest(params: ActuatorParams) -> None:
    state = integrate(PlantState.at_rest(params), 0.0, 1e-4, 100)
    assert state.x_r == 0.0 and state.v_r == 0.0


def test_constant_current_settles_at_static_deflection(params: ActuatorParams) -> None:
    state = integrate(PlantState.at_rest(params), 1.0, 1e-4, 10000)
    assert state.x_r == pytest.approx(params.N / params.k_r, rel=1e-6)
    assert state.x_r == pytest.approx(2.431e-5, rel=1e-3)


def test_free_decay_matches_damping_ratio(params: ActuatorParams) -> None:
    dt = 1e-5
    state = PlantState.at_rest(params, x_r=1e-4)
    xs = [state.x_r]
    for _ in range(20000):
        state = simkit.step_plant(state, 0.0, 0.0, dt)
        xs.append(state.x_r)
    x = np.array(xs)
    peaks = [i for i in range(1, x.size - 1) if x[i - 1] < x[i] > x[i + 1]]
    decrement = math.log(x[peaks[0]] / x[peaks[1]])
    zeta = decrement / math.sqrt(4 * math.pi ** 2 + decrement ** 2)
    assert zeta == pytest.approx(vlca.damping_ratio(params), rel=0.01)


def test_rk4_fourth_order_convergence(params: ActuatorParams) -> None:
    x0, horizon = 1e-4, 0.1
    errors = []
    for dt in (1e-3, 5e-4):
        state = integrate(PlantState.at_rest(params, x_r=x0), 0.0, dt, int(round(horizon / dt)))
        errors.append(abs(state.x_r - free_decay(params, x0, horizon)))
    assert errors[0] / errors[1] >= 8.0


def test_unforced_energy_never_grows(params: ActuatorParams) -> None:
    state = PlantState.at_rest(params, x_r=1e-4, v_r=0.05)
    energy = state.energy()
    for _ in range(5000):
        state = simkit.step_plant(state, 0.0, 0.0, 1e-4)
        assert state.energy() <= energy * (1 + 1e-9)
        energy = state.energy()


def test_step_plant_guards(params: ActuatorParams) -> None:
    state = PlantState.at_rest(params)
    with pytest.raises(ValueError):
        simkit.step_plant(state, 0.0, 0.0, 2e-3)
    with pytest.raises(NonFiniteState):
        simkit.step_plant(state, math.nan, 0.0, 1e-4)


def test_command_delay_shifts_impulse_by_length() -> None:
    delay = simkit.CommandDelay(3)
    out = [delay.push(v) for v in [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]]
    assert out == [0.0, 0.0, 0.0, 1.0, 0.0, 0.0]
    assert len(delay) == 3
    with pytest.raises(ValueError):
        simkit.CommandDelay(0)


def test_delay_buffer_counts_plant_substeps() -> None:
    assert simkit.delay_samples(ControllerGains(delay_T=0.0)) == 1
    assert simkit.delay_samples(ControllerGains(delay_T=1e-3)) == 10


def test_discrete_filter_matches_lfilter() -> None:
    b, a = signal.bilinear([1.0, 0.0], [1.0, 300.0], fs=1000.0)
    filt = simkit.DiscreteFilter(b, a)
    x = np.random.default_rng(3).normal(size=200)
    ours = np.array([filt.step(v) for v in x])
    np.testing.assert_allclose(ours, signal.lfilter(b, a, x), rtol=1e-12, atol=1e-12)


def test_pdm_step_has_no_steady_state_error(params: ActuatorParams, gains: ControllerGains) -> None:
    reference = ForceReference(kind=ReferenceKind.STEP, amplitude=200.0, offset=0.0, t_start=0.05)
    trace = simkit.run_force_tracking(ControllerKind.PDm, gains, params, reference, 0.5)
    assert trace['f_meas_N'][-1] == pytest.approx(200.0, rel=1e-6)
    assert not trace.events


def test_dob_ramp_tracking(params: ActuatorParams, gains: ControllerGains) -> None:
    dob = gains.model_copy(update={'q_taud_cutoff': 2 * math.pi * 60})
    reference = ForceReference()
    trace = simkit.run_force_tracking(ControllerKind.PDmDOB, dob, params, reference, 0.5)
    metrics = simkit.tracking_metrics(trace, start=reference.t_start, full_scale=reference.amplitude)
    assert metrics['max_error'] < 0.05
    assert metrics['overshoot'] < 0.10
    assert trace['f_meas_N'][-1] == pytest.approx(reference.amplitude, rel=0.01)


def test_dob_with_vanishing_cutoff_reduces_to_pdm(params: ActuatorParams, gains: ControllerGains) -> None:
    reference = ForceReference()
    pdm = simkit.run_force_tracking(ControllerKind.PDm, gains, params, reference, 0.35)
    dob = simkit.run_force_tracking(ControllerKind.PDmDOB, gains.model_copy(update={'q_taud_cutoff': 1e-9}),
                                    params, reference, 0.35)
    assert np.max(np.abs(pdm['f_meas_N'] - dob['f_meas_N'])) < 1e-9


def test_closed_loop_chirp_matches_analytic_magnitude(params: ActuatorParams, gains: ControllerGains) -> None:
    reference = ForceReference(kind=ReferenceKind.CHIRP, amplitude=100.0, t_start=0.0, f0=0.5, f1=40.0,
                               sweep_time=10.0)
    trace = simkit.run_force_tracking(ControllerKind.PDm, gains, params, reference, 10.5)
    freqs = np.geomspace(1.0, 20.0, 10)
    points = simkit.empirical_frequency_response(trace, frequencies_hz=freqs)
    model = vlca.closed_loop_tf(ControllerKind.PDm, params,
                                gains.model_copy(update={'delay_T': simkit.effective_delay(gains)}))
    for p in points:
        assert p.magnitude == pytest.approx(abs(model(p.omega)), rel=0.05)


def test_chirp_identification_matches_force_plant(params: ActuatorParams) -> None:
    trace = simkit.run_chirp_identification(params)
    points = simkit.empirical_frequency_response(trace, 'motor_force_N', 'f_meas_N',
                                                 frequencies_hz=np.geomspace(1.0, 100.0, 12))
    plant = vlca.force_plant(params)
    for p in points:
        expected = lintf.tf_eval(plant, p.omega)
        assert p.magnitude == pytest.approx(abs(expected), rel=0.10)
        assert p.phase_deg == pytest.approx(math.degrees(np.angle(expected)), abs=5.0)


def _chirp_trace(delay: float = 0.0, f0: float = 0.5, f1: float = 200.0) -> SimTrace:
    dt, sweep = 1e-4, 10.0
    t = np.arange(int(round((sweep + 0.1) / dt))) * dt
    u = np.array([chirp_value(tk, f0, f1, sweep, 1.0) for tk in t])
    y = np.array([chirp_value(tk - delay, f0, f1, sweep, 1.0) for tk in t])
    return SimTrace(dt=dt, columns={'t_s': t, 'f_cmd_N': u, 'f_meas_N': y},
                    attrs={'f0': f0, 'f1': f1, 'sweep_time': sweep})


def test_identity_chirp_has_unit_response() -> None:
    points = simkit.empirical_frequency_response(_chirp_trace())
    assert all(p.magnitude == pytest.approx(1.0, rel=1e-9) for p in points)
    assert all(p.phase_deg == pytest.approx(0.0, abs=1e-6) for p in points)


def test_delayed_chirp_shows_phase_deficit() -> None:
    points = simkit.empirical_frequency_response(_chirp_trace(delay=1e-3), frequencies_hz=[50.0])
    assert points[0].phase_deg == pytest.approx(-360.0 * 50.0 * 1e-3, abs=1.0)


def test_narrow_chirp_is_rejected() -> None:
    with pytest.raises(InsufficientExcitation):
        simkit.empirical_frequency_response(_chirp_trace(f0=5.0, f1=50.0))


def test_elastomer_beats_steel_spring(params: ActuatorParams) -> None:
    position = PositionGains()
    elastomer = simkit.step_metrics(simkit.run_joint_position_control('elastomer', position, params))
    steel = simkit.step_metrics(simkit.run_joint_position_control('steel_spring', position, params))
    assert elastomer['settling_time'] < steel['settling_time']
    assert elastomer['overshoot'] < steel['overshoot']


def test_steel_spring_is_less_damped(params: ActuatorParams) -> None:
    position = PositionGains()
    zeta_elastomer = simkit.dominant_damping_ratio(SpringElement.elastomer(), params, position)
    zeta_steel = simkit.dominant_damping_ratio(SpringElement.steel_spring(), params, position)
    assert zeta_steel < zeta_elastomer
    assert SpringElement.steel_spring().stiffness == pytest.approx(0.11 * 5.5e6)


def test_zero_position_step_stays_still(params: ActuatorParams) -> None:
    trace = simkit.run_joint_position_control('elastomer', PositionGains(step=0.0), params, duration=0.5)
    assert np.all(trace['q_out'] == 0.0)


def test_impact_forces_similar_but_deflection_differs(params: ActuatorParams) -> None:
    rigid = simkit.run_impact(ImpactConfig(grounding=Grounding.RIGID), params)
    soft = simkit.run_impact(ImpactConfig(grounding=Grounding.VISCOELASTIC), params)
    peak_rigid = np.max(np.abs(rigid['f_loadcell_N']))
    peak_soft = np.max(np.abs(soft['f_loadcell_N']))
    assert abs(peak_soft - peak_rigid) / peak_rigid < 0.15
    assert np.max(np.abs(rigid['x_r_m'])) == 0.0
    assert np.max(np.abs(soft['x_r_m'])) > 1e-5
    assert peak_rigid == pytest.approx(ImpactConfig().peak_force, rel=1e-3)


def test_zero_impulse_is_flat(params: ActuatorParams) -> None:
    trace = simkit.run_impact(ImpactConfig(impulse=0.0), params)
    assert np.all(trace['f_loadcell_N'] == 0.0)
    assert np.all(trace['x_r_m'] == 0.0)


def test_impact_pulse_width_bounds() -> None:
    with pytest.raises(ValueError):
        ImpactConfig(pulse_width=0.1e-3)


def test_saturation_is_clipped_and_recorded(params: ActuatorParams, gains: ControllerGains) -> None:
    reference = ForceReference(kind=ReferenceKind.STEP, amplitude=1e5, offset=0.0, t_start=0.0)
    trace = simkit.run_force_tracking(ControllerKind.PDm, gains, params, reference, 0.05)
    assert np.max(np.abs(trace['i_m_A'])) == pytest.approx(31.0)
    assert any(e.startswith(simkit.SATURATION_EVENT) for e in trace.events)


def test_thermal_column_when_enabled(params: ActuatorParams, gains: ControllerGains) -> None:
    reference = ForceReference(kind=ReferenceKind.STEP, amplitude=2000.0, offset=0.0, t_start=0.0)
    trace = simkit.run_force_tracking(ControllerKind.PDm, gains, params, reference, 0.2, thermal=ThermalParams())
    assert 'temp_C' in trace
    assert trace['temp_C'][-1] > trace['temp_C'][0] >= 25.0


def test_step_metrics_on_synthetic_response() -> None:
    t = np.arange(0, 1.0, 0.01)
    y = 1 - np.exp(-t / 0.1)
    trace = SimTrace(dt=0.01, columns={'t_s': t, 'q_out': y}, attrs={'step': 1.0})
    metrics = simkit.step_metrics(trace)
    assert metrics['overshoot'] == 0.0
    assert metrics['settling_time'] == pytest.approx(0.40, abs=0.011)
