import hashlib
import json
import logging
import math
import os
from typing import Any, Callable, Sequence

import numpy as np

from vlcakit import __version__
from vlcakit.config import ToolkitConfig
from vlcakit.errors import ConfigInvalid, ScenarioFailed
from vlcakit.models.scenario import RunManifest, ScenarioConfig, ScenarioKind
from vlcakit.models.simulation import Grounding, ReferenceKind, SpringElement
from vlcakit.models.testbed import TaskGains, TorqueMode
from vlcakit.models.thermal import Cooling
from vlcakit.models.trace import CSV_COLUMNS, SimTrace
from vlcakit.rendering.chart_renderer import ChartRenderer, Series
from vlcakit.repository.material_repository import MaterialRepository
from vlcakit.services import elastomat, lintf, powertherm, simkit, testbed, vlca
from vlcakit.storage.filesystem import FileSystem
from vlcakit.validation.config_validator import ConfigValidator, Diagnostic, ResolvedParameters

logger = logging.getLogger(__name__)

IMPACT_CSV_HEADER = ('t_s', 'f_hammer_N', 'f_loadcell_N', 'f_meas_N', 'x_r_m')
PUSH_CSV_HEADER = ('t_s', 'hip_x_m', 'hip_y_m', 'dx_m', 'dy_m', 'tau0_Nm', 'tau1_Nm')
LIFT_CSV_HEADER = testbed.OSC_CSV_HEADER
REFLECTED_MASSES_KG = (1500.0, 1750.0, 2000.0, 2250.0, 2500.0)
PUSH_GAINS = TaskGains(kp=(100.0, 2500.0), kd=(20.0, 100.0))
THERMAL_CSV_STRIDE_S = 1.0
LINKAGE_MOMENT_ARM_M = 0.0458


def config_digest(config: ScenarioConfig) -> str:
    payload = {'scenario': config.scenario.value, 'seed': config.seed,
               'overrides': {key: str(value) for key, value in config.overrides.items()}}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode('utf-8')).hexdigest()


def _finite_or_none(value: float | None) -> float | None:
    return None if value is None or not math.isfinite(value) else float(value)


class _Outputs:
    """Writes one run's files under its output directory and keeps the emission order."""

    def __init__(self, root: str, fs: FileSystem, renderer: ChartRenderer):
        self.root = root
        self.files: list[str] = []
        self._fs = fs
        self._renderer = renderer

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    def record(self, name: str) -> None:
        self.files.append(name)
        logger.info("Wrote %s", self.path(name))

    def csv(self, name: str, header: Sequence[str], rows) -> None:
        self._fs.write_csv(self.path(name), header, rows)
        self.record(name)

    def trace(self, name: str, trace: SimTrace, header: Sequence[str], stride: int = 1) -> None:
        self.csv(name, header, trace.rows(tuple(header))[::stride])

    def chart(self, name: str, title: str, series: Sequence[Series], **labels) -> None:
        self._fs.write_text(self.path(name), self._renderer.line_chart(title, series, **labels))
        self.record(name)


class ScenarioService:
    """Runs one scenario end to end and writes its manifest last (SRP, orchestrates collaborators)."""

    def __init__(self, fs: FileSystem, renderer: ChartRenderer, validator: ConfigValidator | None = None,
                 output_root: str | None = None):
        self._fs = fs
        self._renderer = renderer
        self._validator = validator or ConfigValidator()
        self._output_root = output_root or ToolkitConfig.OUTPUT_ROOT
        self._handlers: dict[ScenarioKind, Callable[[ResolvedParameters, _Outputs, ScenarioConfig], dict]] = {
            ScenarioKind.BODE: self._bode,
            ScenarioKind.MARGINS: self._margins,
            ScenarioKind.FORCE_TRACKING: self._force_tracking,
            ScenarioKind.POSITION_STEP: self._position_step,
            ScenarioKind.IMPACT: self._impact,
            ScenarioKind.OSC: self._osc,
            ScenarioKind.THERMAL: self._thermal,
            ScenarioKind.EFFICIENCY: self._efficiency,
            ScenarioKind.MATERIALS: self._materials,
            ScenarioKind.HIGH_POWER: self._high_power,
        }

    def validate(self, config: ScenarioConfig) -> list[Diagnostic]:
        diagnostics = self._validator.validate(config)
        return diagnostics or self._input_diagnostics(self._validator.resolve(config))

    def _input_diagnostics(self, p: ResolvedParameters) -> list[Diagnostic]:
        if p.run.materials_csv and not MaterialRepository(p.run.materials_csv, self._fs).exists():
            return [Diagnostic('run.materials_csv', 'file not found')]
        return []

    def output_dir(self, config: ScenarioConfig) -> str:
        return config.output_dir or os.path.join(self._output_root, config.scenario.value)

    def run(self, config: ScenarioConfig) -> RunManifest:
        params = self._validator.resolve(config)
        missing = self._input_diagnostics(params)
        if missing:
            raise ConfigInvalid(missing[0].message, missing[0].key_path)
        outputs = _Outputs(self._fs.ensure_dir(self.output_dir(config)), self._fs, self._renderer)
        manifest = RunManifest(toolkit_version=__version__, scenario=config.scenario.value,
                               config_digest=config_digest(config), parameters=params.as_dict())
        logger.info("Running scenario %s into %s", config.scenario.value, outputs.root)
        try:
            summary = self._handlers[config.scenario](params, outputs, config)
        except Exception as exc:
            logger.exception("Scenario %s failed", config.scenario.value)
            manifest = manifest.model_copy(update={'status': 'failed', 'error': f"{type(exc).__name__}: {exc}",
                                                   'files': list(outputs.files)})
            self._write_manifest(outputs, manifest)
            raise ScenarioFailed(f"{config.scenario.value}: {exc}") from exc
        manifest = manifest.model_copy(update={'files': list(outputs.files), 'summary': summary})
        self._write_manifest(outputs, manifest)
        logger.info("Scenario %s finished: %d files", config.scenario.value, len(outputs.files))
        return manifest

    def _write_manifest(self, outputs: _Outputs, manifest: RunManifest) -> None:
        self._fs.write_json(outputs.path(ToolkitConfig.MANIFEST_NAME), manifest.model_dump(mode='json'))

    # frequency domain

    def _bode(self, p: ResolvedParameters, out: _Outputs, config: ScenarioConfig) -> dict[str, Any]:
        run = p.run
        plant = lintf.bode_sweep(vlca.force_plant(p.actuator), run.omega_min, run.omega_max, run.points_per_decade)
        out.csv('bode_plant.csv', lintf.BODE_CSV_HEADER, lintf.response_rows(plant))
        magnitude = [self._db_series('plant', plant)]
        phase = [Series('plant', [pt.omega for pt in plant], [pt.phase_deg for pt in plant])]
        for kind in vlca.CONTROLLER_ORDER:
            closed = vlca.closed_loop_tf(kind, p.actuator, p.gains).sweep(run.omega_min, run.omega_max,
                                                                          run.points_per_decade)
            out.csv(f'closed_loop_{kind.value}.csv', lintf.BODE_CSV_HEADER, lintf.response_rows(closed))
            magnitude.append(self._db_series(kind.value, closed))
            phase.append(Series(kind.value, [pt.omega for pt in closed], [pt.phase_deg for pt in closed]))

        fit = lintf.fit_second_order(plant)
        summary: dict[str, Any] = {
            'natural_frequency_rad_s': vlca.natural_frequency(p.actuator),
            'damping_ratio': vlca.damping_ratio(p.actuator),
            'fitted_omega_n_rad_s': fit['omega_n'],
            'fitted_zeta': fit['zeta'],
        }
        if run.identify:
            trace = simkit.run_chirp_identification(p.actuator)
            empirical = simkit.empirical_frequency_response(trace)
            out.csv('bode_empirical.csv', lintf.BODE_CSV_HEADER, lintf.response_rows(empirical))
            magnitude.append(self._db_series('chirp', empirical))
            summary['empirical_points'] = len(empirical)
        out.chart('bode_magnitude.svg', 'Force plant and closed loops', magnitude,
                  x_label='omega [rad/s]', y_label='magnitude [dB]', log_x=True)
        out.chart('bode_phase.svg', 'Phase', phase, x_label='omega [rad/s]', y_label='phase [deg]', log_x=True)
        return summary

    @staticmethod
    def _db_series(label: str, points) -> Series:
        return Series(label, [pt.omega for pt in points], [pt.magnitude_db for pt in points])

    def _margins(self, p: ResolvedParameters, out: _Outputs, config: ScenarioConfig) -> dict[str, Any]:
        gains = p.gains
        summary: dict[str, Any] = {}
        if p.run.calibrate:
            point = vlca.calibrate_loop_delay(p.actuator, gains)
            out.csv('calibration.csv', ('delay_T_s', 'q_d_cutoff_hz', 'pm_PDf_deg', 'pm_PDm_deg', 'pm_PIDm_deg',
                                        'pm_PDmDOB_deg', 'residual'),
                    [(point.delay_T, point.q_d_cutoff_hz, point.pm_pdf, point.pm_pdm, point.pm_pidm,
                      point.pm_dob, point.residual)])
            gains = point.gains(gains)
            summary['calibrated_delay_T_s'] = point.delay_T
            summary['calibrated_q_d_cutoff_hz'] = point.q_d_cutoff_hz

        entries = vlca.margin_table(p.actuator, gains)
        out.csv('margins.csv', vlca.MARGIN_CSV_HEADER, [entry.row() for entry in entries])
        summary['phase_margin_deg'] = {entry.label: None if entry.report is None
                                       else _finite_or_none(entry.report.phase_margin_deg) for entry in entries}

        rows = []
        for kind in vlca.CONTROLLER_ORDER:
            bw = vlca.bandwidth(kind, p.actuator, gains)
            rows.append((kind.value, bw['minus3db_hz'], bw['minus90deg_hz']))
        out.csv('bandwidth.csv', ('controller', 'minus3db_hz', 'minus90deg_hz'), rows)

        sweep = vlca.reflected_mass_sweep(p.actuator, REFLECTED_MASSES_KG)
        out.csv('reflected_mass.csv', ('load_mass_kg', 'resonance_rad_s', 'ratio_to_fixed'),
                [(r['load_mass_kg'], r['resonance_rad_s'], r['ratio_to_fixed']) for r in sweep])

        loops = []
        for kind in vlca.CONTROLLER_ORDER:
            points = lintf.bode_sweep(vlca.open_loop_tf(kind, p.actuator, gains), p.run.omega_min,
                                      p.run.omega_max, p.run.points_per_decade)
            loops.append(self._db_series(kind.value, points))
        out.chart('open_loop.svg', 'Open-loop gain', loops, x_label='omega [rad/s]', y_label='magnitude [dB]',
                  log_x=True)
        return summary

    # actuator time domain

    def _force_tracking(self, p: ResolvedParameters, out: _Outputs, config: ScenarioConfig) -> dict[str, Any]:
        reference = p.reference
        kind = p.run.controller
        if p.run.duration is not None:
            duration = p.run.duration
        elif reference.kind is ReferenceKind.CHIRP:
            duration = reference.t_start + reference.sweep_time + 0.5
        else:
            duration = reference.t_start + reference.ramp_time + 0.7
        thermal = p.thermal if p.run.thermal else None
        trace = simkit.run_force_tracking(kind, p.gains, p.actuator, reference, duration, thermal, p.run.cooling)
        out.trace('force_tracking.csv', trace, CSV_COLUMNS)
        full_scale = reference.amplitude if reference.kind in (ReferenceKind.STEP, ReferenceKind.RAMP) else None
        metrics = simkit.tracking_metrics(trace, start=reference.t_start, full_scale=full_scale)
        out.chart('force_tracking.svg', f'{kind.value} force tracking',
                  [Series('command', trace.time, trace['f_cmd_N']), Series('measured', trace.time, trace['f_meas_N'])],
                  x_label='t [s]', y_label='force [N]')
        out.chart('motor_current.svg', 'Motor current', [Series('i_m', trace.time, trace['i_m_A'])],
                  x_label='t [s]', y_label='current [A]')
        return {**metrics, 'controller': kind.value, 'events': list(trace.events)}

    def _position_step(self, p: ResolvedParameters, out: _Outputs, config: ScenarioConfig) -> dict[str, Any]:
        duration = p.run.duration or 5.0
        elements = (SpringElement.elastomer(p.actuator.k_r, p.actuator.b_r), SpringElement.steel_spring(p.actuator.k_r))
        summary: dict[str, Any] = {}
        curves = []
        for element in elements:
            trace = simkit.run_joint_position_control(element, p.position, p.actuator, duration)
            out.trace(f'position_step_{element.name}.csv', trace, ('t_s', 'f_cmd_N', 'f_meas_N', 'i_m_A', 'x_r_m',
                                                                  'q_out'))
            metrics = simkit.step_metrics(trace)
            metrics['dominant_zeta'] = simkit.dominant_damping_ratio(element, p.actuator, p.position)
            summary[element.name] = metrics
            curves.append(Series(element.name, trace.time, trace['q_out']))
        out.chart('position_step.svg', 'Output position step', curves, x_label='t [s]', y_label='position [m]')
        return summary

    def _impact(self, p: ResolvedParameters, out: _Outputs, config: ScenarioConfig) -> dict[str, Any]:
        summary: dict[str, Any] = {}
        forces, deflections = [], []
        for grounding in (Grounding.RIGID, Grounding.VISCOELASTIC):
            trace = simkit.run_impact(p.impact.model_copy(update={'grounding': grounding}), p.actuator)
            out.trace(f'impact_{grounding.value}.csv', trace, IMPACT_CSV_HEADER)
            summary[grounding.value] = {'peak_loadcell_N': float(np.max(np.abs(trace['f_loadcell_N']))),
                                        'peak_deflection_m': float(np.max(np.abs(trace['x_r_m'])))}
            forces.append(Series(grounding.value, trace.time, trace['f_loadcell_N']))
            deflections.append(Series(grounding.value, trace.time, trace['x_r_m']))
        out.chart('impact_force.svg', 'Load-cell force', forces, x_label='t [s]', y_label='force [N]')
        out.chart('impact_deflection.svg', 'Elastomer deflection', deflections, x_label='t [s]',
                  y_label='deflection [m]')
        return summary

    # testbed

    @staticmethod
    def _testbed_options(p: ResolvedParameters, config: ScenarioConfig) -> dict[str, Any]:
        options: dict[str, Any] = {'actuator': p.actuator, 'sensing': p.sensing}
        if any(key.startswith('gains.') for key in config.overrides):
            options['force_gains'] = p.gains
        return options

    def _osc(self, p: ResolvedParameters, out: _Outputs, config: ScenarioConfig) -> dict[str, Any]:
        mode = p.run.mode or TorqueMode.IDEAL
        options = self._testbed_options(p, config)
        trace = testbed.simulate_osc(p.trajectory, p.run.payload, mode, p.run.duration or 2.0, p.testbed, p.task,
                                     **options)
        out.trace('osc.csv', trace, testbed.OSC_CSV_HEADER)
        axis = 'hip_y_m' if p.trajectory.axis == 'y' else 'hip_x_m'
        out.chart('osc_tracking.svg', 'Hip tracking',
                  [Series('desired', trace.time, trace[axis.replace('_m', '_des_m')]),
                   Series('actual', trace.time, trace[axis])], x_label='t [s]', y_label='position [m]')
        out.chart('osc_error.svg', 'Hip tracking error', [Series('error', trace.time, trace['err_m'])],
                  x_label='t [s]', y_label='error [m]')

        summary: dict[str, Any] = {'mode': mode.value, 'max_error_m': float(np.max(trace['err_m'])),
                                   'singularity_periods': trace.attrs['singularity_periods'],
                                   'events': list(trace.events)}
        pushes = []
        for direction in ('x', 'y'):
            push = testbed.simulate_push(p.run.push_force, PUSH_GAINS, 2.0, direction, p.testbed, **options)
            out.trace(f'push_{direction}.csv', push, PUSH_CSV_HEADER)
            summary[f'push_{direction}_deflection_m'] = float(push[f'd{direction}_m'][-1])
            pushes.append(Series(f'push {direction}', push.time, push[f'd{direction}_m']))
        out.chart('push.svg', 'Hip deflection under a constant push', pushes, x_label='t [s]',
                  y_label='deflection [m]')
        return summary

    def _lift(self, p: ResolvedParameters, config: ScenarioConfig, payload: float, travel: float,
              lift_time: float, mode: TorqueMode) -> SimTrace:
        return testbed.simulate_lift(p.run.payload if p.run.payload is not None else payload,
                                     p.run.travel or travel, p.run.lift_time or lift_time, p.run.mode or mode,
                                     params=p.testbed, gains=p.task, **self._testbed_options(p, config))

    def _efficiency(self, p: ResolvedParameters, out: _Outputs, config: ScenarioConfig) -> dict[str, Any]:
        trace = self._lift(p, config, 23.0, 0.2, 1.0, TorqueMode.CASCADED)
        out.trace('lift.csv', trace, LIFT_CSV_HEADER)
        knee = testbed.joint_power_trace(trace, 1)
        report = powertherm.power_flow(knee, p.actuator, p.thermal)
        out.csv('efficiency.csv', powertherm.EFFICIENCY_CSV_HEADER,
                [(s.t, s.input_power, s.motor_power, s.joint_power) for s in report.samples])
        out.chart('efficiency.svg', 'Knee power flow',
                  [Series('input', knee.time, [s.input_power for s in report.samples]),
                   Series('motor', knee.time, [s.motor_power for s in report.samples]),
                   Series('joint', knee.time, [s.joint_power for s in report.samples])],
                  x_label='t [s]', y_label='power [W]')
        return {'drivetrain_efficiency_avg': report.drivetrain_efficiency_avg,
                'electrical_efficiency_avg': report.electrical_efficiency_avg,
                'mode': trace.attrs['mode'], 'payload_kg': trace.attrs['payload_kg']}

    def _high_power(self, p: ResolvedParameters, out: _Outputs, config: ScenarioConfig) -> dict[str, Any]:
        trace = self._lift(p, config, 32.5, 0.3, 0.4, TorqueMode.IDEAL)
        out.trace('high_power.csv', trace, LIFT_CSV_HEADER)
        out.chart('high_power_torque.svg', 'Joint torques',
                  [Series('ankle', trace.time, trace['tau0_Nm']), Series('knee', trace.time, trace['tau1_Nm'])],
                  x_label='t [s]', y_label='torque [N·m]')
        out.chart('high_power_power.svg', 'Joint power',
                  [Series('ankle', trace.time, trace['p0_W']), Series('knee', trace.time, trace['p1_W'])],
                  x_label='t [s]', y_label='power [W]')
        return {**testbed.lift_summary(trace, p.actuator), 'payload_kg': trace.attrs['payload_kg'],
                'events': list(trace.events)}

    # thermal and materials

    def _thermal(self, p: ResolvedParameters, out: _Outputs, config: ScenarioConfig) -> dict[str, Any]:
        thermal = powertherm.calibrate_thermal(p.targets, p.actuator, p.thermal)
        residuals = powertherm.thermal_residuals(thermal, p.targets, p.actuator)
        cooling = p.run.cooling
        dt = powertherm.MAX_THERMAL_STEP_S
        stride = int(round(THERMAL_CSV_STRIDE_S / dt))

        settle_current = p.targets.settle_force_n / p.actuator.N
        settle = powertherm.simulate_thermal(settle_current, p.run.duration or 1200.0, cooling, thermal, dt=dt)
        out.trace('thermal_settle.csv', settle, powertherm.THERMAL_CSV_HEADER, stride=stride)
        pulse = powertherm.simulate_thermal(p.targets.peak_current_a, p.targets.peak_duration_s, cooling, thermal,
                                            dt=1e-3)
        out.trace('thermal_pulse.csv', pulse, powertherm.THERMAL_CSV_HEADER)

        limits = {c.value: powertherm.continuous_force_limit(thermal, p.actuator, LINKAGE_MOMENT_ARM_M, c)
                  for c in (Cooling.ON, Cooling.OFF)}
        out.csv('continuous_limits.csv', ('cooling', 'current_A', 'force_N', 'torque_Nm'),
                [(name, v['current_A'], v['force_N'], v['torque_Nm']) for name, v in limits.items()])
        out.chart('thermal_settle.svg', f'Continuous {settle_current:.2f} A, cooling {cooling.value}',
                  [Series('winding', settle.time, settle['T_winding_C']),
                   Series('housing', settle.time, settle['T_housing_C'])],
                  x_label='t [s]', y_label='temperature [°C]')
        out.chart('thermal_pulse.svg', f'{p.targets.peak_current_a:g} A pulse',
                  [Series('winding', pulse.time, pulse['T_winding_C'])], x_label='t [s]',
                  y_label='temperature [°C]')
        return {
            'calibrated': thermal.model_dump(mode='json'),
            'residuals': residuals,
            'final_winding_C': float(settle['T_winding_C'][-1]),
            'pulse_peak_C': float(np.max(pulse['T_winding_C'])),
            'continuous_limits': limits,
        }

    def _materials(self, p: ResolvedParameters, out: _Outputs, config: ScenarioConfig) -> dict[str, Any]:
        if p.run.materials_csv:
            records = MaterialRepository(p.run.materials_csv, self._fs).load_all()
        else:
            records = elastomat.builtin_materials()
        MaterialRepository(out.path('materials.csv'), self._fs).save_all(records)
        out.record('materials.csv')

        ranking = elastomat.rank_materials(records, p.weights)
        out.csv('ranking.csv', ('rank', 'name', 'score'),
                [(index, name, score) for index, (name, score) in enumerate(ranking.ranked, start=1)])
        out.csv('excluded.csv', ('name', 'reason'), sorted(ranking.excluded.items()))

        chosen = next(r for r in records if r.name == ranking.ranked[0][0])
        stiffness = (chosen.linear_stiffness_N_per_mm or 8109.0) * 1e3
        creep = chosen.creep_pct if chosen.creep_pct is not None else 15.3
        relaxation = elastomat.synthesize_relaxation(1000.0, creep, 30.0, noise=0.005, seed=config.seed)
        relax_fit = elastomat.fit_stress_relaxation(relaxation)
        t = np.array([s[0] for s in relaxation])
        fitted = elastomat.relaxation_curve(t, relax_fit)
        out.csv('relaxation.csv', ('t_s', 'force_N', 'fit_N'),
                [(a, b, float(c)) for (a, b), c in zip(relaxation, fitted)])

        loop = elastomat.synthesize_hysteresis_loop(stiffness, 1e-3, preload=2e-3, noise=0.002, seed=config.seed)
        stiff_fit = elastomat.fit_linear_stiffness(loop)
        out.csv('hysteresis.csv', ('x_m', 'force_N'), loop)

        out.chart('relaxation.svg', f'{chosen.name} stress relaxation',
                  [Series('measured', t, [s[1] for s in relaxation]), Series('fit', t, fitted)],
                  x_label='t [s]', y_label='force [N]')
        closed = loop + loop[:1]
        out.chart('hysteresis.svg', f'{chosen.name} load cycle',
                  [Series('loop', [x for x, _ in closed], [f for _, f in closed])],
                  x_label='compression [m]', y_label='force [N]')
        return {
            'selected': chosen.name,
            'ranking': [{'name': name, 'score': score} for name, score in ranking.ranked],
            'excluded': dict(ranking.excluded),
            'relaxation_fit': relax_fit.model_dump(),
            'stiffness_fit': stiff_fit.model_dump(),
        }


def run_scenario(config: ScenarioConfig, output_root: str | None = None) -> RunManifest:
    """Process-pool entry point: builds fresh collaborators for one run."""
    service = ScenarioService(FileSystem(), ChartRenderer(), output_root=output_root)
    return service.run(config)

