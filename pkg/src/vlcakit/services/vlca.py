"""Plant and force-loop construction for the liquid-cooled viscoelastic actuator."""
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from vlcakit.errors import MissingFilterCutoff, NoCrossover, VlcaError
from vlcakit.models.actuator import ActuatorParams, ControllerGains, ControllerKind
from vlcakit.models.linear import DelayedTransferFunction, FrequencyResponsePoint, StabilityReport
from vlcakit.services import lintf

logger = logging.getLogger(__name__)

MARGIN_CSV_HEADER = ('controller', 'phase_margin_deg', 'gain_crossover_hz', 'gain_margin_db')
CONTROLLER_ORDER = (ControllerKind.PDf, ControllerKind.PDm, ControllerKind.PIDm, ControllerKind.PDmDOB)
PLANT_LABEL = 'plant'


def plant_px(params: ActuatorParams) -> DelayedTransferFunction:
    """Motor current to elastomer deflection, m/A."""
    return DelayedTransferFunction.from_coefficients(
        (params.N,), (params.k_r, params.effective_damping, params.effective_mass))


def force_plant(params: ActuatorParams) -> DelayedTransferFunction:
    """Measured elastomer force over motor force (k_r·P_x/N); unity at DC."""
    return DelayedTransferFunction.from_coefficients(
        (params.k_r,), (params.k_r, params.effective_damping, params.effective_mass))


def natural_frequency(params: ActuatorParams) -> float:
    return math.sqrt(params.k_r / params.effective_mass)


def damping_ratio(params: ActuatorParams) -> float:
    return params.effective_damping / (2.0 * math.sqrt(params.k_r * params.effective_mass))


def derivative_filter(gains: ControllerGains) -> DelayedTransferFunction:
    """Q_d: filtered differentiator s·wc/(s+wc)."""
    if gains.q_d_cutoff is None:
        raise MissingFilterCutoff("PDf needs gains.q_d_cutoff")
    wc = gains.q_d_cutoff
    return DelayedTransferFunction.from_coefficients((0.0, wc), (wc, 1.0))


def dob_filter(gains: ControllerGains) -> DelayedTransferFunction:
    """Q_taud: second-order low-pass with unit DC gain."""
    if gains.q_taud_cutoff is None:
        raise MissingFilterCutoff("PDmDOB needs gains.q_taud_cutoff")
    wc = gains.q_taud_cutoff
    return DelayedTransferFunction.from_coefficients((wc ** 2,), (wc ** 2, 2.0 * gains.q_taud_zeta * wc, 1.0))


def _motor_damping_gain(params: ActuatorParams, gains: ControllerGains) -> float:
    # K_dm·N_m/k_r turns motor-velocity feedback into a force-rate term
    return gains.k_dm * params.N_m / params.k_r


def _compensator(kind: ControllerKind, params: ActuatorParams, gains: ControllerGains) -> DelayedTransferFunction:
    """Feedback path acting on the measured force (without the feedforward +1)."""
    c = _motor_damping_gain(params, gains)
    if kind is ControllerKind.PDf:
        q_d = derivative_filter(gains)
        return lintf.compose(lintf.Composition.PARALLEL, DelayedTransferFunction.gain(gains.k_p),
                             q_d.scaled(gains.resolved_k_df(params)))
    if kind is ControllerKind.PIDm:
        return DelayedTransferFunction.from_coefficients((gains.k_i, gains.k_p, c), (0.0, 1.0))
    return DelayedTransferFunction.from_coefficients((gains.k_p, c), (1.0,))


def open_loop_tf(kind: ControllerKind | str, params: ActuatorParams, gains: ControllerGains) -> DelayedTransferFunction:
    kind = ControllerKind(kind)
    plant = force_plant(params)
    if kind is not ControllerKind.PDmDOB:
        return lintf.compose(lintf.Composition.SERIES, plant, _compensator(kind, params, gains)).with_delay(gains.delay_T)

    q = dob_filter(gains)
    pd_loop = DelayedTransferFunction(plant.numerator * _compensator(ControllerKind.PDm, params, gains).numerator,
                                      plant.denominator)
    a, d = pd_loop.numerator, pd_loop.denominator
    q_n, q_d = q.numerator, q.denominator
    loop = DelayedTransferFunction(q_n * d + a * q_d, d * (q_d - q_n))
    return loop.reduced().with_delay(gains.delay_T)


@dataclass(frozen=True)
class ClosedLoopResponse:
    """F_k/F_r evaluator: forward·e^{-Ts}/(1 + loop·e^{-Ts})."""
    kind: ControllerKind
    forward: DelayedTransferFunction
    loop: DelayedTransferFunction

    def __call__(self, omega: float) -> complex:
        return complex(self.evaluate(np.array([omega]))[0])

    def evaluate(self, omegas: Sequence[float] | np.ndarray) -> np.ndarray:
        w = np.asarray(omegas, dtype=float)
        return lintf.evaluate_many(self.forward, w) / (1.0 + lintf.evaluate_many(self.loop, w))

    def sweep(self, omega_min: float, omega_max: float, points_per_decade: int = 24) -> list[FrequencyResponsePoint]:
        omegas = lintf.log_grid(omega_min, omega_max, points_per_decade)
        values = self.evaluate(omegas)
        phase = np.degrees(np.unwrap(np.angle(values)))
        return [FrequencyResponsePoint(float(w), float(abs(v)), float(p)) for w, v, p in zip(omegas, values, phase)]


def closed_loop_tf(kind: ControllerKind | str, params: ActuatorParams, gains: ControllerGains) -> ClosedLoopResponse:
    kind = ControllerKind(kind)
    plant = force_plant(params)
    if kind is ControllerKind.PIDm:
        feedforward = DelayedTransferFunction.from_coefficients((gains.k_i, gains.k_p + 1.0), (0.0, 1.0))
    else:
        feedforward = DelayedTransferFunction.gain(gains.k_p + 1.0)
    forward = lintf.compose(lintf.Composition.SERIES, plant, feedforward)
    if kind is ControllerKind.PDmDOB:
        q = dob_filter(gains)
        one_minus_q = DelayedTransferFunction(q.denominator - q.numerator, q.denominator)
        forward = lintf.compose(lintf.Composition.SERIES, forward, one_minus_q.reciprocal())
    return ClosedLoopResponse(kind, forward.with_delay(gains.delay_T), open_loop_tf(kind, params, gains))


@dataclass(frozen=True)
class MarginEntry:
    label: str
    report: StabilityReport | None = None
    error: str | None = None

    def row(self) -> tuple:
        if self.report is None:
            return self.label, None, None, None
        return (self.label, self.report.phase_margin_deg, self.report.gain_crossover_hz,
                self.report.gain_margin_db)


def _margin_entry(label: str, loop: DelayedTransferFunction) -> MarginEntry:
    try:
        return MarginEntry(label, report=lintf.stability_margins(loop))
    except NoCrossover as exc:
        logger.warning("%s: %s", label, exc)
        return MarginEntry(label, error=str(exc))


def margin_table(params: ActuatorParams, gains: ControllerGains) -> list[MarginEntry]:
    """Margins for PDf, PDm, PIDm, PDmDOB, then the bare force plant."""
    entries = [_margin_entry(kind.value, open_loop_tf(kind, params, gains)) for kind in CONTROLLER_ORDER]
    entries.append(_margin_entry(PLANT_LABEL, force_plant(params).with_delay(gains.delay_T)))
    return entries


@dataclass(frozen=True)
class CalibrationPoint:
    delay_T: float
    q_d_cutoff_hz: float
    pm_pdf: float
    pm_pdm: float
    pm_pidm: float
    pm_dob: float
    residual: float

    def gains(self, base: ControllerGains) -> ControllerGains:
        return base.model_copy(update={'delay_T': self.delay_T, 'q_d_cutoff': 2 * math.pi * self.q_d_cutoff_hz})


def calibrate_loop_delay(params: ActuatorParams, gains: ControllerGains,
                         delays: Iterable[float] | None = None,
                         cutoffs_hz: Iterable[float] | None = None,
                         targets: tuple[float, float] = (17.1, 47.6)) -> CalibrationPoint:
    """Grid search over (T, Q_d cutoff) for the phase margins of PDf and PDm closest to targets.

    The default delays run from 0 to 2.5 ms. Restricted to T >= 0.25 ms the PDm margin stays near 41°
    and cannot reach 47.6°.
    """
    delays = list(np.linspace(0.0, 2.5e-3, 11) if delays is None else delays)
    cutoffs = list(np.geomspace(20.0, 200.0, 11) if cutoffs_hz is None else cutoffs_hz)
    target_pdf, target_pdm = targets

    def pm(kind: ControllerKind, g: ControllerGains) -> float:
        try:
            return lintf.stability_margins(open_loop_tf(kind, params, g)).phase_margin_deg
        except NoCrossover:
            return math.nan

    best: tuple[float, float, float, float, float] | None = None
    for delay in delays:
        at_delay = gains.model_copy(update={'delay_T': float(delay)})
        pm_pdm = pm(ControllerKind.PDm, at_delay)
        for f_d in cutoffs:
            pm_pdf = pm(ControllerKind.PDf, at_delay.model_copy(update={'q_d_cutoff': 2 * math.pi * float(f_d)}))
            residual = (pm_pdf - target_pdf) ** 2 + (pm_pdm - target_pdm) ** 2
            if math.isfinite(residual) and (best is None or residual < best[0]):
                best = (residual, float(delay), float(f_d), pm_pdf, pm_pdm)
    if best is None:
        raise VlcaError("no grid point produced finite phase margins")

    residual, delay, f_d, pm_pdf, pm_pdm = best
    chosen = gains.model_copy(update={'delay_T': delay, 'q_d_cutoff': 2 * math.pi * f_d})
    point = CalibrationPoint(delay, f_d, pm_pdf, pm_pdm,
                             pm(ControllerKind.PIDm, chosen), pm(ControllerKind.PDmDOB, chosen), residual)
    logger.info("loop delay calibration: T=%.3g s, f_d=%.4g Hz, PM(PDf)=%.2f, PM(PDm)=%.2f",
                delay, f_d, pm_pdf, pm_pdm)
    return point


def bandwidth(kind: ControllerKind | str, params: ActuatorParams, gains: ControllerGains,
              omega_range: tuple[float, float] = (0.1, 1e4)) -> dict[str, float | None]:
    """Closed-loop bandwidth under both the -3 dB and the -90° criteria, in Hz."""
    response = closed_loop_tf(kind, params, gains)
    omegas = lintf.log_grid(*omega_range, 400)
    values = response.evaluate(omegas)
    mag_db = 20.0 * np.log10(np.abs(values))
    phase = np.degrees(np.unwrap(np.angle(values)))

    def first_crossing(signal: np.ndarray, level: float) -> float | None:
        idx = np.nonzero(signal <= level)[0]
        if idx.size == 0 or idx[0] == 0:
            return None
        j = idx[0]
        frac = (level - signal[j - 1]) / (signal[j] - signal[j - 1])
        log_w = math.log(omegas[j - 1]) + frac * (math.log(omegas[j]) - math.log(omegas[j - 1]))
        return math.exp(log_w) / (2.0 * math.pi)

    return {'minus3db_hz': first_crossing(mag_db, mag_db[0] - 3.0), 'minus90deg_hz': first_crossing(phase, -90.0)}


def reflected_mass_sweep(params: ActuatorParams, masses: Iterable[float]) -> list[dict[str, float]]:
    """Force-plant resonance with a free load of the given reflected mass instead of a fixed output."""
    fixed = natural_frequency(params)
    rows = []
    for mass in masses:
        if mass <= 0:
            raise ValueError(f"reflected mass must be positive, got {mass}")
        free = math.sqrt(params.k_r * (1.0 / params.effective_mass + 1.0 / mass))
        rows.append({'load_mass_kg': float(mass), 'resonance_rad_s': free, 'ratio_to_fixed': free / fixed})
    return rows


def peak_force(params: ActuatorParams, current: float = 31.0) -> float:
    return params.N * current

