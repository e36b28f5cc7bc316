"""Frequency response, stability margins and loop algebra for DelayedTransferFunction."""
import logging
import math
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import least_squares

from vlcakit.config import ToolkitConfig
from vlcakit.errors import DelayNotClosed, FitDiverged, NoCrossover, PoleOnAxis
from vlcakit.models.linear import DelayedTransferFunction, FrequencyResponsePoint, StabilityReport

logger = logging.getLogger(__name__)

BODE_CSV_HEADER = ('omega_rad_s', 'magnitude', 'phase_deg')

_POLE_EPS = 1e-300


class Composition(str, Enum):
    SERIES = 'series'
    PARALLEL = 'parallel'
    UNITY_FEEDBACK = 'unity_feedback'


def _evaluate_rational(tf: DelayedTransferFunction, omegas: np.ndarray) -> np.ndarray:
    s = 1j * omegas
    den = tf.denominator(s)
    if np.any(np.abs(den) < _POLE_EPS):
        bad = omegas[np.abs(den) < _POLE_EPS][0]
        raise PoleOnAxis(f"denominator vanishes at omega={bad:g} rad/s")
    return tf.numerator(s) / den


def tf_eval(tf: DelayedTransferFunction, omega: float) -> complex:
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    value = _evaluate_rational(tf, np.array([float(omega)]))[0]
    return complex(value * np.exp(-1j * omega * tf.delay_s))


def evaluate_many(tf: DelayedTransferFunction, omegas: Sequence[float] | np.ndarray) -> np.ndarray:
    w = np.asarray(omegas, dtype=float)
    return _evaluate_rational(tf, w) * np.exp(-1j * w * tf.delay_s)


def _unwrapped_phase(tf: DelayedTransferFunction, omegas: np.ndarray, values: np.ndarray) -> np.ndarray:
    # the transport delay is added analytically so dense delays never alias the unwrap
    return np.unwrap(np.angle(values)) - omegas * tf.delay_s


def log_grid(omega_min: float, omega_max: float, points_per_decade: int) -> np.ndarray:
    decades = math.log10(omega_max / omega_min)
    n = max(int(math.ceil(decades * points_per_decade)) + 1, 2)
    return np.logspace(math.log10(omega_min), math.log10(omega_max), n)


def bode_sweep(tf: DelayedTransferFunction, omega_min: float, omega_max: float,
               points_per_decade: int = 24) -> list[FrequencyResponsePoint]:
    if not 0 < omega_min < omega_max:
        raise ValueError(f"need 0 < omega_min < omega_max, got [{omega_min}, {omega_max}]")
    if points_per_decade < 8:
        raise ValueError("points_per_decade must be at least 8")
    omegas = log_grid(omega_min, omega_max, points_per_decade)
    rational = _evaluate_rational(tf, omegas)
    magnitude = np.abs(rational)
    phase = np.degrees(_unwrapped_phase(tf, omegas, rational))
    return [FrequencyResponsePoint(float(w), float(m), float(p)) for w, m, p in zip(omegas, magnitude, phase)]


def response_rows(points: Iterable[FrequencyResponsePoint]) -> list[tuple[float, float, float]]:
    return [(p.omega, p.magnitude, p.phase_deg) for p in points]


def _wrap_deg(angle: float) -> float:
    wrapped = math.fmod(angle + 180.0, 360.0)
    if wrapped <= 0.0:
        wrapped += 360.0
    return wrapped - 180.0


def _bisect(fn, lo: float, hi: float, rel_tol: float) -> float:
    f_lo = fn(lo)
    for _ in range(400):
        if hi / lo - 1.0 <= rel_tol:
            break
        mid = math.sqrt(lo * hi)
        f_mid = fn(mid)
        if (f_mid >= 0.0) == (f_lo >= 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def stability_margins(open_loop: DelayedTransferFunction,
                      band: tuple[float, float] | None = None,
                      points_per_decade: int | None = None,
                      rel_tol: float | None = None) -> StabilityReport:
    """Phase and gain margins of a loop gain.

    Every unity-gain crossing in the scan band is refined by bisection and the smallest
    phase margin wins. Gain margin is the smallest over -180° crossings, +inf if none.
    """
    lo_band, hi_band = band or ToolkitConfig.MARGIN_BAND_RAD_S
    density = points_per_decade or ToolkitConfig.MARGIN_POINTS_PER_DECADE
    tol = rel_tol or ToolkitConfig.MARGIN_REL_TOL

    omegas = log_grid(lo_band, hi_band, density)
    rational = _evaluate_rational(open_loop, omegas)
    log_mag = np.log(np.abs(rational))
    phase = np.degrees(_unwrapped_phase(open_loop, omegas, rational))

    def log_gain(w: float) -> float:
        return math.log(abs(tf_eval(open_loop, w)))

    above = log_mag >= 0.0
    gain_idx = np.nonzero(above[:-1] != above[1:])[0]
    if gain_idx.size == 0:
        raise NoCrossover(
            f"|G| stays {'above' if above[0] else 'below'} 1 over [{lo_band:g}, {hi_band:g}] rad/s")

    margins = []
    for i in gain_idx:
        wc = _bisect(log_gain, float(omegas[i]), float(omegas[i + 1]), tol)
        pm = _wrap_deg(180.0 + math.degrees(np.angle(tf_eval(open_loop, wc))))
        margins.append((pm, wc))
    phase_margin, crossover = min(margins)

    level = np.floor((phase + 180.0) / 360.0)
    phase_idx = np.nonzero(level[:-1] != level[1:])[0]
    gain_margin = math.inf
    phase_crossover = None
    for i in phase_idx:
        target = -180.0 + 360.0 * max(level[i], level[i + 1])
        reference = phase[i]

        def phase_offset(w: float, ref=reference, tgt=target) -> float:
            ang = math.degrees(np.angle(tf_eval(open_loop, w)))
            ang += 360.0 * round((ref - ang) / 360.0)
            return ang - tgt

        wp = _bisect(phase_offset, float(omegas[i]), float(omegas[i + 1]), tol)
        gm = -20.0 * math.log10(abs(tf_eval(open_loop, wp)))
        if gm < gain_margin:
            gain_margin, phase_crossover = gm, wp

    logger.debug("margins: %d gain crossing(s), %d phase crossing(s), PM=%.3f deg at %.4g rad/s",
                 len(margins), len(phase_idx), phase_margin, crossover)
    return StabilityReport(
        phase_margin_deg=phase_margin,
        gain_crossover_rad_s=crossover,
        gain_margin_db=gain_margin,
        phase_crossover_rad_s=phase_crossover,
        crossover_count=len(margins),
    )


def compose(kind: Composition | str, a: DelayedTransferFunction,
            b: DelayedTransferFunction) -> DelayedTransferFunction:
    kind = Composition(kind)
    if kind is Composition.SERIES:
        result = DelayedTransferFunction(a.numerator * b.numerator, a.denominator * b.denominator,
                                         a.delay_s + b.delay_s)
        return result.reduced()
    if a.is_delayed or b.is_delayed:
        raise DelayNotClosed(f"{kind.value} needs delay-free operands")
    if kind is Composition.PARALLEL:
        num = a.numerator * b.denominator + b.numerator * a.denominator
        return DelayedTransferFunction(num, a.denominator * b.denominator).reduced()
    num = a.numerator * b.denominator
    den = a.denominator * b.denominator + a.numerator * b.numerator
    return DelayedTransferFunction(num, den).reduced()


def series(*tfs: DelayedTransferFunction) -> DelayedTransferFunction:
    result = tfs[0]
    for tf in tfs[1:]:
        result = compose(Composition.SERIES, result, tf)
    return result


def second_order_response(gain: float, omega_n: float, zeta: float, omegas: np.ndarray) -> np.ndarray:
    w = np.asarray(omegas, dtype=float)
    return gain * omega_n ** 2 / (omega_n ** 2 - w ** 2 + 2j * zeta * omega_n * w)


def _initial_guess(omegas: np.ndarray, magnitude: np.ndarray, phase_deg: np.ndarray) -> np.ndarray:
    gain = float(np.median(magnitude[:3]))
    below = np.nonzero(phase_deg <= -90.0)[0]
    if below.size and below[0] > 0:
        j = below[0]
        frac = (-90.0 - phase_deg[j - 1]) / (phase_deg[j] - phase_deg[j - 1])
        omega_n = float(np.exp(np.log(omegas[j - 1]) + frac * (np.log(omegas[j]) - np.log(omegas[j - 1]))))
    else:
        omega_n = float(omegas[np.argmax(magnitude)])
    peak = float(np.interp(np.log(omega_n), np.log(omegas), magnitude))
    zeta = float(np.clip(gain / (2.0 * peak), 0.01, 5.0))
    return np.log([gain, omega_n, zeta])


def fit_second_order(points: Sequence[FrequencyResponsePoint], phase_weight: float = 0.5) -> dict[str, float]:
    """Fit k·ωn²/(s²+2ζωn s+ωn²) to measured points (log-magnitude + weighted phase, radians)."""
    if len(points) < 10:
        raise ValueError("fit_second_order needs at least 10 points")
    omegas = np.array([p.omega for p in points])
    magnitude = np.array([p.magnitude for p in points])
    phase = np.radians([p.phase_deg for p in points])
    if np.any(magnitude <= 0) or np.any(np.diff(omegas) <= 0):
        raise ValueError("points need positive magnitudes and strictly increasing omega")

    def residuals(x: np.ndarray) -> np.ndarray:
        k, wn, zeta = np.exp(x)
        model = second_order_response(k, wn, zeta, omegas)
        model_phase = -np.arctan2(2.0 * zeta * wn * omegas, wn ** 2 - omegas ** 2)
        return np.concatenate([np.log(np.abs(model)) - np.log(magnitude), phase_weight * (model_phase - phase)])

    x0 = _initial_guess(omegas, magnitude, np.degrees(phase))
    try:
        result = least_squares(residuals, x0, ftol=1e-14, xtol=1e-14, gtol=1e-14, max_nfev=2000)
    except (ValueError, FloatingPointError) as exc:
        raise FitDiverged(f"second-order fit failed: {exc}") from exc
    if not result.success or not np.all(np.isfinite(result.x)):
        raise FitDiverged(f"second-order fit did not converge: {result.message}")
    k, wn, zeta = (float(v) for v in np.exp(result.x))
    logger.debug("fit_second_order: k=%.6g omega_n=%.6g zeta=%.6g cost=%.3g", k, wn, zeta, result.cost)
    return {'gain': k, 'omega_n': wn, 'zeta': zeta}
