"""Viscoelastic material table, property fitting and the material-selection ranking."""
import logging
import math
from typing import Iterable, Sequence

import numpy as np
from scipy import stats
from scipy.optimize import curve_fit

from vlcakit.errors import AllExcluded, DegenerateData, FitDiverged
from vlcakit.models.linear import FrequencyResponsePoint
from vlcakit.models.material import MaterialRecord, RankingResult, RankingWeights, RelaxationFit, StiffnessFit
from vlcakit.services import lintf

logger = logging.getLogger(__name__)

TESTBED_DAMPING_NS_PER_M = 8000.0
MIN_RELAXATION_SPAN_S = 100.0

# criterion -> (record field, higher is better)
CRITERIA: dict[str, tuple[str, bool]] = {
    'linearity': ('linearity_r2', True),
    'compression_set': ('compression_set_pct', False),
    'creep': ('creep_pct', False),
    'damping': ('damping_Ns_per_m', True),
    'cost': ('cost_usd', False),
}

_TABLE = (
    # name, compression set %, R², stiffness N/mm, preloaded modulus N/mm², damping N·s/m, creep %, cost $
    ('Spring steel', 0.0, 0.996, 860.8, None, 0.0, 0.0, None),
    ('Polyurethane 90A', 2.0, 0.992, 8109.0, 112.5, 16000.0, 15.3, 19.40),
    ('Reinforced silicone 70A', 2.7, 0.978, 57570.0, 798.7, 242000.0, None, 29.08),
    ('Buna-N 90A', 2.8, 0.975, 11270.0, 156.4, 29000.0, 25.0, 51.47),
    ('Viton 75A', 4.0, 0.963, 2430.0, 33.7, 9000.0, 30.14, 105.62),
    ('Polyurethane 80A', 4.5, 0.993, 2266.0, 31.4, 4000.0, 16.8, 19.40),
    ('EPDM 80A', 6.48, 0.939, 6499.0, 90.2, 16000.0, 23.4, 35.28),
    ('Silicone 90A', None, 0.983, 12460.0, 172.9, 37000.0, 10.7, 29.41),
)


def builtin_materials() -> list[MaterialRecord]:
    """The eight characterized samples, 46 mm diameter by 27 mm thick."""
    return [MaterialRecord(name=name, compression_set_pct=cs, linearity_r2=r2, linear_stiffness_N_per_mm=k,
                           preloaded_modulus_N_per_mm2=modulus, damping_Ns_per_m=b, creep_pct=creep, cost_usd=cost)
            for name, cs, r2, k, modulus, b, creep, cost in _TABLE]


def fit_linear_stiffness(samples: Sequence[tuple[float, float]]) -> StiffnessFit:
    """Least-squares slope (N/m) of force against displacement, with intercept."""
    data = np.asarray(samples, dtype=float).reshape(-1, 2)
    x, force = data[:, 0], data[:, 1]
    if x.size == 0 or np.ptp(x) == 0.0:
        raise DegenerateData("displacement samples have zero variance")
    if x.size < 5:
        raise ValueError(f"need at least 5 samples, got {x.size}")
    result = stats.linregress(x, force)
    r_square = float(result.rvalue ** 2) if np.ptp(force) > 0 else 1.0
    return StiffnessFit(stiffness=float(result.slope), r_square=min(r_square, 1.0))


def _relaxation(t, f0, c, tau):
    return f0 * (1.0 - c * (1.0 - np.exp(-t / tau)))


def relaxation_curve(t, fit: RelaxationFit) -> np.ndarray:
    return _relaxation(np.asarray(t, dtype=float), fit.f0, fit.creep_pct / 100.0, fit.tau)


def fit_stress_relaxation(samples: Sequence[tuple[float, float]]) -> RelaxationFit:
    """Fit F(t) = F0·(1 - c·(1 - exp(-t/τ))) to a force record held at constant displacement."""
    data = np.asarray(samples, dtype=float).reshape(-1, 2)
    t, force = data[:, 0], data[:, 1]
    if t.size < 4:
        raise ValueError(f"need at least 4 samples, got {t.size}")
    span = float(t[-1] - t[0])
    if span < MIN_RELAXATION_SPAN_S:
        raise ValueError(f"relaxation record spans {span:.1f} s, need {MIN_RELAXATION_SPAN_S:g} s")
    if abs(t[0]) > 0.01 * span:
        raise ValueError(f"relaxation record must start at t = 0, starts at {t[0]:g} s")

    f_start = float(force[0])
    if np.ptp(force) <= 1e-12 * max(abs(f_start), 1.0):
        return RelaxationFit(f0=f_start, creep_pct=0.0, tau=span)

    tail = float(np.mean(force[-max(t.size // 20, 1):]))
    c_guess = 1.0 - tail / f_start if f_start else 0.1
    drop = f_start - force
    reached = np.nonzero(drop >= 0.63 * (f_start - tail))[0]
    tau_guess = float(t[reached[0]]) if reached.size and t[reached[0]] > 0 else span / 5.0
    try:
        popt, _ = curve_fit(_relaxation, t, force, p0=(f_start, c_guess, tau_guess), method='lm', maxfev=5000,
                            ftol=1e-14, xtol=1e-14)
    except (RuntimeError, ValueError) as exc:
        raise FitDiverged(f"stress-relaxation fit failed: {exc}") from exc
    f0, c, tau = (float(v) for v in popt)
    if not all(math.isfinite(v) for v in popt) or tau <= 0.0:
        raise FitDiverged(f"stress-relaxation fit produced F0={f0}, c={c}, tau={tau}")
    logger.debug("relaxation fit: F0=%.4g N, c=%.4g, tau=%.4g s", f0, c, tau)
    return RelaxationFit(f0=f0, creep_pct=max(100.0 * c, 0.0), tau=tau)


def estimate_damping_from_chirp(points: Sequence[FrequencyResponsePoint], moving_mass: float, stiffness: float,
                                testbed_damping: float = TESTBED_DAMPING_NS_PER_M) -> float:
    """Material damping (N·s/m): fitted total damping 2ζω_n·m minus the testbed's own."""
    fit = lintf.fit_second_order(points)
    expected = math.sqrt(stiffness / moving_mass)
    if abs(fit['omega_n'] / expected - 1.0) > 0.1:
        logger.warning("fitted resonance %.4g rad/s differs from sqrt(k/m) = %.4g rad/s",
                       fit['omega_n'], expected)
    total = 2.0 * fit['zeta'] * fit['omega_n'] * moving_mass
    return max(total - testbed_damping, 0.0)


def rank_materials(records: Iterable[MaterialRecord], weights: RankingWeights | None = None) -> RankingResult:
    """Weighted sum of min-max normalized criteria; best first, ties by name."""
    weights = weights or RankingWeights()
    records = list(records)
    if not records:
        raise ValueError("no materials to rank")
    active = {name: getattr(weights, name) for name in CRITERIA if getattr(weights, name) > 0}

    eligible: list[MaterialRecord] = []
    excluded: dict[str, str] = {}
    for record in records:
        missing = [name for name in active if getattr(record, CRITERIA[name][0]) is None]
        if missing:
            excluded[record.name] = f"missing {', '.join(missing)}"
        elif ('damping' in active and weights.min_damping_Ns_per_m is not None
              and record.damping_Ns_per_m < weights.min_damping_Ns_per_m):
            excluded[record.name] = f"damping below {weights.min_damping_Ns_per_m:g} N·s/m"
        else:
            eligible.append(record)
    if not eligible:
        raise AllExcluded(f"every material was excluded: {excluded}")

    scores = np.zeros(len(eligible))
    for name, weight in active.items():
        field, higher_better = CRITERIA[name]
        values = np.array([getattr(r, field) for r in eligible], dtype=float)
        lo, hi = values.min(), values.max()
        if hi == lo:
            normalized = np.ones_like(values)
        else:
            normalized = (values - lo) / (hi - lo) if higher_better else (hi - values) / (hi - lo)
        scores += weight * normalized
    if len(eligible) == 1:
        scores[:] = 1.0

    ranked = sorted(((r.name, float(s)) for r, s in zip(eligible, scores)), key=lambda item: (-item[1], item[0]))
    for name, reason in excluded.items():
        logger.info("ranking: excluded %s (%s)", name, reason)
    return RankingResult(ranked=ranked, excluded=excluded)


def synthesize_relaxation(f0: float, creep_pct: float, tau: float, duration: float = 300.0, dt: float = 1.0,
                          noise: float = 0.0, seed: int = 0) -> list[tuple[float, float]]:
    """Single-exponential relaxation record; noise is a standard deviation relative to F0."""
    t = np.arange(int(round(duration / dt)) + 1) * dt
    force = _relaxation(t, f0, creep_pct / 100.0, tau)
    if noise > 0:
        force = force + noise * f0 * np.random.default_rng(seed).standard_normal(t.size)
    return [(float(a), float(b)) for a, b in zip(t, force)]


def synthesize_hysteresis_loop(stiffness: float, amplitude: float, width: float = 0.05, preload: float = 0.0,
                               points: int = 200, noise: float = 0.0,
                               seed: int = 0) -> list[tuple[float, float]]:
    """One elliptic load/unload cycle around a preload; width is the loop half-height relative to k·amplitude."""
    theta = np.linspace(0.0, 2.0 * np.pi, points, endpoint=False)
    x = preload + amplitude * np.cos(theta)
    force = stiffness * x + width * stiffness * amplitude * np.sin(theta)
    if noise > 0:
        force = force + noise * stiffness * amplitude * np.random.default_rng(seed).standard_normal(points)
    return [(float(a), float(b)) for a, b in zip(x, force)]
