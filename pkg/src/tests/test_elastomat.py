import math

import numpy as np
import pytest

from vlcakit.errors import AllExcluded, DegenerateData, FitDiverged
from vlcakit.models.linear import FrequencyResponsePoint
from vlcakit.models.material import MaterialRecord, RankingWeights
from vlcakit.services import elastomat, lintf

MOVING_MASS = 50.0
STIFFNESS = 8.109e6


@pytest.fixture()
def elastomers() -> list[MaterialRecord]:
    return [r for r in elastomat.builtin_materials() if r.name != 'Spring steel']


def chirp_points(total_damping: float, mass: float = MOVING_MASS, stiffness: float = STIFFNESS):
    omega_n = math.sqrt(stiffness / mass)
    zeta = total_damping / (2.0 * math.sqrt(stiffness * mass))
    omegas = np.geomspace(omega_n / 30.0, omega_n * 30.0, 60)
    values = lintf.second_order_response(1.0, omega_n, zeta, omegas)
    phase = np.degrees(-np.arctan2(2 * zeta * omega_n * omegas, omega_n ** 2 - omegas ** 2))
    return [FrequencyResponsePoint(float(w), float(abs(v)), float(p)) for w, v, p in zip(omegas, values, phase)]


def test_builtin_table_has_eight_rows() -> None:
    records = {r.name: r for r in elastomat.builtin_materials()}
    assert len(records) == 8
    pu90 = records['Polyurethane 90A']
    assert pu90.linear_stiffness_N_per_mm == 8109.0
    assert pu90.damping_Ns_per_m == 16000.0
    assert pu90.creep_pct == 15.3
    assert pu90.compression_set_pct == 2.0
    assert (pu90.diameter_mm, pu90.thickness_mm) == (46.0, 27.0)


def test_builtin_table_keeps_missing_cells_absent() -> None:
    records = {r.name: r for r in elastomat.builtin_materials()}
    assert records['Reinforced silicone 70A'].creep_pct is None
    assert records['Silicone 90A'].compression_set_pct is None
    assert records['Spring steel'].cost_usd is None
    assert records['Spring steel'].damping_Ns_per_m == 0.0
    assert records['Spring steel'].compression_set_pct == 0.0


def test_linear_stiffness_on_exact_line() -> None:
    x = np.linspace(0.0, 2e-3, 11)
    fit = elastomat.fit_linear_stiffness(list(zip(x, 8.109e6 * x)))
    assert fit.stiffness == pytest.approx(8.109e6, rel=1e-9)
    assert fit.r_square == pytest.approx(1.0)


def test_linear_stiffness_through_hysteresis_loop() -> None:
    loop = elastomat.synthesize_hysteresis_loop(8.109e6, 1e-3, width=0.05, preload=2e-3)
    fit = elastomat.fit_linear_stiffness(loop)
    assert fit.stiffness == pytest.approx(8.109e6, rel=0.02)
    assert fit.r_square < 1.0


def test_linear_stiffness_is_scale_equivariant() -> None:
    loop = elastomat.synthesize_hysteresis_loop(5e6, 1e-3, width=0.1, noise=0.01, seed=4)
    base = elastomat.fit_linear_stiffness(loop)
    scaled = elastomat.fit_linear_stiffness([(x, 3.0 * f) for x, f in loop])
    assert scaled.stiffness == pytest.approx(3.0 * base.stiffness, rel=1e-9)
    assert scaled.r_square == pytest.approx(base.r_square, rel=1e-9)


def test_linear_stiffness_rejects_constant_displacement() -> None:
    with pytest.raises(DegenerateData):
        elastomat.fit_linear_stiffness([(1e-3, 10.0), (1e-3, 12.0)])


def test_relaxation_round_trip() -> None:
    fit = elastomat.fit_stress_relaxation(elastomat.synthesize_relaxation(1000.0, 15.3, 30.0))
    assert fit.f0 == pytest.approx(1000.0, rel=1e-6)
    assert fit.creep_pct == pytest.approx(15.3, rel=1e-6)
    assert fit.tau == pytest.approx(30.0, rel=1e-6)


def test_relaxation_of_constant_force_has_no_creep() -> None:
    fit = elastomat.fit_stress_relaxation([(float(t), 500.0) for t in range(0, 301, 5)])
    assert fit.creep_pct == 0.0
    assert fit.f0 == 500.0


@pytest.mark.parametrize("seed", range(5))
def test_relaxation_with_noise(seed: int) -> None:
    samples = elastomat.synthesize_relaxation(1000.0, 30.0, 60.0, noise=0.02, seed=seed)
    assert elastomat.fit_stress_relaxation(samples).creep_pct == pytest.approx(30.0, abs=3.0)


def test_relaxation_needs_long_record() -> None:
    with pytest.raises(ValueError):
        elastomat.fit_stress_relaxation(elastomat.synthesize_relaxation(1000.0, 15.3, 30.0, duration=50.0))


def test_relaxation_fit_failure_is_reported(monkeypatch) -> None:
    def boom(*args, **kwargs):
        raise RuntimeError("Optimal parameters not found")

    monkeypatch.setattr(elastomat, 'curve_fit', boom)
    with pytest.raises(FitDiverged):
        elastomat.fit_stress_relaxation(elastomat.synthesize_relaxation(1000.0, 15.3, 30.0))


@pytest.mark.parametrize("total, expected", [(24000.0, 16000.0), (8000.0, 0.0), (250000.0, 242000.0)])
def test_damping_from_chirp(total: float, expected: float) -> None:
    damping = elastomat.estimate_damping_from_chirp(chirp_points(total), MOVING_MASS, STIFFNESS)
    assert damping == pytest.approx(expected, rel=1e-4, abs=1e-2)


def test_damping_estimate_is_linear_in_true_damping() -> None:
    high = elastomat.estimate_damping_from_chirp(chirp_points(40000.0), MOVING_MASS, STIFFNESS)
    low = elastomat.estimate_damping_from_chirp(chirp_points(24000.0), MOVING_MASS, STIFFNESS)
    assert high - low == pytest.approx(16000.0, rel=1e-4)


def test_default_ranking_prefers_polyurethane_90a(elastomers: list[MaterialRecord]) -> None:
    result = elastomat.rank_materials(elastomers)
    name, score = result.ranked[0]
    assert name == 'Polyurethane 90A'
    assert score == pytest.approx(4.4615, abs=1e-3)
    assert set(result.excluded) == {'Reinforced silicone 70A', 'Silicone 90A'}


def test_cost_only_ranking_breaks_tie_by_name() -> None:
    weights = RankingWeights(linearity=0, compression_set=0, creep=0, damping=0, cost=1)
    result = elastomat.rank_materials(elastomat.builtin_materials(), weights)
    assert [name for name, _ in result.ranked[:2]] == ['Polyurethane 80A', 'Polyurethane 90A']
    assert 'Spring steel' in result.excluded


def test_single_record_scores_one(elastomers: list[MaterialRecord]) -> None:
    result = elastomat.rank_materials(elastomers[:1])
    assert result.ranked == [(elastomers[0].name, 1.0)]


def test_ranking_invariant_to_weight_scale(elastomers: list[MaterialRecord]) -> None:
    base = elastomat.rank_materials(elastomers, RankingWeights(linearity=1, compression_set=2, creep=0.5,
                                                               damping=1, cost=3))
    scaled = elastomat.rank_materials(elastomers, RankingWeights(linearity=7, compression_set=14, creep=3.5,
                                                                 damping=7, cost=21))
    assert [n for n, _ in base.ranked] == [n for n, _ in scaled.ranked]


def test_damping_threshold_excludes_spring_steel() -> None:
    weights = RankingWeights(cost=0, min_damping_Ns_per_m=1000.0)
    result = elastomat.rank_materials(elastomat.builtin_materials(), weights)
    assert 'damping below' in result.excluded['Spring steel']


def test_all_excluded() -> None:
    records = [r for r in elastomat.builtin_materials() if r.name in ('Spring steel', 'Silicone 90A')]
    with pytest.raises(AllExcluded):
        elastomat.rank_materials(records)
