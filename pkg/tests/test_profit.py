"""Tests for the one-year profit, its decompositions and expectations."""

import math

import numpy as np
import pytest

from demrisk.contract import Cohort, PolicyKind, PolicySpec, PremiumType
from demrisk.curve import YieldCurve, load_curve, roll_forward
from demrisk.lifetable import ScalingSchedule, npx, scale_table
from demrisk.profit import (
    ClosureError,
    ExpenseAssumptions,
    PathOutcome,
    PortfolioState,
    ProfitDecomposition,
    ProfitError,
    check_closure,
    closure_gap,
    claim_cumulants,
    demographic_profit,
    demographic_profit_sum_at_risk,
    demographic_split,
    expected_demographic_profit,
    expected_demographic_split,
    expected_local_profit,
    homans_components,
    lapse_split,
    local_demographic_profit,
    local_profit_moments,
    project_state,
    safety_loading,
    technical_profit_mcv,
    year_bases,
)
from tests.conftest import DATA_DIR


@pytest.fixture(scope="module")
def synthetic_curve():
    return load_curve(DATA_DIR / "curve_synthetic.csv")


def _unit_state(spec, t):
    return PortfolioState(t=t, w=1.0, l=1, policy=spec, cohort=Cohort(l0=1, sum_mean=1.0))


def _random_outcomes(state, bases, rng, size=1000, lapses=True):
    ws_max = state.w * (0.9 if lapses else 1.0)
    s = rng.uniform(0.0, 0.1 * state.w, size) if lapses else 0.0
    z = rng.uniform(0.0, 0.05 * ws_max, size)
    be_next = bases.be_next_forward + rng.normal(0.0, 0.05, size)
    asset_return = rng.normal(0.01, 0.02, size)
    return PathOutcome.from_deaths(state, z, be_next, s=s, asset_return=asset_return)


@pytest.mark.parametrize("kind", list(PolicyKind))
@pytest.mark.parametrize("t", [0, 5])
def test_decompositions_close_on_random_paths(make_spec, table2016, synthetic_curve, kind, t):
    spec = make_spec(kind=kind, alpha=0.5, beta=0.025, gamma=0.0015)
    state = project_state(spec, Cohort(l0=100, sum_mean=1e4, sum_cv=0.5), t, table2016)
    bases = year_bases(spec, t, roll_forward(synthetic_curve, t), table2016)
    outcome = _random_outcomes(state, bases, np.random.default_rng(100 + t))
    expenses = ExpenseAssumptions(delta_alpha=0.01, delta_beta=0.005, delta_gamma=0.0002)

    parts = homans_components(state, outcome, bases, expenses)
    assert check_closure(parts.components_sum, parts.total, "homans", scale=parts.magnitude) < 1e-8

    total = demographic_profit(state, outcome, bases)
    split = demographic_split(state, outcome, bases)
    assert check_closure(split.total, total, "split", scale=parts.magnitude + split.magnitude) < 1e-8
    via_sum_at_risk = demographic_profit_sum_at_risk(state, outcome, bases)
    assert check_closure(via_sum_at_risk, total, "sum at risk", scale=parts.magnitude + split.magnitude) < 1e-8


def test_scalar_outcome_is_supported(make_spec, table2016):
    spec = make_spec(kind=PolicyKind.ENDOWMENT)
    state = project_state(spec, Cohort(l0=10, sum_mean=1.0), 3, table2016)
    bases = year_bases(spec, 3, YieldCurve.flat(0.01, 40), table2016)
    outcome = PathOutcome.from_deaths(state, 1.0, bases.be_next_forward)
    assert isinstance(technical_profit_mcv(state, outcome, bases), float)


def test_components_vanish_without_spread_or_lapses(make_spec, table2016, synthetic_curve):
    spec = make_spec(kind=PolicyKind.TERM_INSURANCE, alpha=0.2, gamma=0.001)
    state = project_state(spec, Cohort(l0=100, sum_mean=1.0), 4, table2016)
    bases = year_bases(spec, 4, roll_forward(synthetic_curve, 4), table2016)
    rng = np.random.default_rng(3)
    z = rng.uniform(0.0, 2.0, 50)
    outcome = PathOutcome.from_deaths(state, z, bases.be_next_forward, asset_return=spec.technical_rate)
    parts = homans_components(state, outcome, bases, ExpenseAssumptions(delta_alpha=0.01))
    np.testing.assert_allclose(parts.y2_financial, 0.0, atol=1e-12)
    np.testing.assert_allclose(parts.y5_residual, 0.0, atol=1e-12)
    np.testing.assert_allclose(parts.y3_lapse, 0.0, atol=1e-12)
    assert np.all(np.asarray(parts.y4_expense) > 0)


def test_expense_charge_only_on_premium_dates(make_spec, table2016):
    spec = make_spec(premium_type=PremiumType.SINGLE, gamma=0.001)
    state = project_state(spec, Cohort(l0=10, sum_mean=1.0), 2, table2016)
    bases = year_bases(spec, 2, YieldCurve.flat(0.01, 40), table2016)
    outcome = PathOutcome.from_deaths(state, 0.0, bases.be_next_forward, asset_return=0.01)
    parts = homans_components(state, outcome, bases, ExpenseAssumptions(delta_gamma=0.0005))
    assert parts.y4_expense == 0.0


def test_local_profit_formula(make_spec, table2016):
    spec = make_spec()
    state = project_state(spec, Cohort(l0=100, sum_mean=10.0), 2, table2016)
    bases = year_bases(spec, 2, YieldCurve.flat(0.01, 40), table2016)
    outcome = PathOutcome.from_deaths(state, 30.0, bases.be_next_forward)
    expected = bases.sum_at_risk * (bases.q_star * state.w - 30.0)
    assert local_demographic_profit(state, outcome, bases) == pytest.approx(expected, rel=1e-14)


def _sweep_specs(table2016, count=60, seed=21):
    rng = np.random.default_rng(seed)
    for idx in range(count):
        pricing = scale_table(
            table2016,
            ScalingSchedule.constant(float(rng.uniform(0.7, 1.2)), table2016.min_age, table2016.max_age),
        )
        yield PolicySpec(
            kind=list(PolicyKind)[idx % 3],
            premium_type=list(PremiumType)[(idx // 3) % 2],
            issue_age=int(rng.integers(20, 61)),
            duration=int(rng.integers(2, 41)),
            technical_rate=float(rng.uniform(0.006, 0.04)),
            first_order_table=pricing,
        )


def test_local_and_mortality_gap_offset_after_inception(table2016, synthetic_curve):
    worst = 0.0
    for spec in _sweep_specs(table2016):
        for t in range(1, spec.duration):
            state = _unit_state(spec, t)
            bases = year_bases(spec, t, roll_forward(synthetic_curve, t), table2016)
            split = expected_demographic_split(state, bases)
            worst = max(worst, abs(split.lg + split.q_gap))
            assert split.lg == pytest.approx(expected_local_profit(state, bases), abs=1e-15)
            assert split.total == pytest.approx(expected_demographic_profit(state, bases), abs=1e-12)
    assert worst < 1e-10


def test_expected_profit_zero_on_flat_technical_curve(table2016):
    curve = YieldCurve.flat(0.02, 80)
    for spec in _sweep_specs(table2016, count=30, seed=5):
        spec = PolicySpec(
            kind=spec.kind,
            premium_type=spec.premium_type,
            issue_age=spec.issue_age,
            duration=spec.duration,
            technical_rate=0.02,
            first_order_table=spec.first_order_table,
        )
        for t in range(1, spec.duration):
            bases = year_bases(spec, t, roll_forward(curve, t), table2016)
            assert abs(expected_demographic_profit(_unit_state(spec, t), bases)) < 1e-10


def test_expected_profit_matches_rate_gap(make_spec, table2016, synthetic_curve):
    spec = make_spec(kind=PolicyKind.ENDOWMENT)
    t = 6
    bases = year_bases(spec, t, roll_forward(synthetic_curve, t), table2016)
    expected = (bases.be_t + bases.net_premium) * (spec.technical_rate - bases.one_year_rate)
    assert expected_demographic_profit(_unit_state(spec, t), bases) == pytest.approx(expected, abs=1e-12)


def test_first_year_expected_profit_of_pure_endowment(make_spec, table2016):
    spec = make_spec()
    cohort = Cohort(l0=15000, sum_mean=1510653999 / 15000)
    state = project_state(spec, cohort, 0, table2016)
    bases = year_bases(spec, 0, YieldCurve.flat(0.01, 40), table2016)
    p = npx(table2016, 40, 1)
    expected = spec.pure_premium * cohort.w0 * 1.01 - bases.be_next_forward * cohort.w0 * p
    assert expected_demographic_profit(state, bases) == pytest.approx(expected, rel=1e-10)
    assert expected > 0


def test_claim_cumulants_explicit_sums_enumeration():
    sums = np.array([1.0, 3.0])
    q = 0.2
    outcomes = {0.0: 0.64, 1.0: 0.16, 3.0: 0.16, 4.0: 0.04}
    mean = sum(v * p for v, p in outcomes.items())
    var = sum((v - mean) ** 2 * p for v, p in outcomes.items())
    third = sum((v - mean) ** 3 * p for v, p in outcomes.items())
    assert claim_cumulants(2, q, sums=sums) == pytest.approx((mean, var, third), rel=1e-12)


def test_claim_cumulants_without_dispersion_are_binomial():
    k1, k2, k3 = claim_cumulants(100, 0.1, mean_claim=2.0)
    assert k1 == pytest.approx(20.0)
    assert k2 == pytest.approx(100 * 0.1 * 0.9 * 4.0)
    assert k3 == pytest.approx(100 * 0.1 * 0.9 * 0.8 * 8.0)


def test_local_profit_moments(make_spec, table2016):
    spec = make_spec()
    state = project_state(spec, Cohort(l0=1000, sum_mean=2.0), 5, table2016)
    bases = year_bases(spec, 5, YieldCurve.flat(0.01, 40), table2016)
    moments = local_profit_moments(state, bases, lives=state.l)
    mean_claim = state.w / state.l
    assert moments.mean == pytest.approx(expected_local_profit(state, bases), rel=1e-10)
    assert moments.std == pytest.approx(
        abs(bases.sum_at_risk) * mean_claim * math.sqrt(state.l * bases.q * (1 - bases.q)), rel=1e-10
    )
    # negative sum at risk: deaths raise the profit
    assert moments.skewness > 0


def test_safety_loading(table2016, pricing085):
    assert safety_loading(5, pricing085, table2016, 40) == pytest.approx(-0.15, abs=1e-12)


def test_project_state_realistic_survival(make_spec, table2016):
    spec = make_spec()
    cohort = Cohort(l0=15000, sum_mean=100.0)
    state = project_state(spec, cohort, 10, table2016, lapse_rate=0.02)
    factor = npx(table2016, 40, 10) * 0.98**10
    assert state.l == round(15000 * factor)
    assert state.w == pytest.approx(cohort.w0 * factor, rel=1e-12)


def test_lapse_split_with_explicit_sums(make_spec):
    spec = make_spec()
    cohort = Cohort(l0=4, sum_mean=1.0, sums=[1.0, 2.0, 3.0, 4.0])
    state = project_state(spec, cohort, 0, spec.first_order_table)
    split = lapse_split(state, 0.5)
    assert split.exposed == 2
    assert split.s == 7.0
    np.testing.assert_array_equal(split.exposed_sums, [1.0, 2.0])


def test_lapse_split_average_sums(make_spec):
    state = PortfolioState(t=0, w=1000.0, l=100, policy=make_spec(), cohort=Cohort(l0=100, sum_mean=10.0))
    split = lapse_split(state, 0.1)
    assert split.exposed == 90
    assert split.s == pytest.approx(100.0)


def test_state_validation(make_spec):
    spec = make_spec()
    cohort = Cohort(l0=1, sum_mean=1.0)
    with pytest.raises(ProfitError, match="vanish together"):
        PortfolioState(t=0, w=1.0, l=0, policy=spec, cohort=cohort)
    with pytest.raises(ProfitError, match="outside"):
        PortfolioState(t=20, w=1.0, l=1, policy=spec, cohort=cohort)


def test_outcome_must_conserve_sums(make_spec, table2016):
    spec = make_spec()
    state = _unit_state(spec, 1)
    bases = year_bases(spec, 1, YieldCurve.flat(0.01, 40), table2016)
    outcome = PathOutcome(z=0.1, x=0.0, s=0.0, w_next=0.5, be_next=0.5, asset_return=0.0)
    with pytest.raises(ProfitError, match="differs from w_t"):
        demographic_profit(state, outcome, bases)


def test_bases_time_mismatch(make_spec, table2016):
    spec = make_spec()
    bases = year_bases(spec, 2, YieldCurve.flat(0.01, 40), table2016)
    outcome = PathOutcome.from_deaths(_unit_state(spec, 1), 0.0, 0.5)
    with pytest.raises(ProfitError, match="bases for t=2"):
        demographic_profit(_unit_state(spec, 1), outcome, bases)


def test_check_closure_raises():
    with pytest.raises(ClosureError, match="homans closure gap"):
        check_closure(np.array([1.0, 2.0]), np.array([1.0, 2.1]), "homans")


def test_closure_gap_measures_roundoff_against_components():
    # offsetting components of ~2e7 leave a total that is pure roundoff
    parts = ProfitDecomposition(
        y1_demographic=-21_024_194.03,
        y2_financial=21_024_194.03,
        y3_lapse=0.0,
        y4_expense=0.0,
        y5_residual=-5.96e-8,
        total=2.38e-7,
    )
    assert check_closure(parts.components_sum, parts.total, "five-component", scale=parts.magnitude) < 1e-8
    with pytest.raises(ClosureError):
        check_closure(parts.components_sum, parts.total, "five-component")


def test_closure_gap_without_scale():
    gaps = closure_gap(np.array([1.0, 0.0, 0.5]), np.array([1.0, 0.0, 0.0]))
    assert gaps[0] == 0.0
    assert gaps[1] == 0.0
    assert np.isinf(gaps[2])


def test_endowment_final_year_closes_on_large_cohort(make_spec, table2016, synthetic_curve):
    spec = make_spec(kind=PolicyKind.ENDOWMENT, alpha=0.5, beta=0.025, gamma=0.0015)
    cohort = Cohort(l0=15_000, sum_mean=100_000.0, sum_cv=0.0199)
    t = spec.duration - 1
    state = project_state(spec, cohort, t, table2016)
    bases = year_bases(spec, t, roll_forward(synthetic_curve, t), table2016)
    outcome = _random_outcomes(state, bases, np.random.default_rng(19), lapses=False)
    expenses = ExpenseAssumptions(delta_alpha=0.01, delta_beta=0.005, delta_gamma=0.0002)

    parts = homans_components(state, outcome, bases, expenses)
    split = demographic_split(state, outcome, bases)
    scale = parts.magnitude + split.magnitude
    assert state.w > 1e9
    assert check_closure(parts.components_sum, parts.total, "five-component", scale=scale) < 1e-8
    assert check_closure(split.total, parts.y1_demographic, "split", scale=scale) < 1e-8
    via_sum_at_risk = demographic_profit_sum_at_risk(state, outcome, bases)
    assert check_closure(via_sum_at_risk, parts.y1_demographic, "sum at risk", scale=scale) < 1e-8
