"""One-year technical profit: totals, five-way decomposition, demographic split and expectations.

Rates are per unit sum insured; every profit is an amount obtained by
multiplying rates with in-force sums. Path outcomes may hold numpy arrays,
in which case every function evaluates all paths at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from demrisk.contract import (
    Cohort,
    PolicySpec,
    local_reserve_rate,
    sum_at_risk,
    surrender_coefficient,
)
from demrisk.curve import YieldCurve
from demrisk.lifetable import LifeTable, npx, qx
from demrisk.valuation import (
    ValuationBasis,
    best_estimate_rate,
    epv_rate,
    opening_rate,
)

Amount = Union[float, np.ndarray]


class ProfitError(ValueError):
    """Raised for inconsistent states, outcomes or bases."""


class ClosureError(RuntimeError):
    """Raised when a decomposition does not add up to its total."""


@dataclass(frozen=True)
class PortfolioState:
    """In-force position of one policy block at the start of year ``t``."""

    t: int
    w: float
    l: int
    policy: PolicySpec
    cohort: Cohort
    sums: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.w < 0.0 or self.l < 0:
            raise ProfitError(f"in-force quantities must be >= 0, got w={self.w!r}, l={self.l}")
        if (self.w == 0.0) != (self.l == 0):
            raise ProfitError(f"w and l must vanish together, got w={self.w!r}, l={self.l}")
        if not 0 <= self.t < self.policy.duration:
            raise ProfitError(f"state time {self.t} outside [0, {self.policy.duration})")
        if self.sums is not None and len(self.sums) != self.l:
            raise ProfitError(f"{len(self.sums)} explicit sums for {self.l} lives")


@dataclass(frozen=True)
class PathOutcome:
    """Realised year-end quantities; fields are scalars or equally shaped arrays."""

    z: Amount
    x: Amount
    s: Amount
    w_next: Amount
    be_next: Amount
    asset_return: Amount
    curve_next: Optional[YieldCurve] = None

    @classmethod
    def from_deaths(
        cls,
        state: PortfolioState,
        z: Amount,
        be_next: Amount,
        *,
        s: Amount = 0.0,
        asset_return: Amount = 0.0,
        curve_next: Optional[YieldCurve] = None,
    ) -> "PathOutcome":
        """Build an outcome with ``x = d z`` and ``w_{t+1} = w_t - s - z``."""
        z = np.asarray(z, dtype=float) if np.ndim(z) else float(z)
        return cls(
            z=z,
            x=state.policy.death_benefit * z,
            s=s,
            w_next=state.w - s - z,
            be_next=be_next,
            asset_return=asset_return,
            curve_next=curve_next,
        )


@dataclass(frozen=True)
class ExpenseAssumptions:
    """First-order minus realised expense rates."""

    delta_alpha: float = 0.0
    delta_beta: float = 0.0
    delta_gamma: float = 0.0

    def __post_init__(self) -> None:
        for name in ("delta_alpha", "delta_beta", "delta_gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ProfitError(f"{name} must be finite")


@dataclass(frozen=True)
class ProfitDecomposition:
    y1_demographic: Amount
    y2_financial: Amount
    y3_lapse: Amount
    y4_expense: Amount
    y5_residual: Amount
    total: Amount

    @property
    def components_sum(self) -> Amount:
        return self.y1_demographic + self.y2_financial + self.y3_lapse + self.y4_expense + self.y5_residual

    @property
    def magnitude(self) -> Amount:
        """Sum of absolute component values."""
        return (
            np.abs(self.y1_demographic)
            + np.abs(self.y2_financial)
            + np.abs(self.y3_lapse)
            + np.abs(self.y4_expense)
            + np.abs(self.y5_residual)
        )


@dataclass(frozen=True)
class DemographicSplit:
    lg: Amount
    rf_gap: Amount
    q_gap: Amount

    @property
    def total(self) -> Amount:
        return self.lg + self.rf_gap + self.q_gap

    @property
    def magnitude(self) -> Amount:
        return np.abs(self.lg) + np.abs(self.rf_gap) + np.abs(self.q_gap)


@dataclass(frozen=True)
class YearBases:
    """Every rate the year ``t -> t+1`` needs, evaluated once per (policy, t, curve)."""

    t: int
    be_t: float
    be_open: float
    epv_t: float
    epv_open: float
    epv_next: float
    v_t: float
    v_next: float
    be_next_forward: float
    q: float
    q_star: float
    technical_rate: float
    one_year_rate: float
    death_benefit: float
    sum_at_risk: float
    net_premium: float
    gross_premium: float
    expense_charge: float
    surrender: float
    premium_due: bool


def year_bases(spec: PolicySpec, t: int, curve_t: YieldCurve, table2: LifeTable) -> YearBases:
    """Evaluate the rates for the year starting at *t* on *curve_t*."""
    if not 0 <= t < spec.duration:
        raise ProfitError(f"year bases defined for 0 <= t < {spec.duration}, got {t}")
    basis = ValuationBasis(mortality=table2, curve=curve_t)
    be_t = best_estimate_rate(spec, t, basis)
    epv_t = epv_rate(spec, t, table2)
    age = spec.issue_age + t
    return YearBases(
        t=t,
        be_t=be_t,
        be_open=opening_rate(t, be_t),
        epv_t=epv_t,
        epv_open=opening_rate(t, epv_t),
        epv_next=epv_rate(spec, t + 1, table2),
        v_t=local_reserve_rate(spec, t),
        v_next=local_reserve_rate(spec, t + 1),
        be_next_forward=best_estimate_rate(spec, t + 1, basis.roll()),
        q=qx(table2, age),
        q_star=qx(spec.first_order_table, age),
        technical_rate=spec.technical_rate,
        one_year_rate=basis.one_year_rate(),
        death_benefit=spec.death_benefit,
        sum_at_risk=sum_at_risk(spec, t + 1),
        net_premium=spec.net_premium(t),
        gross_premium=spec.gross_premium(t),
        expense_charge=spec.expense_charge(t),
        surrender=surrender_coefficient(spec, t),
        premium_due=spec.premium_due(t),
    )


def _check(state: PortfolioState, outcome: PathOutcome, bases: YearBases) -> None:
    if state.t != bases.t:
        raise ProfitError(f"state at t={state.t} evaluated with bases for t={bases.t}")
    gap = np.abs(np.asarray(outcome.w_next) + outcome.s + outcome.z - state.w)
    if np.any(gap > 1e-9 * max(state.w, 1.0)):
        raise ProfitError(f"w_next + s + z differs from w_t={state.w!r} by up to {float(np.max(gap))!r}")


def demographic_profit(state: PortfolioState, outcome: PathOutcome, bases: YearBases) -> Amount:
    """Demographic MCV profit from opening best estimate, premium and year-end outgo."""
    _check(state, outcome, bases)
    ws = state.w - outcome.s
    carried = (bases.be_open + bases.net_premium) * ws * (1.0 + bases.technical_rate)
    return carried - (outcome.x + outcome.w_next * outcome.be_next)


def demographic_profit_sum_at_risk(state: PortfolioState, outcome: PathOutcome, bases: YearBases) -> Amount:
    """Same profit written through the sum at risk and the be-minus-reserve gaps."""
    _check(state, outcome, bases)
    ws = state.w - outcome.s
    return (
        bases.sum_at_risk * (bases.q_star * ws - outcome.z)
        + (bases.be_open - bases.v_t) * ws * (1.0 + bases.technical_rate)
        - outcome.w_next * (outcome.be_next - bases.v_next)
    )


def local_demographic_profit(state: PortfolioState, outcome: PathOutcome, bases: YearBases) -> Amount:
    """Local-GAAP mortality profit ``D (q* (w - s) - z)``."""
    _check(state, outcome, bases)
    return bases.sum_at_risk * (bases.q_star * (state.w - outcome.s) - outcome.z)


def demographic_split(state: PortfolioState, outcome: PathOutcome, bases: YearBases) -> DemographicSplit:
    """Split the demographic profit into local-GAAP, rate-gap and mortality-gap parts."""
    ws = state.w - outcome.s
    growth = 1.0 + bases.technical_rate
    be_gap_next = outcome.be_next - bases.epv_next
    q_gap_next = bases.epv_next - bases.v_next
    rf_gap = ws * ((bases.be_open - bases.epv_open) * growth - be_gap_next) + be_gap_next * outcome.z
    q_gap = ws * ((bases.epv_open - bases.v_t) * growth - q_gap_next) + q_gap_next * outcome.z
    return DemographicSplit(lg=local_demographic_profit(state, outcome, bases), rf_gap=rf_gap, q_gap=q_gap)


def _carried_balance(state: PortfolioState, outcome: PathOutcome, bases: YearBases) -> Tuple[Amount, Amount]:
    ws = state.w - outcome.s
    be = bases.be_open
    return ws, be * state.w + bases.net_premium * ws - bases.expense_charge * outcome.s - bases.surrender * be * outcome.s


def _expense_margin(state: PortfolioState, outcome: PathOutcome, bases: YearBases, expenses: ExpenseAssumptions) -> Amount:
    ws = state.w - outcome.s
    delta_gamma = expenses.delta_gamma if bases.premium_due else 0.0
    return (expenses.delta_alpha + expenses.delta_beta) * bases.gross_premium * ws + delta_gamma * state.w


def technical_profit_mcv(
    state: PortfolioState,
    outcome: PathOutcome,
    bases: YearBases,
    expenses: Optional[ExpenseAssumptions] = None,
) -> Amount:
    """Total profit: (opening be + premiums - expenses - surrenders) grown at the asset return, minus outgo."""
    _check(state, outcome, bases)
    expenses = expenses or ExpenseAssumptions()
    _, carried = _carried_balance(state, outcome, bases)
    margin = _expense_margin(state, outcome, bases, expenses)
    return (carried + margin) * (1.0 + outcome.asset_return) - (outcome.x + outcome.w_next * outcome.be_next)


def homans_components(
    state: PortfolioState,
    outcome: PathOutcome,
    bases: YearBases,
    expenses: Optional[ExpenseAssumptions] = None,
) -> ProfitDecomposition:
    """Demographic, financial, lapse, expense and residual profits plus their total."""
    expenses = expenses or ExpenseAssumptions()
    growth = 1.0 + bases.technical_rate
    spread = outcome.asset_return - bases.technical_rate
    _, carried = _carried_balance(state, outcome, bases)
    margin = _expense_margin(state, outcome, bases, expenses)
    lapse = (bases.be_open - bases.expense_charge - bases.surrender * bases.be_open) * growth * outcome.s
    return ProfitDecomposition(
        y1_demographic=demographic_profit(state, outcome, bases),
        y2_financial=spread * carried,
        y3_lapse=lapse,
        y4_expense=growth * margin,
        y5_residual=spread * margin,
        total=technical_profit_mcv(state, outcome, bases, expenses),
    )


def closure_gap(parts: Amount, total: Amount, scale: Optional[Amount] = None) -> np.ndarray:
    """Per-path ``|parts - total|`` relative to ``max(|total|, scale)``.

    *scale* is the size of the amounts that were added up (e.g.
    :attr:`ProfitDecomposition.magnitude`); when offsetting components leave
    a total near zero, roundoff is then measured against the components.
    """
    parts = np.asarray(parts, dtype=float)
    total = np.asarray(total, dtype=float)
    size = np.abs(total) if scale is None else np.maximum(np.abs(total), np.asarray(scale, dtype=float))
    gap = np.abs(parts - total)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(size > 0.0, gap / size, np.where(gap > 0.0, np.inf, 0.0))


def check_closure(
    parts: Amount, total: Amount, what: str, rtol: float = 1e-8, scale: Optional[Amount] = None
) -> float:
    """Largest :func:`closure_gap`; raises :class:`ClosureError` above *rtol*."""
    gaps = closure_gap(parts, total, scale)
    gap = float(np.max(gaps)) if gaps.size else 0.0
    if gap > rtol:
        raise ClosureError(f"{what} closure gap {gap:.3e} exceeds {rtol:.1e}")
    return gap


def expected_demographic_profit(state: PortfolioState, bases: YearBases, s: float = 0.0) -> float:
    """Expected MCV demographic profit with year-end best estimate on the forward-implied curve."""
    ws = state.w - s
    growth = 1.0 + bases.technical_rate
    return ws * (
        (bases.be_open + bases.net_premium) * growth
        - bases.death_benefit * bases.q
        - (1.0 - bases.q) * bases.be_next_forward
    )


def expected_local_profit(state: PortfolioState, bases: YearBases, s: float = 0.0) -> float:
    """``D (q* - q)(w - s)``."""
    return bases.sum_at_risk * (bases.q_star - bases.q) * (state.w - s)


def expected_demographic_split(state: PortfolioState, bases: YearBases, s: float = 0.0) -> DemographicSplit:
    """Expectations of the three demographic parts; they add up to :func:`expected_demographic_profit`."""
    ws = state.w - s
    growth = 1.0 + bases.technical_rate
    be_gap_next = bases.be_next_forward - bases.epv_next
    q_gap_next = bases.epv_next - bases.v_next
    rf_gap = ws * ((bases.be_open - bases.epv_open) * growth - be_gap_next) + be_gap_next * bases.q * ws
    q_gap = ws * ((bases.epv_open - bases.v_t) * growth - q_gap_next) + q_gap_next * bases.q * ws
    return DemographicSplit(lg=expected_local_profit(state, bases, s), rf_gap=rf_gap, q_gap=q_gap)


@dataclass(frozen=True)
class LocalMoments:
    mean: float
    std: float
    skewness: float


def claim_cumulants(
    lives: int, q: float, *, mean_claim: float = 0.0, cv: float = 0.0, sums: Optional[Sequence[float]] = None
) -> Tuple[float, float, float]:
    """First three cumulants of the year's death claims.

    With explicit *sums* each life dies independently; otherwise the count is
    Binomial(lives, q) and each claim is LogNormal with *mean_claim* and *cv*.
    """
    if sums is not None:
        c = np.asarray(sums, dtype=float)
        return (
            float(q * c.sum()),
            float(q * (1.0 - q) * np.sum(c**2)),
            float(q * (1.0 - q) * (1.0 - 2.0 * q) * np.sum(c**3)),
        )
    if lives == 0:
        return 0.0, 0.0, 0.0
    ratio = 1.0 + cv * cv
    m1 = mean_claim
    m2 = mean_claim**2 * ratio
    m3 = mean_claim**3 * ratio**3
    return (
        lives * q * m1,
        lives * (q * m2 - q * q * m1 * m1),
        lives * (q * m3 - 3.0 * q * q * m1 * m2 + 2.0 * q**3 * m1**3),
    )


def local_profit_moments(
    state: PortfolioState,
    bases: YearBases,
    *,
    lives: int,
    s: float = 0.0,
    sums: Optional[Sequence[float]] = None,
) -> LocalMoments:
    """Analytic mean, standard deviation and skewness of the local-GAAP profit."""
    ws = state.w - s
    mean_claim = ws / lives if lives else 0.0
    k1, k2, k3 = claim_cumulants(lives, bases.q, mean_claim=mean_claim, cv=state.cohort.sum_cv, sums=sums)
    d = bases.sum_at_risk
    std = abs(d) * math.sqrt(max(k2, 0.0))
    skew = 0.0
    if k2 > 0.0 and d != 0.0:
        skew = -math.copysign(1.0, d) * k3 / k2**1.5
    return LocalMoments(mean=d * (bases.q_star * ws - k1), std=std, skewness=skew)


def safety_loading(t: int, table1: LifeTable, table2: LifeTable, x: int) -> float:
    """Implicit safety loading ``(q* - q) / q`` at age ``x + t``."""
    q = qx(table2, x + t)
    if q == 0.0:
        raise ProfitError(f"safety loading undefined: q = 0 at age {x + t}")
    return (qx(table1, x + t) - q) / q


def project_state(
    policy: PolicySpec, cohort: Cohort, t: int, table2: LifeTable, lapse_rate: float = 0.0
) -> PortfolioState:
    """Expected in-force position at *t*: realistic survival and deterministic lapses."""
    if not 0.0 <= lapse_rate < 1.0:
        raise ProfitError(f"lapse rate must lie in [0, 1), got {lapse_rate!r}")
    if t == 0:
        sums = None if cohort.sums is None else np.asarray(cohort.sums)
        return PortfolioState(t=0, w=cohort.w0, l=cohort.l0, policy=policy, cohort=cohort, sums=sums)
    factor = npx(table2, policy.issue_age, t) * (1.0 - lapse_rate) ** t
    lives = int(round(cohort.l0 * factor))
    w = cohort.w0 * factor if lives else 0.0
    return PortfolioState(t=t, w=w, l=lives, policy=policy, cohort=cohort)


@dataclass(frozen=True)
class LapseSplit:
    exposed: int
    s: float
    exposed_sums: Optional[np.ndarray] = None


def lapse_split(state: PortfolioState, lapse_rate: float) -> LapseSplit:
    """Lives lapsing at the start of the year and the sums they take with them.

    Explicit sums lapse from the end of the list.
    """
    lapsed = int(round(lapse_rate * state.l))
    exposed = state.l - lapsed
    if state.sums is not None:
        sums = np.asarray(state.sums, dtype=float)
        return LapseSplit(exposed=exposed, s=float(sums[exposed:].sum()), exposed_sums=sums[:exposed])
    s = state.w * lapsed / state.l if state.l else 0.0
    if exposed == 0:
        s = state.w
    return LapseSplit(exposed=exposed, s=s)
