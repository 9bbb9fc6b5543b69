"""Market-consistent rates: best estimate, EPV at the technical rate, recursion residuals.

``be_t`` discounts on the risk-free curve in force at ``t`` with realistic
(second-order) mortality; ``epv_t`` keeps the realistic mortality but
discounts at the technical rate ``j*``. Both exclude the instalment due at
``t``, like the local reserve in :mod:`demrisk.contract`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from demrisk.contract import (
    PolicySpec,
    benefit_profile,
    local_reserve_rate,
    premium_profile,
    technical_discount,
)
from demrisk.curve import YieldCurve, forward_implied_curve
from demrisk.lifetable import LifeTable, qx


class ValuationError(ValueError):
    """Raised when a basis cannot value a policy at the requested time."""


@dataclass(frozen=True)
class ValuationBasis:
    """Second-order mortality plus either a spot curve or a flat annual rate."""

    mortality: LifeTable
    curve: Optional[YieldCurve] = None
    flat_rate: Optional[float] = None

    def __post_init__(self) -> None:
        if (self.curve is None) == (self.flat_rate is None):
            raise ValuationError("valuation basis needs exactly one of 'curve' or 'flat_rate'")

    def discount_factors(self, horizon: int) -> np.ndarray:
        if self.curve is None:
            return technical_discount(float(self.flat_rate), horizon)
        if horizon > self.curve.max_maturity:
            raise ValuationError(
                f"curve at time {self.curve.valuation_time} covers {self.curve.max_maturity} "
                f"years, valuation needs {horizon}"
            )
        return self.curve.discount_factors(horizon)

    def one_year_rate(self) -> float:
        if self.curve is None:
            return float(self.flat_rate)
        if self.curve.max_maturity < 1:
            raise ValuationError("one-year spot rate needs a curve with maturity 1")
        return float(self.curve.spot[0])

    def roll(self) -> "ValuationBasis":
        """Basis one year ahead along the forward-implied curve."""
        if self.curve is None:
            return self
        return ValuationBasis(mortality=self.mortality, curve=forward_implied_curve(self.curve))


def cashflow_profile(spec: PolicySpec, t: int, table: LifeTable) -> np.ndarray:
    """Expected net outgo per unit in force at *t*: benefits minus pure premiums, ``h = 0 .. n - t``."""
    return benefit_profile(spec, t, table) - spec.pure_premium * premium_profile(spec, t, table)


def best_estimate_rate(spec: PolicySpec, t: int, basis: ValuationBasis) -> float:
    """Best estimate rate ``be_t`` valued just before the instalment due at *t*.

    At ``t = n`` this is the maturity benefit rate.
    """
    cashflows = cashflow_profile(spec, t, basis.mortality)
    return float(cashflows @ basis.discount_factors(cashflows.size - 1))


def epv_rate(spec: PolicySpec, t: int, table2: LifeTable) -> float:
    """``epv_t``: realistic mortality, flat discounting at the technical rate."""
    return best_estimate_rate(spec, t, ValuationBasis(mortality=table2, flat_rate=spec.technical_rate))


def opening_rate(t: int, rate: float) -> float:
    """Opening balance of the year starting at *t*; nothing is booked before inception."""
    return 0.0 if t == 0 else rate


def _check_recursion_time(spec: PolicySpec, t: int) -> None:
    if t < 0 or t >= spec.duration:
        raise ValuationError(f"recursion defined for 0 <= t < {spec.duration}, got {t}")


def _recursion_residual(
    spec: PolicySpec, t: int, table: LifeTable, rate_t: float, rate_next: float, one_year: float
) -> float:
    q = qx(table, spec.issue_age + t)
    return (rate_t + spec.net_premium(t)) * (1.0 + one_year) - spec.death_benefit * q - (1.0 - q) * rate_next


def best_estimate_recursion_residual(spec: PolicySpec, t: int, basis: ValuationBasis) -> float:
    """``(be_t + pi_t)(1 + i_t(0,1)) - d q - p be_{t+1}``, ``be_{t+1}`` on the forward-implied curve."""
    _check_recursion_time(spec, t)
    be_t = best_estimate_rate(spec, t, basis)
    be_next = best_estimate_rate(spec, t + 1, basis.roll())
    return _recursion_residual(spec, t, basis.mortality, be_t, be_next, basis.one_year_rate())


def epv_recursion_residual(spec: PolicySpec, t: int, table2: LifeTable) -> float:
    """``(pi_t + epv_t)(1 + j*) - d q - p epv_{t+1}``."""
    _check_recursion_time(spec, t)
    return _recursion_residual(
        spec, t, table2, epv_rate(spec, t, table2), epv_rate(spec, t + 1, table2), spec.technical_rate
    )


def local_reserve_residual(spec: PolicySpec, t: int) -> float:
    """First-order analogue: ``(v_t + pi_t)(1 + j*) - d q* - p* v_{t+1}``."""
    _check_recursion_time(spec, t)
    return _recursion_residual(
        spec,
        t,
        spec.first_order_table,
        local_reserve_rate(spec, t),
        local_reserve_rate(spec, t + 1),
        spec.technical_rate,
    )
