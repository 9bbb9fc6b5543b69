"""Policy definitions and first-order (pricing) quantities.

Benefits are paid at the end of the year of death or at maturity; premiums
are due at the start of each year while the policy is in force. Every rate
at time ``t`` is valued just before the instalment due at ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from demrisk.lifetable import LifeTable, survival_curve


class PolicyError(ValueError):
    """Raised for invalid policy definitions or out-of-range policy times."""


class PolicyKind(str, Enum):
    PURE_ENDOWMENT = "pure_endowment"
    ENDOWMENT = "endowment"
    TERM_INSURANCE = "term_insurance"


class PremiumType(str, Enum):
    SINGLE = "single"
    ANNUAL = "annual"


@dataclass(frozen=True)
class PolicySpec:
    """Non-participating contract on a unit sum insured.

    Parameters
    ----------
    kind:
        Pure endowment, endowment or term insurance.
    issue_age, duration:
        Age at issue ``x`` and term ``n`` in years.
    premium_type:
        Single premium at issue or annual premiums for ``n`` years.
    technical_rate:
        First-order interest rate ``j*``.
    alpha, beta:
        Premium-proportional expense loadings.
    gamma:
        Expense loading proportional to the sum insured, levied with each
        instalment.
    surrender_tau, surrender_rate:
        Surrender penalty start ``tau`` and discount rate ``j_s`` (``j_s < j*``).
    first_order_table:
        Pricing mortality ``q*``.
    """

    kind: PolicyKind
    issue_age: int
    duration: int
    premium_type: PremiumType
    technical_rate: float
    first_order_table: LifeTable = field(repr=False)
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    surrender_tau: int = 5
    surrender_rate: float = 0.005
    name: str = "policy"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        object.__setattr__(self, "premium_type", PremiumType(self.premium_type))
        if self.duration < 1:
            raise PolicyError(f"duration must be >= 1, got {self.duration}")
        if not self.surrender_rate < self.technical_rate:
            raise PolicyError(
                f"surrender rate j_s={self.surrender_rate!r} must be below technical rate "
                f"j*={self.technical_rate!r}"
            )
        loading = self.alpha + self.beta
        if not (0.0 <= loading < 1.0):
            raise PolicyError(f"alpha + beta must lie in [0, 1), got {loading!r}")
        if self.gamma < 0.0:
            raise PolicyError(f"gamma must be >= 0, got {self.gamma!r}")
        if self.surrender_tau <= 0:
            raise PolicyError(f"surrender tau must be > 0, got {self.surrender_tau}")
        last_age = self.issue_age + self.duration - 1
        if self.issue_age < self.first_order_table.min_age or last_age > self.first_order_table.max_age:
            raise PolicyError(
                f"first-order table '{self.first_order_table.name}' does not cover ages "
                f"{self.issue_age}-{last_age}"
            )

    @property
    def death_benefit(self) -> float:
        return 0.0 if self.kind is PolicyKind.PURE_ENDOWMENT else 1.0

    @property
    def survival_benefit(self) -> float:
        return 0.0 if self.kind is PolicyKind.TERM_INSURANCE else 1.0

    def premium_due(self, t: int) -> bool:
        if self.premium_type is PremiumType.SINGLE:
            return t == 0
        return 0 <= t < self.duration

    @cached_property
    def pure_premium(self) -> float:
        return pure_premium_rate(self)

    def net_premium(self, t: int) -> float:
        """Pure premium ``pi_t`` collected at *t* (zero outside premium dates)."""
        return self.pure_premium if self.premium_due(t) else 0.0

    def gross_premium(self, t: int) -> float:
        return gross_premium_rate(self) if self.premium_due(t) else 0.0

    def expense_charge(self, t: int) -> float:
        """``gamma*`` when an instalment is due at *t*, else 0."""
        return self.gamma if self.premium_due(t) else 0.0


@dataclass(frozen=True)
class Cohort:
    """Insured population of one policy block at issue."""

    l0: int
    sum_mean: float
    sum_cv: float = 0.0
    sums: Optional[Sequence[float]] = None

    def __post_init__(self) -> None:
        if self.l0 < 1:
            raise PolicyError(f"cohort needs l0 >= 1, got {self.l0}")
        if self.sums is not None:
            sums = np.array(self.sums, dtype=float)
            if sums.size != self.l0:
                raise PolicyError(f"explicit sums count {sums.size} differs from l0 {self.l0}")
            if np.any(sums <= 0.0):
                raise PolicyError("explicit sums insured must be positive")
            sums.setflags(write=False)
            object.__setattr__(self, "sums", sums)
            object.__setattr__(self, "sum_mean", float(sums.mean()))
        if not self.sum_mean > 0.0:
            raise PolicyError(f"sum_mean must be > 0, got {self.sum_mean!r}")
        if self.sum_cv < 0.0:
            raise PolicyError(f"sum_cv must be >= 0, got {self.sum_cv!r}")

    @property
    def w0(self) -> float:
        if self.sums is not None:
            return float(np.sum(self.sums))
        return self.l0 * self.sum_mean


def _check_time(spec: PolicySpec, t: int) -> None:
    if t < 0 or t > spec.duration:
        raise PolicyError(f"time {t} outside policy term [0, {spec.duration}]")


def benefit_profile(spec: PolicySpec, t: int, table: LifeTable) -> np.ndarray:
    """Expected benefit outgo per unit in force at *t*, at times ``t + h``, ``h = 0 .. n - t``."""
    _check_time(spec, t)
    remaining = spec.duration - t
    out = np.zeros(remaining + 1)
    if remaining == 0:
        out[0] = spec.survival_benefit
        return out
    q = table.slice_q(spec.issue_age + t, remaining)
    survival = survival_curve(table, spec.issue_age + t, remaining)
    out[1:] = spec.death_benefit * survival[:-1] * q
    out[-1] += spec.survival_benefit * survival[-1]
    return out


def premium_profile(spec: PolicySpec, t: int, table: LifeTable) -> np.ndarray:
    """Expected number of instalments (per unit in force at *t*) due at ``t + h``."""
    _check_time(spec, t)
    remaining = spec.duration - t
    out = np.zeros(remaining + 1)
    if remaining == 0:
        return out
    survival = survival_curve(table, spec.issue_age + t, remaining)
    due = np.array([spec.premium_due(t + h) for h in range(remaining)], dtype=float)
    out[:-1] = survival[:-1] * due
    return out


def technical_discount(rate: float, horizon: int) -> np.ndarray:
    return (1.0 + rate) ** (-np.arange(horizon + 1, dtype=float))


def pure_premium_rate(spec: PolicySpec) -> float:
    """Equivalence-principle premium on the first-order basis ``(q*, j*)``."""
    v = technical_discount(spec.technical_rate, spec.duration)
    benefits = benefit_profile(spec, 0, spec.first_order_table) @ v
    annuity = premium_profile(spec, 0, spec.first_order_table) @ v
    if annuity <= 0.0:
        raise PolicyError(f"degenerate premium annuity for policy '{spec.name}'")
    return float(benefits / annuity)


def gross_premium_rate(spec: PolicySpec) -> float:
    """Office premium ``b = (pi + gamma*) / (1 - alpha* - beta*)``."""
    denom = 1.0 - spec.alpha - spec.beta
    if denom <= 0.0:
        raise PolicyError(f"loadings alpha + beta must be < 1, got {spec.alpha + spec.beta!r}")
    return (spec.pure_premium + spec.gamma) / denom


def local_reserve_rate(spec: PolicySpec, t: int) -> float:
    """Complete prospective reserve ``v^b_t`` on locked first-order bases."""
    _check_time(spec, t)
    remaining = spec.duration - t
    v = technical_discount(spec.technical_rate, remaining)
    table = spec.first_order_table
    return float(
        benefit_profile(spec, t, table) @ v - spec.pure_premium * (premium_profile(spec, t, table) @ v)
    )


def sum_at_risk(spec: PolicySpec, t_plus_1: int) -> float:
    """Complete sum-at-risk rate ``D^b_{t+1}``: death benefit minus year-end reserve."""
    if t_plus_1 < 1 or t_plus_1 > spec.duration:
        raise PolicyError(f"sum at risk defined for 1 <= t+1 <= {spec.duration}, got {t_plus_1}")
    return spec.death_benefit - local_reserve_rate(spec, t_plus_1)


def surrender_coefficient(spec: PolicySpec, t: int) -> float:
    """Surrender penalty ``g*_t``: 0 before ``tau``, then ``(1 + j_s)^-(n - t)``."""
    if t < spec.surrender_tau:
        return 0.0
    return float((1.0 + spec.surrender_rate) ** (-(spec.duration - t)))
