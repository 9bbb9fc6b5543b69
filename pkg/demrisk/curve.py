"""Risk-free term structure: discounting, forwards and Vasicek year-end curves.

All curve rates are annually compounded spot rates ``i(0, h)`` for integer
maturities ``h = 1 .. max_maturity``. The Vasicek model works with
continuously compounded short rates and converts at the curve boundary.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

if TYPE_CHECKING:
    from demrisk.contract import PolicySpec
    from demrisk.lifetable import LifeTable

logger = logging.getLogger(__name__)


class CurveError(ValueError):
    """Raised for invalid curves, maturities or model parameters."""


class CalibrationError(RuntimeError):
    """Raised when the Vasicek location cannot be bracketed."""


@dataclass(frozen=True)
class YieldCurve:
    """Annually compounded spot curve observed at ``valuation_time``.

    ``spot[h - 1]`` is the rate for maturity ``h``. An empty curve is valid
    and only supports ``discount(curve, 0)``.
    """

    valuation_time: int
    spot: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        rates = np.array(self.spot, dtype=float).reshape(-1)
        if not np.all(np.isfinite(rates)):
            raise CurveError("spot rates must be finite")
        if np.any(rates <= -1.0):
            raise CurveError(f"spot rates must be > -1, got min {rates.min()!r}")
        factors = (1.0 + rates) ** (-np.arange(1, rates.size + 1))
        if not np.all(np.isfinite(factors)) or np.any(factors <= 0.0):
            raise CurveError("discount factors must be positive and finite")
        rates.setflags(write=False)
        object.__setattr__(self, "spot", rates)

    @property
    def max_maturity(self) -> int:
        return int(self.spot.size)

    @classmethod
    def flat(cls, rate: float, max_maturity: int, valuation_time: int = 0) -> "YieldCurve":
        return cls(valuation_time=valuation_time, spot=np.full(max_maturity, float(rate)))

    def discount_factors(self, horizon: int) -> np.ndarray:
        """Return ``[v(0), v(1), ..., v(horizon)]``."""
        if horizon < 0 or horizon > self.max_maturity:
            raise CurveError(
                f"maturity {horizon} beyond curve (max {self.max_maturity}) at time {self.valuation_time}"
            )
        out = np.ones(horizon + 1)
        if horizon:
            h = np.arange(1, horizon + 1)
            out[1:] = (1.0 + self.spot[:horizon]) ** (-h)
        return out


def load_curve(path: Path | str, valuation_time: int = 0) -> YieldCurve:
    """Load a CSV curve with rows ``maturity,spot_rate`` (header optional)."""
    path = Path(path)
    if not path.exists():
        raise CurveError(f"curve file not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, comment="#")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise CurveError(f"malformed curve file {path}: {exc}") from exc
    if frame.shape[1] != 2:
        raise CurveError(f"malformed curve file {path}: expected 2 columns (maturity,spot_rate)")

    rows = frame.to_numpy()
    try:
        float(str(rows[0][0]))
        start = 0
    except ValueError:
        start = 1

    rates = []
    for idx in range(start, len(rows)):
        raw_m, raw_r = (str(v).strip() for v in rows[idx])
        try:
            maturity = int(raw_m)
            rate = float(raw_r)
        except ValueError as exc:
            raise CurveError(f"malformed row {idx + 1} in {path}: {raw_m!r},{raw_r!r}") from exc
        if maturity != len(rates) + 1:
            raise CurveError(
                f"maturities must run 1, 2, ... without gaps; row {idx + 1} has {maturity}"
            )
        rates.append(rate)
    if not rates:
        raise CurveError(f"curve file {path} has no data rows")
    return YieldCurve(valuation_time=valuation_time, spot=np.asarray(rates))


def discount(curve: YieldCurve, h: int) -> float:
    """Discount factor ``(1 + i(0, h))^-h``; ``discount(curve, 0) == 1``."""
    if h == 0:
        return 1.0
    if h < 0 or h > curve.max_maturity:
        raise CurveError(f"maturity {h} beyond curve (max {curve.max_maturity})")
    return float((1.0 + curve.spot[h - 1]) ** (-h))


def forward(curve: YieldCurve, h: int) -> float:
    """One-year forward rate between maturities *h* and *h + 1*."""
    if h < 0 or h + 1 > curve.max_maturity:
        raise CurveError(f"forward {h}->{h + 1} needs maturity {h + 1}, curve max {curve.max_maturity}")
    acc_next = (1.0 + curve.spot[h]) ** (h + 1)
    acc = 1.0 if h == 0 else (1.0 + curve.spot[h - 1]) ** h
    return float(acc_next / acc - 1.0)


def forward_implied_curve(curve: YieldCurve) -> YieldCurve:
    """Curve expected one year ahead: spot(m) = (A(1+m) / A(1))^(1/m) - 1.

    The maximum maturity drops by one and ``valuation_time`` moves forward
    by one year.
    """
    if curve.max_maturity < 1:
        raise CurveError("forward-implied curve needs at least one maturity")
    acc = (1.0 + curve.spot) ** np.arange(1, curve.max_maturity + 1)
    m = np.arange(1, curve.max_maturity)
    spot = (acc[1:] / acc[0]) ** (1.0 / m) - 1.0
    return YieldCurve(valuation_time=curve.valuation_time + 1, spot=spot)


def roll_forward(curve: YieldCurve, years: int) -> YieldCurve:
    """Apply :func:`forward_implied_curve` *years* times."""
    for _ in range(years):
        curve = forward_implied_curve(curve)
    return curve


@dataclass(frozen=True)
class VasicekParams:
    """Vasicek short-rate parameters (continuously compounded).

    Parameters
    ----------
    a:
        Mean-reversion speed per year, ``a > 0``.
    b:
        Long-run mean of the short rate.
    sigma:
        Volatility per square-root year, ``sigma >= 0``.
    r0:
        Short rate at the start of the year.
    """

    a: float
    b: float
    sigma: float
    r0: float

    def __post_init__(self) -> None:
        if not self.a > 0.0:
            raise CurveError(f"Vasicek mean reversion 'a' must be > 0, got {self.a!r}")
        if not self.sigma >= 0.0:
            raise CurveError(f"Vasicek volatility 'sigma' must be >= 0, got {self.sigma!r}")

    @property
    def one_year_mean(self) -> float:
        decay = math.exp(-self.a)
        return self.r0 * decay + self.b * (1.0 - decay)

    @property
    def one_year_std(self) -> float:
        return self.sigma * math.sqrt(-math.expm1(-2.0 * self.a) / (2.0 * self.a))


def vasicek_short_rate(params: VasicekParams, normal_draw):
    """Exact one-year transition of the short rate for standard normal draw(s)."""
    return params.one_year_mean + params.one_year_std * np.asarray(normal_draw, dtype=float)


def vasicek_log_prices(params: VasicekParams, max_maturity: int) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(log A(tau), B(tau))`` for ``tau = 0 .. max_maturity``."""
    tau = np.arange(max_maturity + 1, dtype=float)
    a, b, sigma = params.a, params.b, params.sigma
    big_b = -np.expm1(-a * tau) / a
    log_a = (big_b - tau) * (a * a * b - 0.5 * sigma * sigma) / (a * a) - sigma * sigma * big_b**2 / (4.0 * a)
    return log_a, big_b


def vasicek_zero_prices(params: VasicekParams, short_rate, max_maturity: int) -> np.ndarray:
    """Zero-coupon prices ``P(tau)`` for each short rate, shape ``(..., max_maturity + 1)``."""
    log_a, big_b = vasicek_log_prices(params, max_maturity)
    r = np.asarray(short_rate, dtype=float)[..., np.newaxis]
    return np.exp(log_a - big_b * r)


def vasicek_year_curve(
    params: VasicekParams,
    normal_draw: float,
    max_maturity: int,
    valuation_time: int = 0,
) -> YieldCurve:
    """Year-end curve rebuilt from the simulated short rate."""
    r1 = float(vasicek_short_rate(params, normal_draw))
    prices = vasicek_zero_prices(params, r1, max_maturity)[1:]
    tau = np.arange(1, max_maturity + 1, dtype=float)
    spot = np.expm1(-np.log(prices) / tau) if max_maturity else np.empty(0)
    return YieldCurve(valuation_time=valuation_time + 1, spot=spot)


def hermite_expectation_weights(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes and weights for expectations over ``N(0, 1)``."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    return x, w / math.sqrt(2.0 * math.pi)


def _nearest_bracket(fn, start: float, lo: float, hi: float, step: float) -> Optional[Tuple[float, float]]:
    """Closest grid cell around *start* where *fn* changes sign, searching both ways."""
    f_start = fn(start)
    if f_start == 0.0:
        return start, start
    grids = (
        list(np.arange(start, hi, step)[1:]) + [hi],
        list(np.arange(start, lo, -step)[1:]) + [lo],
    )
    last = [(start, f_start), (start, f_start)]
    for k in range(max(len(g) for g in grids)):
        for side, grid in enumerate(grids):
            if k >= len(grid):
                continue
            x = float(grid[k])
            fx = fn(x)
            px, pf = last[side]
            if fx == 0.0:
                return x, x
            if np.sign(fx) != np.sign(pf):
                return (min(px, x), max(px, x))
            last[side] = (x, fx)
    return None


def calibrate_vasicek(
    curve_t: YieldCurve,
    policy: "PolicySpec",
    t: int,
    table: "LifeTable",
    *,
    a: float = 0.1,
    b: Optional[float] = None,
    sigma: float = 0.006,
    rate_bounds: Tuple[float, float] = (-0.5, 0.5),
    nodes: int = 64,
    grid_step: float = 0.005,
) -> VasicekParams:
    """Solve ``r0`` so that the expected year-end best estimate is forward-consistent.

    ``E[be_{t+1}]`` under the Vasicek curve (Gauss-Hermite quadrature over the
    normal draw) must equal ``be_{t+1}`` on ``forward_implied_curve(curve_t)``.
    ``a``, ``b`` and ``sigma`` stay fixed; ``b`` defaults to the continuously
    compounded longest spot rate of *curve_t*.

    Mixed-sign cash flows (premiums against benefits) make ``E[be_{t+1}]``
    non-monotone in ``r0``, so the root is taken in the sign change closest
    to the current one-year rate, found on a ``grid_step`` grid inside
    *rate_bounds*.
    """
    from demrisk.valuation import ValuationBasis, best_estimate_rate, cashflow_profile

    if b is None:
        if curve_t.max_maturity == 0:
            raise CurveError("cannot default Vasicek 'b' from an empty curve")
        b = math.log1p(float(curve_t.spot[-1]))
    if not grid_step > 0.0:
        raise CurveError(f"grid_step must be > 0, got {grid_step!r}")

    horizon = policy.duration - (t + 1)
    if horizon <= 0:
        # be at maturity is the certain benefit: nothing to calibrate
        return VasicekParams(a=a, b=b, sigma=sigma, r0=b)

    target = best_estimate_rate(
        policy, t + 1, ValuationBasis(mortality=table, curve=forward_implied_curve(curve_t))
    )
    cashflows = cashflow_profile(policy, t + 1, table)
    x, w = hermite_expectation_weights(nodes)

    def mean_gap(r0: float) -> float:
        params = VasicekParams(a=a, b=b, sigma=sigma, r0=r0)
        prices = vasicek_zero_prices(params, vasicek_short_rate(params, x), horizon)
        return float(w @ (prices @ cashflows)) - target

    lo, hi = rate_bounds
    start = math.log1p(float(curve_t.spot[0])) if curve_t.max_maturity else b
    start = min(max(start, lo), hi)
    bracket = _nearest_bracket(mean_gap, start, lo, hi, grid_step)
    if bracket is None:
        raise CalibrationError(
            f"cannot bracket Vasicek r0 in [{lo}, {hi}] for policy '{policy.name}' at t={t}: "
            f"gaps {mean_gap(lo):.3e}, {mean_gap(hi):.3e}"
        )
    left, right = bracket
    if left == right:
        root = left
    else:
        root = brentq(mean_gap, left, right, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)

    logger.debug("Calibrated Vasicek r0=%.10f for %s at t=%d", root, policy.name, t)
    return VasicekParams(a=a, b=b, sigma=sigma, r0=float(root))
