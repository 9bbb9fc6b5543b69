"""One-year Monte Carlo of the demographic profit and the SCR estimate.

Paths are generated in fixed-size blocks. Block ``k`` draws from its own
Philox stream seeded by ``SeedSequence(seed, spawn_key=(k,))``, so the
samples depend on the seed and the block size only, whatever the number
of workers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from demrisk.contract import PolicySpec
from demrisk.curve import VasicekParams, vasicek_short_rate, vasicek_zero_prices
from demrisk.profit import (
    PathOutcome,
    PortfolioState,
    YearBases,
    demographic_profit,
    lapse_split,
    local_demographic_profit,
)
from demrisk.valuation import cashflow_profile

logger = logging.getLogger(__name__)

# rows x exposed lives drawn at once when sampling explicit sums
_SORT_CELLS = 2_000_000


class SimulationError(RuntimeError):
    """Raised for invalid simulation settings or inputs."""


@dataclass(frozen=True)
class SimulationConfig:
    """Monte Carlo settings.

    Parameters
    ----------
    n_sims:
        Number of simulated paths.
    seed:
        Root seed of the block streams.
    confidence:
        VaR confidence level of the SCR.
    lapse_rate:
        Deterministic share of lives lapsing at the start of the year.
    workers:
        joblib worker threads; never changes the samples.
    block_size:
        Paths per random stream.
    """

    n_sims: int
    seed: int = 0
    confidence: float = 0.995
    lapse_rate: float = 0.0
    workers: int = 1
    block_size: int = 10_000

    def __post_init__(self) -> None:
        if self.n_sims < 1:
            raise SimulationError(f"n_sims must be >= 1, got {self.n_sims}")
        if not 0.5 < self.confidence < 1.0:
            raise SimulationError(f"confidence must lie in (0.5, 1), got {self.confidence!r}")
        if not 0.0 <= self.lapse_rate < 1.0:
            raise SimulationError(f"lapse_rate must lie in [0, 1), got {self.lapse_rate!r}")
        if self.workers < 1 or self.block_size < 1:
            raise SimulationError("workers and block_size must be >= 1")
        if self.seed < 0:
            raise SimulationError(f"seed must be >= 0, got {self.seed}")


class ProfitDistribution:
    """Simulated profit samples of one year with their summary statistics."""

    def __init__(self, samples: np.ndarray, w_t: float, confidence: float = 0.995) -> None:
        values = np.asarray(samples, dtype=float).reshape(-1)
        if values.size == 0:
            raise SimulationError("profit distribution needs at least one sample")
        values.setflags(write=False)
        self.samples = values
        self.w_t = float(w_t)
        self.confidence = confidence

    def __len__(self) -> int:
        return int(self.samples.size)

    @cached_property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @cached_property
    def std_dev(self) -> float:
        if self.samples.size < 2:
            return 0.0
        return float(np.std(self.samples, ddof=1))

    @property
    def standard_error(self) -> float:
        return self.std_dev / math.sqrt(self.samples.size)

    @cached_property
    def skewness(self) -> float:
        """Adjusted Fisher-Pearson skewness; 0 for degenerate or tiny samples."""
        if not self.skew_defined:
            return 0.0
        return float(stats.skew(self.samples, bias=False))

    @cached_property
    def skew_defined(self) -> bool:
        return self.samples.size >= 3 and float(np.ptp(self.samples)) > 0.0

    @cached_property
    def scr(self) -> float:
        return scr(self.samples, self.confidence)

    @property
    def scr_ratio(self) -> float:
        return self.scr / self.w_t if self.w_t else 0.0

    def quantile(self, p: float) -> float:
        """Lower empirical quantile (order statistic ``ceil(p n)``)."""
        return float(np.sort(self.samples)[_order_index(p, self.samples.size)])


def _order_index(p: float, n: int) -> int:
    return max(1, math.ceil(p * n - 1e-9)) - 1


def scr(dist: Union[ProfitDistribution, np.ndarray], confidence: float = 0.995) -> float:
    """Negated lower ``1 - confidence`` order statistic of the profit samples."""
    samples = dist.samples if isinstance(dist, ProfitDistribution) else np.asarray(dist, dtype=float).reshape(-1)
    n = samples.size
    if n == 0:
        raise SimulationError("cannot estimate SCR from an empty sample")
    if n < 1.0 / (1.0 - confidence):
        logger.warning(
            "SCR at %.4f confidence from only %d samples; the quantile sits on the sample minimum",
            confidence,
            n,
        )
    k = _order_index(1.0 - confidence, n)
    return -float(np.partition(samples, k)[k])


@dataclass(frozen=True)
class ReportRow:
    mean: float
    std: float
    skewness: float
    scr: float
    scr_ratio: float
    skew_defined: bool


def summarize(dist: ProfitDistribution) -> ReportRow:
    if len(dist) < 3:
        raise SimulationError(f"summary needs at least 3 samples, got {len(dist)}")
    return ReportRow(
        mean=dist.mean,
        std=dist.std_dev,
        skewness=dist.skewness,
        scr=dist.scr,
        scr_ratio=dist.scr_ratio,
        skew_defined=dist.skew_defined,
    )


def lognormal_params_from_mean_cv(mean: float, cv: float) -> Tuple[float, float]:
    """Return ``(mu, s)`` of the LogNormal with the given mean and coefficient of variation."""
    if not mean > 0.0:
        raise SimulationError(f"LogNormal mean must be > 0, got {mean!r}")
    if cv < 0.0:
        raise SimulationError(f"LogNormal cv must be >= 0, got {cv!r}")
    s2 = math.log1p(cv * cv)
    return math.log(mean) - 0.5 * s2, math.sqrt(s2)


def simulate_deaths(lives: int, q: float, rng: np.random.Generator, size: Optional[int] = None):
    """Binomial death count(s)."""
    if not 0.0 <= q <= 1.0:
        raise SimulationError(f"death probability must lie in [0, 1], got {q!r}")
    return rng.binomial(lives, q, size=size)


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


@dataclass(frozen=True)
class _YearContext:
    state: PortfolioState
    bases: YearBases
    vasicek: VasicekParams
    exposed: int
    s: float
    exposed_sums: Optional[np.ndarray]
    cv: float
    horizon: int
    cashflows: np.ndarray
    survival_benefit: float
    seed: int


@dataclass(frozen=True)
class YearSimulation:
    """MCV and local-GAAP demographic profit distributions of the same paths."""

    mcv: ProfitDistribution
    local: ProfitDistribution
    exposed: int
    s: float


def _claims(ctx: _YearContext, deaths: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = deaths.size
    ws = ctx.state.w - ctx.s
    if ctx.exposed == 0:
        return np.zeros(n)
    if ctx.exposed_sums is not None:
        sums = ctx.exposed_sums
        z = np.zeros(n)
        rows = max(1, _SORT_CELLS // sums.size)
        for start in range(0, n, rows):
            stop = min(n, start + rows)
            order = np.argsort(rng.random((stop - start, sums.size)), axis=1)
            totals = np.cumsum(sums[order], axis=1)
            chunk = deaths[start:stop]
            picked = totals[np.arange(stop - start), np.maximum(chunk - 1, 0)]
            z[start:stop] = np.where(chunk > 0, picked, 0.0)
        return z
    mean_claim = ws / ctx.exposed
    if ctx.cv == 0.0:
        z = deaths * mean_claim
    else:
        mu, sd = lognormal_params_from_mean_cv(mean_claim, ctx.cv)
        draws = rng.lognormal(mu, sd, size=int(deaths.sum()))
        z = np.bincount(np.repeat(np.arange(n), deaths), weights=draws, minlength=n)
    # all exposed lives gone: every sum leaves; otherwise keep w_{t+1} >= 0
    return np.where(deaths == ctx.exposed, ws, np.minimum(z, ws))


def _block_outcome(ctx: _YearContext, block: int, n_paths: int) -> PathOutcome:
    rng = block_generator(ctx.seed, block)
    deaths = simulate_deaths(ctx.exposed, ctx.bases.q, rng, size=n_paths)
    z = _claims(ctx, deaths, rng)
    draws = rng.standard_normal(n_paths)
    if ctx.horizon == 0:
        be_next = np.full(n_paths, ctx.survival_benefit)
    else:
        prices = vasicek_zero_prices(ctx.vasicek, vasicek_short_rate(ctx.vasicek, draws), ctx.horizon)
        be_next = prices @ ctx.cashflows
    return PathOutcome.from_deaths(ctx.state, z, be_next, s=ctx.s, asset_return=ctx.bases.one_year_rate)


def _simulate_block(ctx: _YearContext, block: int, n_paths: int) -> Tuple[np.ndarray, np.ndarray]:
    outcome = _block_outcome(ctx, block, n_paths)
    return (
        np.asarray(demographic_profit(ctx.state, outcome, ctx.bases), dtype=float),
        np.asarray(local_demographic_profit(ctx.state, outcome, ctx.bases), dtype=float),
    )


def _blocks(config: SimulationConfig) -> List[Tuple[int, int]]:
    return [
        (block, min(config.block_size, config.n_sims - start))
        for block, start in enumerate(range(0, config.n_sims, config.block_size))
    ]


def _context(
    state: PortfolioState, bases: YearBases, vasicek: VasicekParams, config: SimulationConfig, table2
) -> _YearContext:
    policy: PolicySpec = state.policy
    split = lapse_split(state, config.lapse_rate)
    horizon = policy.duration - (state.t + 1)
    return _YearContext(
        state=state,
        bases=bases,
        vasicek=vasicek,
        exposed=split.exposed,
        s=split.s,
        exposed_sums=split.exposed_sums,
        cv=state.cohort.sum_cv,
        horizon=horizon,
        cashflows=cashflow_profile(policy, state.t + 1, table2) if horizon else np.zeros(1),
        survival_benefit=policy.survival_benefit,
        seed=config.seed,
    )


def simulate_year_paths(
    state: PortfolioState,
    bases: YearBases,
    vasicek: VasicekParams,
    config: SimulationConfig,
    table2,
) -> YearSimulation:
    """Simulate deaths, claims and the year-end curve; return both profit distributions."""
    if state.t != bases.t:
        raise SimulationError(f"state at t={state.t} simulated with bases for t={bases.t}")
    ctx = _context(state, bases, vasicek, config, table2)
    sizes = _blocks(config)

    logger.debug(
        "Simulating %s t=%d: %d paths in %d blocks on %d workers",
        state.policy.name, state.t, config.n_sims, len(sizes), config.workers,
    )
    results = Parallel(n_jobs=config.workers, prefer="threads")(
        delayed(_simulate_block)(ctx, block, n) for block, n in sizes
    )
    mcv = ProfitDistribution(np.concatenate([r[0] for r in results]), state.w, config.confidence)
    local = ProfitDistribution(np.concatenate([r[1] for r in results]), state.w, config.confidence)
    logger.info(
        "%s t=%d: %d paths, mean %.2f (se %.2f), SCR %.2f",
        state.policy.name, state.t, len(mcv), mcv.mean, mcv.standard_error, mcv.scr,
    )
    return YearSimulation(mcv=mcv, local=local, exposed=ctx.exposed, s=ctx.s)


def simulate_one_year(
    state: PortfolioState,
    bases: YearBases,
    vasicek: VasicekParams,
    config: SimulationConfig,
    table2,
) -> ProfitDistribution:
    """MCV demographic profit distribution of the year starting at ``state.t``."""
    return simulate_year_paths(state, bases, vasicek, config, table2).mcv


def simulate_outcomes(
    state: PortfolioState,
    bases: YearBases,
    vasicek: VasicekParams,
    config: SimulationConfig,
    table2,
    asset_return: Optional[float] = None,
) -> PathOutcome:
    """Per-path year-end outcomes on the same streams :func:`simulate_year_paths` uses."""
    ctx = _context(state, bases, vasicek, config, table2)
    parts = [_block_outcome(ctx, block, n) for block, n in _blocks(config)]
    z = np.concatenate([p.z for p in parts])
    be_next = np.concatenate([p.be_next for p in parts])
    rate = bases.one_year_rate if asset_return is None else asset_return
    return PathOutcome.from_deaths(state, z, be_next, s=ctx.s, asset_return=rate)
