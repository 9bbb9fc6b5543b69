"""Report orchestrator: routes a command to its handler and turns failures into payloads."""

from __future__ import annotations

import logging
import re
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from demrisk.config import PolicyRun, RunInputs
from demrisk.contract import local_reserve_rate, sum_at_risk
from demrisk.curve import CalibrationError, VasicekParams, calibrate_vasicek, roll_forward
from demrisk.engine import SimulationConfig, simulate_outcomes, simulate_year_paths, summarize
from demrisk.lifetable import qx
from demrisk.profit import (
    ClosureError,
    PortfolioState,
    YearBases,
    check_closure,
    closure_gap,
    demographic_profit_sum_at_risk,
    demographic_split,
    expected_demographic_profit,
    expected_demographic_split,
    homans_components,
    lapse_split,
    local_profit_moments,
    project_state,
    safety_loading,
    year_bases,
)
from demrisk.reports import ReportTable
from demrisk.valuation import ValuationBasis, best_estimate_rate, epv_rate

logger = logging.getLogger(__name__)

Handler = Callable[[RunInputs, int], List[ReportTable]]

MCV_ROWS = (
    "E[y_MCV](T)",
    "E[y_MCV]",
    "E[y_MCV] on w_t",
    "sigma(y_MCV)",
    "gamma(y_MCV)",
    "SCR",
    "SCR on w_t",
)
LG_ROWS = ("E[y_LG](T)", "sigma(y_LG)(T)", "gamma(y_LG)(T)", "SCR", "SCR on w_t")


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_-]+", "_", name).strip("_") or "policy"


def _check_times(times: List[int], run: PolicyRun, key: str) -> None:
    for t in times:
        if not 0 <= t < run.spec.duration:
            raise ValueError(f"{key}: time {t} outside [0, {run.spec.duration}) for policy '{run.spec.name}'")


def _year(inputs: RunInputs, run: PolicyRun, t: int) -> tuple[PortfolioState, YearBases]:
    lapse = inputs.config.simulation.lapse_rate
    state = project_state(run.spec, run.cohort, t, inputs.table2, lapse)
    bases = year_bases(run.spec, t, roll_forward(inputs.curve, t), inputs.table2)
    return state, bases


def _vasicek(inputs: RunInputs, run: PolicyRun, t: int) -> VasicekParams:
    block = inputs.config.vasicek
    return calibrate_vasicek(
        roll_forward(inputs.curve, t),
        run.spec,
        t,
        inputs.table2,
        a=block.a,
        b=block.b,
        sigma=block.sigma,
        rate_bounds=tuple(block.rate_bounds),
        nodes=block.nodes,
    )


def _sim_config(inputs: RunInputs, seed: int, n_sims: Optional[int] = None) -> SimulationConfig:
    block = inputs.config.simulation
    return SimulationConfig(
        n_sims=n_sims or block.n_sims,
        seed=seed,
        confidence=block.confidence,
        lapse_rate=block.lapse_rate,
        workers=block.workers,
        block_size=block.block_size,
    )


def value_table(inputs: RunInputs, run: PolicyRun) -> ReportTable:
    """Per-t premium, reserve, best estimate, EPV and sum-at-risk rates."""
    spec = run.spec
    rows = []
    for t in range(spec.duration + 1):
        basis = ValuationBasis(mortality=inputs.table2, curve=roll_forward(inputs.curve, t))
        rows.append(
            {
                "t": t,
                "b": spec.gross_premium(t),
                "pi": spec.net_premium(t),
                "v": local_reserve_rate(spec, t),
                "be": best_estimate_rate(spec, t, basis),
                "epv": epv_rate(spec, t, inputs.table2),
                "D": sum_at_risk(spec, t) if t >= 1 else np.nan,
            }
        )
    return ReportTable(name=f"value_{_slug(spec.name)}", frame=pd.DataFrame(rows))


def project_table(inputs: RunInputs, run: PolicyRun) -> ReportTable:
    """Expected MCV and local-GAAP profit per year, with the split and the rate series."""
    spec = run.spec
    lapse = inputs.config.simulation.lapse_rate
    rows = []
    for t in range(spec.duration):
        state, bases = _year(inputs, run, t)
        s = lapse_split(state, lapse).s
        split = expected_demographic_split(state, bases, s)
        loading = np.nan
        if qx(inputs.table2, spec.issue_age + t) > 0.0:
            loading = safety_loading(t, spec.first_order_table, inputs.table2, spec.issue_age)
        rows.append(
            {
                "t": t,
                "w_t": state.w,
                "l_t": state.l,
                "E_mcv": expected_demographic_profit(state, bases, s),
                "E_lg": split.lg,
                "E_rf_gap": split.rf_gap,
                "E_q_gap": split.q_gap,
                "lambda": loading,
                "be": bases.be_t,
                "epv": bases.epv_t,
                "v": bases.v_t,
            }
        )
    return ReportTable(
        name=f"project_{_slug(spec.name)}",
        frame=pd.DataFrame(rows),
        money_columns=("w_t", "E_mcv", "E_lg", "E_rf_gap", "E_q_gap"),
    )


def decompose_table(inputs: RunInputs, run: PolicyRun, seed: int) -> ReportTable:
    """Sampled paths with the five components, the demographic split and closure gaps."""
    block = inputs.config.decompose
    _check_times(block.times, run, "decompose.times")
    frames = []
    for t in block.times:
        state, bases = _year(inputs, run, t)
        config = _sim_config(inputs, seed, n_sims=block.n_paths)
        outcome = simulate_outcomes(
            state, bases, _vasicek(inputs, run, t), config, inputs.table2, asset_return=block.asset_return
        )
        parts = homans_components(state, outcome, bases, inputs.expenses)
        split = demographic_split(state, outcome, bases)
        via_sum_at_risk = demographic_profit_sum_at_risk(state, outcome, bases)
        n = block.n_paths
        frame = pd.DataFrame(
            {
                "t": np.full(n, t),
                "path": np.arange(n),
                "z": outcome.z,
                "s": np.full(n, float(outcome.s)),
                "w_next": outcome.w_next,
                "be_next": outcome.be_next,
                "y1_demographic": parts.y1_demographic,
                "y2_financial": np.broadcast_to(parts.y2_financial, (n,)),
                "y3_lapse": np.broadcast_to(parts.y3_lapse, (n,)),
                "y4_expense": np.broadcast_to(parts.y4_expense, (n,)),
                "y5_residual": np.broadcast_to(parts.y5_residual, (n,)),
                "total": parts.total,
                "lg": split.lg,
                "rf_gap": split.rf_gap,
                "q_gap": split.q_gap,
                "y1_sum_at_risk": via_sum_at_risk,
            }
        )
        scale = parts.magnitude + split.magnitude
        for column, what, summed, total in (
            ("closure_homans", "five-component", parts.components_sum, parts.total),
            ("closure_split", "demographic split", split.total, parts.y1_demographic),
            ("closure_sum_at_risk", "sum-at-risk form", via_sum_at_risk, parts.y1_demographic),
        ):
            frame[column] = closure_gap(summed, total, scale)
            check_closure(summed, total, f"{run.spec.name} t={t} {what}", scale=scale)
        frames.append(frame)
    money = ("z", "s", "w_next", "y1_demographic", "y2_financial", "y3_lapse", "y4_expense",
             "y5_residual", "total", "lg", "rf_gap", "q_gap", "y1_sum_at_risk")
    return ReportTable(
        name=f"decompose_{_slug(run.spec.name)}",
        frame=pd.concat(frames, ignore_index=True),
        money_columns=money,
    )


def simulate_tables(inputs: RunInputs, run: PolicyRun, seed: int) -> List[ReportTable]:
    """MCV and local-GAAP result tables in the case-study layout plus run diagnostics."""
    block = inputs.config.simulation
    _check_times(block.times, run, "simulation.times")
    config = _sim_config(inputs, seed)
    mcv: Dict[str, List[float]] = {}
    local: Dict[str, List[float]] = {}
    diagnostics = []
    for t in block.times:
        state, bases = _year(inputs, run, t)
        params = _vasicek(inputs, run, t)
        sim = simulate_year_paths(state, bases, params, config, inputs.table2)
        expected = expected_demographic_profit(state, bases, sim.s)
        moments = local_profit_moments(state, bases, lives=sim.exposed, s=sim.s, sums=_exposed_sums(state, sim))
        row_mcv = summarize(sim.mcv)
        row_lg = summarize(sim.local)
        w = state.w
        mcv[f"t={t}"] = [
            expected,
            row_mcv.mean,
            row_mcv.mean / w if w else 0.0,
            row_mcv.std,
            row_mcv.skewness,
            row_mcv.scr,
            row_mcv.scr_ratio,
        ]
        local[f"t={t}"] = [moments.mean, moments.std, moments.skewness, row_lg.scr, row_lg.scr_ratio]
        se = sim.mcv.standard_error
        diagnostics.append(
            {
                "t": t,
                "w_t": w,
                "l_t": state.l,
                "n_sims": len(sim.mcv),
                "r0": params.r0,
                "mean_mcv": row_mcv.mean,
                "se_mcv": se,
                "gap_in_se_mcv": (row_mcv.mean - expected) / se if se > 0 else 0.0,
                "mean_lg": row_lg.mean,
                "se_lg": sim.local.standard_error,
                "skew_defined_mcv": row_mcv.skew_defined,
                "skew_defined_lg": row_lg.skew_defined,
            }
        )
    slug = _slug(run.spec.name)
    mcv_frame = pd.DataFrame(mcv, index=pd.Index(MCV_ROWS, name="metric"))
    lg_frame = pd.DataFrame(local, index=pd.Index(LG_ROWS, name="metric"))
    return [
        ReportTable(f"simulate_mcv_{slug}", mcv_frame, money_rows=("E[y_MCV](T)", "E[y_MCV]", "sigma(y_MCV)", "SCR")),
        ReportTable(f"simulate_lg_{slug}", lg_frame, money_rows=("E[y_LG](T)", "sigma(y_LG)(T)", "SCR")),
        ReportTable(
            f"simulate_diagnostics_{slug}",
            pd.DataFrame(diagnostics),
            money_columns=("w_t", "mean_mcv", "se_mcv", "mean_lg", "se_lg"),
        ),
    ]


def _exposed_sums(state: PortfolioState, sim) -> Optional[np.ndarray]:
    if state.sums is None:
        return None
    return np.asarray(state.sums, dtype=float)[: sim.exposed]


class ReportOrchestrator:
    """Routes a report command to its handler."""

    def __init__(self) -> None:
        self.commands: Dict[str, Handler] = {
            "value": lambda inputs, seed: [value_table(inputs, run) for run in inputs.policies],
            "project": lambda inputs, seed: [project_table(inputs, run) for run in inputs.policies],
            "decompose": lambda inputs, seed: [decompose_table(inputs, run, seed) for run in inputs.policies],
            "simulate": lambda inputs, seed: [
                table for run in inputs.policies for table in simulate_tables(inputs, run, seed)
            ],
        }

    def delegate(self, command: str, inputs: RunInputs, seed: Optional[int] = None) -> Dict[str, Any]:
        """Run *command* on *inputs*.

        Returns
        -------
        dict
            ``{"status": "ok", "tables": [...]}`` on success, otherwise
            ``{"status": "check_failed" | "error", "error": message}``.
        """
        handler = self.commands.get(command)
        if handler is None:
            return {"status": "error", "error": f"Unknown command '{command}'", "command": command}
        seed = inputs.config.simulation.seed if seed is None else seed
        try:
            tables = handler(inputs, seed)
        except ClosureError as exc:
            logger.error("%s: %s", command, exc)
            return {"status": "check_failed", "error": str(exc), "command": command}
        except (ValueError, CalibrationError, RuntimeError) as exc:
            logger.error("%s failed: %s", command, exc)
            return {"status": "error", "error": str(exc), "command": command}
        return {"status": "ok", "tables": tables, "command": command}

    def add_command(self, name: str, handler: Handler) -> str:
        """Register an extra report command."""
        self.commands[name] = handler
        return f"Added {name} command."
