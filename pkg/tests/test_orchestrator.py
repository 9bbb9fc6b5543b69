"""Tests for ReportOrchestrator and the report handlers."""

import numpy as np
import pytest

from demrisk.config import build_inputs, load_run_config, parse_run_config
from demrisk.orchestrator import LG_ROWS, MCV_ROWS, ReportOrchestrator
from demrisk.profit import ClosureError
from tests.conftest import CONFIG_DIR


def _inputs(name, **updates):
    config, base_dir = load_run_config(CONFIG_DIR / name, environ={})
    if updates:
        data = config.model_dump(mode="json")
        for block, values in updates.items():
            data[block].update(values)
        config = parse_run_config(data)
    return build_inputs(config, base_dir)


def _tables(result):
    assert result["status"] == "ok", result.get("error")
    return {table.name: table.frame for table in result["tables"]}


@pytest.fixture(scope="module")
def table1_inputs():
    return _inputs("table1.json")


def test_value_report(table1_inputs):
    tables = _tables(ReportOrchestrator().delegate("value", table1_inputs))
    frame = tables["value_pure_endowment"]
    assert list(frame.columns) == ["t", "b", "pi", "v", "be", "epv", "D"]
    assert len(frame) == 21
    assert frame["v"].iloc[0] == pytest.approx(0.0, abs=1e-14)
    assert frame["be"].iloc[-1] == 1.0
    assert np.isnan(frame["D"].iloc[0])
    assert tables["value_term_insurance"]["be"].iloc[-1] == 0.0


def test_project_releases_loading_in_first_year(table1_inputs):
    frame = _tables(ReportOrchestrator().delegate("project", table1_inputs))["project_pure_endowment"]
    w0 = frame["w_t"].iloc[0]
    assert frame["E_mcv"].iloc[0] > 0
    assert np.all(np.abs(frame["E_mcv"].iloc[1:]) < 1e-8 * w0)
    assert np.all(frame["E_lg"] > 0)
    np.testing.assert_allclose(frame["lambda"], -0.15, atol=1e-12)
    after = frame.iloc[1:]
    np.testing.assert_allclose(after["E_lg"] + after["E_q_gap"], 0.0, atol=1e-8 * w0)


def test_two_percent_curve_gives_expected_losses():
    frame = _tables(ReportOrchestrator().delegate("project", _inputs("stress_flat_2pct.json")))[
        "project_pure_endowment"
    ]
    assert np.all(frame["E_mcv"].iloc[1:] < 0)


def test_high_rates_give_gains_while_best_estimate_is_negative():
    orchestrator = ReportOrchestrator()
    inputs = _inputs("stress_flat_20pct.json")
    project = _tables(orchestrator.delegate("project", inputs))["project_term_insurance"]
    value = _tables(orchestrator.delegate("value", inputs))["value_term_insurance"]
    after_premium = (value["be"] + value["pi"]).iloc[1:20].to_numpy()
    expected = project["E_mcv"].iloc[1:].to_numpy()
    window = after_premium < 0
    assert window.any()
    assert np.all(expected[window] > 0)
    assert np.all(expected[~window] <= 0)


def test_simulate_layout_and_positive_scr():
    inputs = _inputs("case_study.json", simulation={"n_sims": 2000, "times": [10, 19], "workers": 1})
    tables = _tables(ReportOrchestrator().delegate("simulate", inputs))
    mcv = tables["simulate_mcv_endowment"]
    assert tuple(mcv.index) == MCV_ROWS
    assert list(mcv.columns) == ["t=10", "t=19"]
    assert tuple(tables["simulate_lg_endowment"].index) == LG_ROWS
    assert np.all(mcv.loc["SCR"] > 0)
    diagnostics = tables["simulate_diagnostics_endowment"]
    assert list(diagnostics["n_sims"]) == [2000, 2000]


def test_decompose_closures_and_zero_spread():
    inputs = _inputs("table1.json", decompose={"n_paths": 200, "times": [0, 5], "asset_return": 0.01})
    frame = _tables(ReportOrchestrator().delegate("decompose", inputs))["decompose_pure_endowment"]
    assert len(frame) == 400
    assert frame["closure_homans"].max() < 1e-8
    assert frame["closure_split"].max() < 1e-8
    np.testing.assert_allclose(frame["y2_financial"], 0.0, atol=1e-6)
    np.testing.assert_allclose(frame["y5_residual"], 0.0, atol=1e-6)
    np.testing.assert_allclose(frame["y3_lapse"], 0.0)


def test_decompose_final_endowment_year_closes_on_large_cohort():
    inputs = _inputs("case_study.json", decompose={"n_paths": 300, "times": [19]})
    tables = _tables(ReportOrchestrator().delegate("decompose", inputs))
    for name in ("pure_endowment", "endowment", "term_insurance"):
        frame = tables[f"decompose_{name}"]
        assert len(frame) == 300
        for column in ("closure_homans", "closure_split", "closure_sum_at_risk"):
            assert frame[column].max() < 1e-8


def test_simulate_calibrates_term_insurance_with_annual_premiums():
    inputs = _inputs("table1.json", simulation={"n_sims": 1000, "times": [0, 10]})
    tables = _tables(ReportOrchestrator().delegate("simulate", inputs))
    diagnostics = tables["simulate_diagnostics_term_insurance"]
    assert list(diagnostics["t"]) == [0, 10]
    assert np.all(np.abs(diagnostics["r0"]) < 0.5)


def test_delegate_reports_out_of_range_times(table1_inputs):
    inputs = _inputs("table1.json", simulation={"times": [25]})
    result = ReportOrchestrator().delegate("simulate", inputs)
    assert result["status"] == "error"
    assert "simulation.times" in result["error"]


def test_delegate_unknown_command(table1_inputs):
    result = ReportOrchestrator().delegate("forecast", table1_inputs)
    assert result["status"] == "error"
    assert "forecast" in result["error"]


def test_delegate_maps_closure_failures(table1_inputs):
    orchestrator = ReportOrchestrator()

    def broken(inputs, seed):
        raise ClosureError("split closure gap 1e-3 exceeds 1e-8")

    orchestrator.add_command("broken", broken)
    result = orchestrator.delegate("broken", table1_inputs)
    assert result == {"status": "check_failed", "error": "split closure gap 1e-3 exceeds 1e-8", "command": "broken"}


def test_seed_override_is_passed_to_handlers(table1_inputs):
    seen = []
    orchestrator = ReportOrchestrator()
    orchestrator.add_command("echo-seed", lambda inputs, seed: seen.append(seed) or [])
    orchestrator.delegate("echo-seed", table1_inputs)
    orchestrator.delegate("echo-seed", table1_inputs, seed=77)
    assert seen == [2016, 77]


def test_add_command():
    orchestrator = ReportOrchestrator()
    handler = lambda inputs, seed: []  # noqa: E731
    assert orchestrator.add_command("noop", handler) == "Added noop command."
    assert orchestrator.commands["noop"] is handler
