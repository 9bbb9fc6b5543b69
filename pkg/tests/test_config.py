"""Tests for run-config parsing, env overrides and input building."""

import copy
import json

import pytest

from demrisk.config import (
    ConfigError,
    apply_env_overrides,
    build_inputs,
    config_echo,
    load_run_config,
    parse_run_config,
)
from demrisk.contract import PolicyKind
from demrisk.lifetable import qx
from tests.conftest import CONFIG_DIR, DATA_DIR

BASE_DOCUMENT = {
    "tables": {
        "realistic": {"path": str(DATA_DIR / "synthetic_2016.csv")},
        "pricing": {"base": "realistic", "scaling": {"kind": "constant", "factor": 0.85}},
    },
    "second_order_table": "realistic",
    "curve": {"flat_rate": 0.01, "max_maturity": 40},
    "policies": [
        {
            "name": "pe",
            "kind": "pure_endowment",
            "issue_age": 40,
            "duration": 20,
            "premium_type": "annual",
            "technical_rate": 0.01,
            "first_order_table": "pricing",
            "cohort": {"l0": 100, "sum_mean": 1000.0},
        }
    ],
}


def _document(**changes):
    doc = copy.deepcopy(BASE_DOCUMENT)
    doc.update(changes)
    return doc


def _policy(**changes):
    policy = copy.deepcopy(BASE_DOCUMENT["policies"][0])
    policy.update(changes)
    return policy


def test_parse_defaults():
    config = parse_run_config(BASE_DOCUMENT)
    assert config.simulation.n_sims == 100_000
    assert config.simulation.confidence == 0.995
    assert config.output.formats == ["csv"]
    assert config.vasicek.a == 0.1
    assert config.policies[0].kind is PolicyKind.PURE_ENDOWMENT


def test_error_is_path_qualified():
    doc = _document(policies=[_policy(duration=0)])
    with pytest.raises(ConfigError, match=r"policies\.0\.duration"):
        parse_run_config(doc)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="output.colour"):
        parse_run_config(_document(output={"colour": "blue"}))


def test_undefined_table_reference():
    doc = _document(policies=[_policy(first_order_table="missing")])
    with pytest.raises(ConfigError, match="first_order_table 'missing' is not defined"):
        parse_run_config(doc)


def test_derived_table_must_have_file_base():
    tables = copy.deepcopy(BASE_DOCUMENT["tables"])
    tables["twice"] = {"base": "pricing", "scaling": {"kind": "constant", "factor": 0.9}}
    with pytest.raises(ConfigError, match="tables.twice.base"):
        parse_run_config(_document(tables=tables))


def test_cohort_needs_one_sum_source():
    doc = _document(policies=[_policy(cohort={"l0": 10, "sum_mean": 1.0, "sum_total": 10.0})])
    with pytest.raises(ConfigError, match=r"policies\.0\.cohort"):
        parse_run_config(doc)


def test_duplicate_policy_names():
    with pytest.raises(ConfigError, match="unique"):
        parse_run_config(_document(policies=[_policy(), _policy()]))


def test_curve_needs_one_source():
    with pytest.raises(ConfigError, match="curve"):
        parse_run_config(_document(curve={"flat_rate": 0.01, "path": "x.csv"}))


def test_env_overrides():
    config = parse_run_config(BASE_DOCUMENT)
    updated = apply_env_overrides(config, {"DEMRISK_OUT_DIR": "/tmp/reports", "DEMRISK_WORKERS": "6"})
    assert updated.output.directory == "/tmp/reports"
    assert updated.simulation.workers == 6
    assert config.simulation.workers == 1


def test_config_echo_is_independent_of_env_overrides():
    config = parse_run_config(BASE_DOCUMENT)
    updated = apply_env_overrides(config, {"DEMRISK_OUT_DIR": "/tmp/reports", "DEMRISK_WORKERS": "6"})
    assert config_echo(updated, seed=9) == config_echo(config, seed=9)
    assert config_echo(config)["seed"] == config.simulation.seed
    assert config_echo(config, seed=9)["seed"] == 9


def test_env_override_rejects_bad_workers():
    config = parse_run_config(BASE_DOCUMENT)
    with pytest.raises(ConfigError, match="DEMRISK_WORKERS"):
        apply_env_overrides(config, {"DEMRISK_WORKERS": "many"})


def test_load_run_config_resolves_relative_paths(tmp_path):
    (tmp_path / "q.csv").write_text((DATA_DIR / "synthetic_2016.csv").read_text())
    doc = _document(tables={"realistic": {"path": "q.csv"}})
    doc["policies"] = [_policy(first_order_table="realistic")]
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))

    config, base_dir = load_run_config(path, environ={})
    inputs = build_inputs(config, base_dir)
    assert base_dir == tmp_path.resolve()
    assert inputs.table2.name == "realistic"
    assert inputs.policies[0].cohort.w0 == 100_000.0


def test_load_run_config_missing_table_file(tmp_path):
    doc = _document(tables={"realistic": {"path": "nope.csv"}})
    doc["policies"] = [_policy(first_order_table="realistic")]
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="tables.realistic.path: file not found"):
        load_run_config(path, environ={})


def test_load_run_config_invalid_json(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON at line 1"):
        load_run_config(path, environ={})


def test_build_inputs_scales_tables(tmp_path):
    inputs = build_inputs(parse_run_config(BASE_DOCUMENT), tmp_path)
    realistic, pricing = inputs.tables["realistic"], inputs.tables["pricing"]
    assert qx(pricing, 50) == pytest.approx(0.85 * qx(realistic, 50), rel=1e-14)
    assert inputs.policies[0].spec.first_order_table is pricing


def test_build_inputs_wraps_policy_errors(tmp_path):
    doc = _document(policies=[_policy(surrender_rate=0.02)])
    with pytest.raises(ConfigError, match=r"policies\.0: surrender rate"):
        build_inputs(parse_run_config(doc), tmp_path)


def test_build_inputs_checks_curve_coverage(tmp_path):
    doc = _document(curve={"flat_rate": 0.01, "max_maturity": 10})
    with pytest.raises(ConfigError, match="curve: covers 10 years"):
        build_inputs(parse_run_config(doc), tmp_path)


def test_sum_total_sets_mean(tmp_path):
    doc = _document(policies=[_policy(cohort={"l0": 15000, "sum_total": 1510653999, "sum_cv": 1.99})])
    cohort = build_inputs(parse_run_config(doc), tmp_path).policies[0].cohort
    assert cohort.w0 == pytest.approx(1510653999)


@pytest.mark.parametrize("name", ["table1.json", "case_study.json", "stress_flat_2pct.json", "stress_flat_20pct.json"])
def test_bundled_configs_build(name):
    config, base_dir = load_run_config(CONFIG_DIR / name, environ={})
    inputs = build_inputs(config, base_dir)
    assert inputs.policies
