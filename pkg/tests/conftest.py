"""Shared fixtures: bundled tables and small policy factories."""

from pathlib import Path

import pytest

from demrisk.contract import PolicyKind, PolicySpec, PremiumType
from demrisk.lifetable import ScalingSchedule, load_life_table, scale_table

ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = ROOT / "data"
CONFIG_DIR = ROOT / "configs"


@pytest.fixture(scope="session")
def table2016():
    return load_life_table(DATA_DIR / "synthetic_2016.csv", min_age=0)


@pytest.fixture(scope="session")
def table2014():
    return load_life_table(DATA_DIR / "synthetic_2014.csv", min_age=0)


@pytest.fixture(scope="session")
def pricing085(table2016):
    schedule = ScalingSchedule.constant(0.85, table2016.min_age, table2016.max_age)
    return scale_table(table2016, schedule, name="pricing-085")


@pytest.fixture
def make_spec(pricing085):
    def _make(kind=PolicyKind.PURE_ENDOWMENT, premium_type=PremiumType.ANNUAL, table=None, **kwargs):
        params = dict(issue_age=40, duration=20, technical_rate=0.01)
        params.update(kwargs)
        return PolicySpec(
            kind=kind,
            premium_type=premium_type,
            first_order_table=table if table is not None else pricing085,
            **params,
        )

    return _make
