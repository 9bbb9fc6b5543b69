"""Run configuration: one JSON document validated with pydantic before any computation.

Relative paths resolve against the directory of the config file. Only two
environment variables override a loaded document: ``DEMRISK_OUT_DIR`` and
``DEMRISK_WORKERS``.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from demrisk.contract import Cohort, PolicyError, PolicyKind, PolicySpec, PremiumType
from demrisk.curve import YieldCurve, load_curve
from demrisk.lifetable import LifeTable, ScalingSchedule, load_life_table, scale_table
from demrisk.profit import ExpenseAssumptions

logger = logging.getLogger(__name__)

OUT_DIR_ENV = "DEMRISK_OUT_DIR"
WORKERS_ENV = "DEMRISK_WORKERS"


class ConfigError(ValueError):
    """Raised for schema violations and unresolved references, with the offending key path."""


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConstantScaling(_Block):
    kind: Literal["constant"]
    factor: float = Field(gt=0)


class LinearScaling(_Block):
    """Linear multiplier between two anchor ages, flat outside them."""

    kind: Literal["linear"]
    from_age: int = 40
    from_factor: float = Field(default=0.90, gt=0)
    to_age: int = 60
    to_factor: float = Field(default=0.80, gt=0)

    @model_validator(mode="after")
    def _ordered(self) -> "LinearScaling":
        if self.to_age <= self.from_age:
            raise ValueError("to_age must be greater than from_age")
        return self


class TableSource(_Block):
    """A table read from ``path`` or derived from another table by ``scaling``."""

    path: Optional[str] = None
    base: Optional[str] = None
    min_age: int = Field(default=0, ge=0)
    scaling: Optional[Annotated[Union[ConstantScaling, LinearScaling], Field(discriminator="kind")]] = None

    @model_validator(mode="after")
    def _one_source(self) -> "TableSource":
        if (self.path is None) == (self.base is None):
            raise ValueError("set exactly one of 'path' or 'base'")
        if self.base is not None and self.scaling is None:
            raise ValueError("a derived table needs 'scaling'")
        return self


class CurveSource(_Block):
    path: Optional[str] = None
    flat_rate: Optional[float] = Field(default=None, gt=-1)
    max_maturity: int = Field(default=120, ge=1)

    @model_validator(mode="after")
    def _one_source(self) -> "CurveSource":
        if (self.path is None) == (self.flat_rate is None):
            raise ValueError("set exactly one of 'path' or 'flat_rate'")
        return self


class VasicekBlock(_Block):
    a: float = Field(default=0.1, gt=0)
    b: Optional[float] = None
    sigma: float = Field(default=0.006, ge=0)
    rate_bounds: Tuple[float, float] = (-0.5, 0.5)
    nodes: int = Field(default=64, ge=2)

    @model_validator(mode="after")
    def _bounds(self) -> "VasicekBlock":
        if self.rate_bounds[0] >= self.rate_bounds[1]:
            raise ValueError("rate_bounds must be increasing")
        return self


class CohortBlock(_Block):
    l0: int = Field(ge=1)
    sum_mean: Optional[float] = Field(default=None, gt=0)
    sum_total: Optional[float] = Field(default=None, gt=0)
    sum_cv: float = Field(default=0.0, ge=0)
    sums: Optional[List[float]] = None

    @model_validator(mode="after")
    def _sums(self) -> "CohortBlock":
        given = [v is not None for v in (self.sum_mean, self.sum_total, self.sums)]
        if sum(given) != 1:
            raise ValueError("set exactly one of 'sum_mean', 'sum_total' or 'sums'")
        if self.sums is not None and len(self.sums) != self.l0:
            raise ValueError(f"'sums' has {len(self.sums)} entries for l0={self.l0}")
        return self

    def mean(self) -> float:
        if self.sum_mean is not None:
            return self.sum_mean
        if self.sum_total is not None:
            return self.sum_total / self.l0
        return sum(self.sums) / self.l0


class PolicyBlock(_Block):
    name: str
    kind: PolicyKind
    issue_age: int = Field(ge=0)
    duration: int = Field(ge=1)
    premium_type: PremiumType
    technical_rate: float = Field(gt=-1)
    first_order_table: str
    alpha: float = Field(default=0.0, ge=0)
    beta: float = Field(default=0.0, ge=0)
    gamma: float = Field(default=0.0, ge=0)
    surrender_tau: int = Field(default=5, gt=0)
    surrender_rate: float = 0.005
    cohort: CohortBlock


class ExpenseBlock(_Block):
    delta_alpha: float = 0.0
    delta_beta: float = 0.0
    delta_gamma: float = 0.0


class SimulationBlock(_Block):
    n_sims: int = Field(default=100_000, ge=1)
    seed: int = Field(default=0, ge=0)
    confidence: float = Field(default=0.995, gt=0.5, lt=1.0)
    times: List[int] = Field(default_factory=lambda: [0])
    lapse_rate: float = Field(default=0.0, ge=0, lt=1)
    workers: int = Field(default=1, ge=1)
    block_size: int = Field(default=10_000, ge=1)


class DecomposeBlock(_Block):
    n_paths: int = Field(default=1_000, ge=1)
    times: List[int] = Field(default_factory=lambda: [0])
    asset_return: Optional[float] = None
    expenses: ExpenseBlock = Field(default_factory=ExpenseBlock)


class OutputBlock(_Block):
    directory: str = "out"
    formats: List[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv"])


class RunConfig(_Block):
    """Top-level run document."""

    tables: Dict[str, TableSource]
    second_order_table: str
    curve: CurveSource
    policies: List[PolicyBlock] = Field(min_length=1)
    vasicek: VasicekBlock = Field(default_factory=VasicekBlock)
    simulation: SimulationBlock = Field(default_factory=SimulationBlock)
    decompose: DecomposeBlock = Field(default_factory=DecomposeBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    @model_validator(mode="after")
    def _references(self) -> "RunConfig":
        if self.second_order_table not in self.tables:
            raise ValueError(f"second_order_table '{self.second_order_table}' is not defined in tables")
        for name, source in self.tables.items():
            if source.base is not None:
                base = self.tables.get(source.base)
                if base is None or base.path is None:
                    raise ValueError(f"tables.{name}.base must name a table read from a file")
        for idx, policy in enumerate(self.policies):
            if policy.first_order_table not in self.tables:
                raise ValueError(
                    f"policies.{idx}.first_order_table '{policy.first_order_table}' is not defined in tables"
                )
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise ValueError("policy names must be unique")
        return self


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_run_config(data: Mapping[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def apply_env_overrides(config: RunConfig, environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Apply ``DEMRISK_OUT_DIR`` and ``DEMRISK_WORKERS``."""
    environ = os.environ if environ is None else environ
    out_dir = environ.get(OUT_DIR_ENV)
    workers = environ.get(WORKERS_ENV)
    if out_dir:
        config = config.model_copy(update={"output": config.output.model_copy(update={"directory": out_dir})})
    if workers:
        try:
            count = int(workers)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}: expected an integer, got {workers!r}") from None
        if count < 1:
            raise ConfigError(f"{WORKERS_ENV}: must be >= 1, got {count}")
        config = config.model_copy(
            update={"simulation": config.simulation.model_copy(update={"workers": count})}
        )
    return config


def config_echo(config: RunConfig, seed: Optional[int] = None) -> Dict[str, Any]:
    """Config as echoed into JSON reports, with the seed actually used.

    Worker count and output directory are left out, so the echo does not
    depend on ``DEMRISK_WORKERS`` or ``DEMRISK_OUT_DIR``.
    """
    echo = config.model_dump(mode="json", exclude={"simulation": {"workers"}, "output": {"directory"}})
    echo["seed"] = config.simulation.seed if seed is None else seed
    return echo


def load_run_config(path: Union[str, Path], environ: Optional[Mapping[str, str]] = None) -> Tuple[RunConfig, Path]:
    """Read, validate and env-override a config; return it with its base directory."""
    load_dotenv()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config: file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    config = apply_env_overrides(parse_run_config(data), environ)
    base_dir = path.resolve().parent
    check_files(config, base_dir)
    return config, base_dir


def _resolve(base_dir: Path, raw: str) -> Path:
    candidate = Path(raw)
    return candidate if candidate.is_absolute() else base_dir / candidate


def check_files(config: RunConfig, base_dir: Path) -> None:
    for name, source in config.tables.items():
        if source.path is not None and not _resolve(base_dir, source.path).exists():
            raise ConfigError(f"tables.{name}.path: file not found: {source.path}")
    if config.curve.path is not None and not _resolve(base_dir, config.curve.path).exists():
        raise ConfigError(f"curve.path: file not found: {config.curve.path}")


@dataclass(frozen=True)
class PolicyRun:
    spec: PolicySpec
    cohort: Cohort


@dataclass(frozen=True)
class RunInputs:
    """Domain objects built from a validated config."""

    config: RunConfig
    tables: Dict[str, LifeTable]
    table2: LifeTable
    curve: YieldCurve
    policies: List[PolicyRun]

    @property
    def expenses(self) -> ExpenseAssumptions:
        return ExpenseAssumptions(**self.config.decompose.expenses.model_dump())


def _schedule(source: TableSource, base: LifeTable) -> ScalingSchedule:
    scaling = source.scaling
    if isinstance(scaling, ConstantScaling):
        return ScalingSchedule.constant(scaling.factor, base.min_age, base.max_age)
    return ScalingSchedule.linear(
        base.min_age,
        base.max_age,
        from_age=scaling.from_age,
        from_factor=scaling.from_factor,
        to_age=scaling.to_age,
        to_factor=scaling.to_factor,
    )


def _policy(block: PolicyBlock, tables: Dict[str, LifeTable]) -> Tuple[PolicySpec, Cohort]:
    cohort = Cohort(
        l0=block.cohort.l0,
        sum_mean=block.cohort.mean(),
        sum_cv=block.cohort.sum_cv,
        sums=block.cohort.sums,
    )
    spec = PolicySpec(
        name=block.name,
        kind=block.kind,
        issue_age=block.issue_age,
        duration=block.duration,
        premium_type=block.premium_type,
        technical_rate=block.technical_rate,
        first_order_table=tables[block.first_order_table],
        alpha=block.alpha,
        beta=block.beta,
        gamma=block.gamma,
        surrender_tau=block.surrender_tau,
        surrender_rate=block.surrender_rate,
    )
    return spec, cohort


def build_inputs(config: RunConfig, base_dir: Union[str, Path]) -> RunInputs:
    """Load tables and the curve and instantiate every policy block."""
    base_dir = Path(base_dir)
    check_files(config, base_dir)
    tables: Dict[str, LifeTable] = {}
    for name, source in config.tables.items():
        if source.path is not None:
            tables[name] = load_life_table(_resolve(base_dir, source.path), source.min_age, name=name)
    for name, source in config.tables.items():
        if source.base is not None:
            base = tables[source.base]
            tables[name] = scale_table(base, _schedule(source, base), name=name)

    if config.curve.path is not None:
        curve = load_curve(_resolve(base_dir, config.curve.path))
    else:
        curve = YieldCurve.flat(config.curve.flat_rate, config.curve.max_maturity)

    policies: List[PolicyRun] = []
    for idx, block in enumerate(config.policies):
        try:
            spec, cohort = _policy(block, tables)
        except PolicyError as exc:
            raise ConfigError(f"policies.{idx}: {exc}") from None
        if curve.max_maturity < spec.duration:
            raise ConfigError(
                f"curve: covers {curve.max_maturity} years, policy '{spec.name}' needs {spec.duration}"
            )
        policies.append(PolicyRun(spec=spec, cohort=cohort))
    logger.debug("Built %d policy blocks on table %s", len(policies), config.second_order_table)
    return RunInputs(
        config=config,
        tables=tables,
        table2=tables[config.second_order_table],
        curve=curve,
        policies=policies,
    )
