"""Life tables: loading, validation, scaling and survival queries.

Tables are annual death probabilities indexed by integer age, ending at a
terminal age whose probability is exactly 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class LifeTableError(ValueError):
    """Raised for malformed tables or out-of-range age queries."""


@dataclass(frozen=True)
class LifeTable:
    """Annual death probabilities ``qx`` for ages ``min_age .. max_age``.

    Parameters
    ----------
    name:
        Free-text label (e.g. ``"synthetic-2016"``).
    min_age:
        Age of the first entry.
    qx:
        Death probabilities; the last entry is the terminal age and must be 1.
    """

    name: str
    min_age: int
    qx: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.qx, dtype=float)
        if self.min_age < 0:
            raise LifeTableError(f"min_age must be >= 0, got {self.min_age}")
        if values.ndim != 1 or values.size == 0:
            raise LifeTableError("qx must be a non-empty one-dimensional sequence")
        bad = np.flatnonzero(~np.isfinite(values) | (values < 0.0) | (values > 1.0))
        if bad.size:
            age = self.min_age + int(bad[0])
            raise LifeTableError(
                f"probability out of range at age {age}: {values[bad[0]]!r}"
            )
        if values[-1] != 1.0:
            raise LifeTableError(
                f"terminal age {self.min_age + values.size - 1} must have q = 1, "
                f"got {values[-1]!r}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "qx", values)

    @property
    def max_age(self) -> int:
        """Terminal age."""
        return self.min_age + self.qx.size - 1

    def __len__(self) -> int:
        return int(self.qx.size)

    def _index(self, x: int) -> int:
        if x < self.min_age or x > self.max_age:
            raise LifeTableError(
                f"age {x} outside table '{self.name}' range [{self.min_age}, {self.max_age}]"
            )
        return x - self.min_age

    def slice_q(self, x: int, n: int) -> np.ndarray:
        """Return ``q_x, ..., q_{x+n-1}`` as a read-only view."""
        if n < 0:
            raise LifeTableError(f"number of years must be >= 0, got {n}")
        if n == 0:
            return self.qx[:0]
        start = self._index(x)
        self._index(x + n - 1)
        return self.qx[start : start + n]


def load_life_table(path: Path | str, min_age: int, name: Optional[str] = None) -> LifeTable:
    """Load a CSV table with rows ``age,qx``.

    Rows for ages below *min_age* are skipped; the file must contain
    *min_age* and continue without gaps up to a terminal age with ``q = 1``.
    An optional header row is accepted. Parsing uses ``.`` as decimal
    separator whatever the process locale is.
    """
    path = Path(path)
    if not path.exists():
        raise LifeTableError(f"life table file not found: {path}")

    try:
        frame = pd.read_csv(
            path,
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            comment="#",
        )
    except pd.errors.ParserError as exc:
        raise LifeTableError(f"malformed life table {path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise LifeTableError(f"life table {path} is empty") from exc

    if frame.shape[1] != 2:
        raise LifeTableError(
            f"malformed life table {path}: expected 2 columns (age,qx), found {frame.shape[1]}"
        )

    rows = frame.to_numpy()
    start = 0
    if rows.size and not _is_number(rows[0][0]):
        start = 1

    ages: list[int] = []
    probs: list[float] = []
    for idx in range(start, len(rows)):
        row_number = idx + 1
        raw_age, raw_q = (str(v).strip() for v in rows[idx])
        try:
            age = int(raw_age)
            q = float(raw_q)
        except ValueError as exc:
            raise LifeTableError(
                f"malformed row {row_number} in {path}: {raw_age!r},{raw_q!r}"
            ) from exc
        if not np.isfinite(q) or q < 0.0 or q > 1.0:
            raise LifeTableError(
                f"probability out of range at row {row_number} (age {age}): {q!r}"
            )
        if ages and age != ages[-1] + 1:
            if age <= ages[-1]:
                raise LifeTableError(
                    f"ages not strictly increasing at row {row_number}: {age} after {ages[-1]}"
                )
            raise LifeTableError(f"age gap at {ages[-1] + 1} (row {row_number})")
        ages.append(age)
        probs.append(q)

    if not ages:
        raise LifeTableError(f"life table {path} has no data rows")
    if min_age < ages[0] or min_age > ages[-1]:
        raise LifeTableError(
            f"life table {path} covers ages {ages[0]}-{ages[-1]}, min_age {min_age} not present"
        )

    offset = min_age - ages[0]
    table = LifeTable(name=name or path.stem, min_age=min_age, qx=np.asarray(probs[offset:]))
    logger.debug("Loaded life table %s: ages %d-%d", table.name, table.min_age, table.max_age)
    return table


def _is_number(value: object) -> bool:
    try:
        float(str(value).strip())
    except ValueError:
        return False
    return True


def qx(table: LifeTable, x: int) -> float:
    """Annual death probability at age *x*."""
    return float(table.qx[table._index(x)])


def npx(table: LifeTable, x: int, n: int) -> float:
    """Probability that a life aged *x* survives *n* years."""
    return float(np.prod(1.0 - table.slice_q(x, n)))


def deferred_qx(table: LifeTable, x: int, h: int) -> float:
    """Probability of surviving *h* years and dying in the following one."""
    if h < 0:
        raise LifeTableError(f"deferment must be >= 0, got {h}")
    return npx(table, x, h) * qx(table, x + h)


def survival_curve(table: LifeTable, x: int, n: int) -> np.ndarray:
    """Return ``[0p_x, 1p_x, ..., np_x]``."""
    out = np.ones(n + 1)
    if n:
        out[1:] = np.cumprod(1.0 - table.slice_q(x, n))
    return out


@dataclass(frozen=True)
class ScalingSchedule:
    """Age-dependent multipliers applied to a table's death probabilities."""

    multipliers: Mapping[int, float]

    def __post_init__(self) -> None:
        frozen: Dict[int, float] = {}
        for age, factor in self.multipliers.items():
            factor = float(factor)
            if not np.isfinite(factor) or factor <= 0.0:
                raise LifeTableError(f"multiplier for age {age} must be > 0, got {factor!r}")
            frozen[int(age)] = factor
        object.__setattr__(self, "multipliers", frozen)

    @classmethod
    def constant(cls, factor: float, min_age: int, max_age: int) -> "ScalingSchedule":
        return cls({age: factor for age in range(min_age, max_age + 1)})

    @classmethod
    def linear(
        cls,
        min_age: int,
        max_age: int,
        *,
        from_age: int = 40,
        from_factor: float = 0.90,
        to_age: int = 60,
        to_factor: float = 0.80,
    ) -> "ScalingSchedule":
        """Interpolate linearly between two anchor ages, flat outside them."""
        ages = np.arange(min_age, max_age + 1)
        factors = np.interp(ages, [from_age, to_age], [from_factor, to_factor])
        return cls({int(a): float(f) for a, f in zip(ages, factors)})

    def factor(self, age: int) -> float:
        try:
            return self.multipliers[age]
        except KeyError:
            raise LifeTableError(f"scaling schedule has no multiplier for age {age}") from None


def scale_table(table: LifeTable, schedule: ScalingSchedule, name: Optional[str] = None) -> LifeTable:
    """Multiply ``q_x`` by the schedule's factor; the terminal age keeps ``q = 1``."""
    scaled = table.qx.copy()
    for idx in range(scaled.size - 1):
        age = table.min_age + idx
        value = schedule.factor(age) * scaled[idx]
        if value > 1.0:
            raise LifeTableError(
                f"scaled probability {value!r} exceeds 1 at age {age}"
            )
        scaled[idx] = value
    return LifeTable(name=name or f"{table.name}-scaled", min_age=table.min_age, qx=scaled)
