"""Report tables and their CSV/JSON writers.

CSV: one file per table, header row always present, money at 2 decimals.
JSON: one document per run with the config echoed for provenance.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import pandas as pd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReportTable:
    """A named frame plus the columns (or index rows) holding money amounts."""

    name: str
    frame: pd.DataFrame
    money_columns: Sequence[str] = field(default_factory=tuple)
    money_rows: Sequence[str] = field(default_factory=tuple)


def _money(value: Any) -> Any:
    if isinstance(value, float) and math.isfinite(value):
        return f"{value:.2f}"
    return value


def csv_frame(table: ReportTable) -> pd.DataFrame:
    frame = table.frame.copy()
    for column in table.money_columns:
        frame[column] = frame[column].map(_money)
    if table.money_rows:
        frame = frame.astype(object)
        for row in table.money_rows:
            frame.loc[row] = [_money(float(v)) for v in frame.loc[row]]
    return frame


def write_csv(table: ReportTable, out_dir: Path) -> Path:
    path = out_dir / f"{table.name}.csv"
    frame = csv_frame(table)
    keep_index = frame.index.name is not None
    frame.to_csv(path, index=keep_index, lineterminator="\n")
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "item"):
        return _jsonable(value.item())
    return value


def table_records(table: ReportTable) -> List[Dict[str, Any]]:
    frame = table.frame.reset_index() if table.frame.index.name is not None else table.frame
    return [{str(k): _jsonable(v) for k, v in row.items()} for row in frame.to_dict(orient="records")]


def run_document(
    command: str, tables: Iterable[ReportTable], config_echo: Mapping[str, Any], status: str = "ok"
) -> Dict[str, Any]:
    return {
        "command": command,
        "status": status,
        "config": dict(config_echo),
        "tables": {t.name: table_records(t) for t in tables},
    }


def dumps(document: Mapping[str, Any]) -> str:
    return json.dumps(document, sort_keys=True, indent=2) + "\n"


def write_reports(
    command: str,
    tables: Sequence[ReportTable],
    out_dir: Path,
    formats: Sequence[str],
    config_echo: Mapping[str, Any],
) -> List[Path]:
    """Write every table in each requested format; return the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    if "csv" in formats:
        written.extend(write_csv(t, out_dir) for t in tables)
    if "json" in formats:
        path = out_dir / f"{command}.json"
        path.write_text(dumps(run_document(command, tables, config_echo)), encoding="utf-8")
        written.append(path)
    logger.info("Wrote %d report file(s) to %s", len(written), out_dir)
    return written
