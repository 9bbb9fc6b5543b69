"""Command-line front end: ``demrisk value|project|decompose|simulate --config run.json``.

Exit codes: 0 when every report is written and every check passes, 1 when a
closure check fails, 2 for configuration or input errors.
"""

from __future__ import annotations

import logging
from enum import Enum
from pathlib import Path
from typing import List, Optional

import typer

from demrisk.config import ConfigError, build_inputs, config_echo, load_run_config
from demrisk.orchestrator import ReportOrchestrator
from demrisk.reports import write_reports

app = typer.Typer(help="demrisk - demographic profit and SCR for non-participating life policies")

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


class OutputFormat(str, Enum):
    csv = "csv"
    json = "json"


def _setup_logging(level: str, verbose: bool, quiet: bool) -> None:
    log_level = level.upper()
    if verbose:
        log_level = "DEBUG"
    if quiet:
        log_level = "ERROR"
    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format="%(levelname)s | %(message)s",
    )


def _run(
    command: str,
    config_path: Path,
    seed: Optional[int],
    out: Optional[Path],
    formats: Optional[List[OutputFormat]],
) -> None:
    try:
        config, base_dir = load_run_config(config_path)
        inputs = build_inputs(config, base_dir)
    except (ConfigError, ValueError) as exc:
        typer.echo(f"error: {exc}", err=True)
        raise typer.Exit(code=EXIT_INPUT_ERROR)

    result = ReportOrchestrator().delegate(command, inputs, seed=seed)
    if result["status"] != "ok":
        typer.echo(f"error: {result['error']}", err=True)
        code = EXIT_CHECK_FAILED if result["status"] == "check_failed" else EXIT_INPUT_ERROR
        raise typer.Exit(code=code)

    out_dir = out if out is not None else base_dir / config.output.directory
    chosen = [f.value for f in formats] if formats else list(config.output.formats)
    paths = write_reports(command, result["tables"], out_dir, chosen, config_echo(config, seed))
    for path in paths:
        typer.echo(str(path))


_CONFIG = typer.Option(..., "--config", "-c", help="Run configuration (JSON).")
_SEED = typer.Option(None, "--seed", help="Overrides simulation.seed.")
_OUT = typer.Option(None, "--out", help="Output directory (overrides the config and DEMRISK_OUT_DIR).")
_FORMAT = typer.Option(None, "--format", help="csv and/or json; repeat to write both.")


@app.callback()
def main(
    log_level: str = typer.Option("INFO", "--log-level", help="Logging level."),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging."),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Errors only."),
) -> None:
    _setup_logging(log_level, verbose, quiet)


@app.command()
def value(
    config: Path = _CONFIG,
    seed: Optional[int] = _SEED,
    out: Optional[Path] = _OUT,
    format: Optional[List[OutputFormat]] = _FORMAT,
) -> None:
    """Per-t premium, reserve, best estimate, EPV and sum-at-risk rates."""
    _run("value", config, seed, out, format)


@app.command()
def project(
    config: Path = _CONFIG,
    seed: Optional[int] = _SEED,
    out: Optional[Path] = _OUT,
    format: Optional[List[OutputFormat]] = _FORMAT,
) -> None:
    """Expected MCV and local-GAAP demographic profit for every policy year."""
    _run("project", config, seed, out, format)


@app.command()
def decompose(
    config: Path = _CONFIG,
    seed: Optional[int] = _SEED,
    out: Optional[Path] = _OUT,
    format: Optional[List[OutputFormat]] = _FORMAT,
) -> None:
    """Per-path five-component profit and demographic split with closure checks."""
    _run("decompose", config, seed, out, format)


@app.command()
def simulate(
    config: Path = _CONFIG,
    seed: Optional[int] = _SEED,
    out: Optional[Path] = _OUT,
    format: Optional[List[OutputFormat]] = _FORMAT,
) -> None:
    """Monte Carlo distribution, moments and SCR at the configured times."""
    _run("simulate", config, seed, out, format)


if __name__ == "__main__":
    app()
