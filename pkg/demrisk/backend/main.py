"""FastAPI backend for demrisk.

Endpoints
---------
GET  /
    Service banner with the available commands.
POST /value, /project, /decompose, /simulate
    Run a report on the posted run document; the response is the JSON
    document the CLI writes with ``--format json``.

Example
-------
.. code-block:: bash

    curl -X POST http://localhost:8000/project \\
      -H "Content-Type: application/json" \\
      -H "X-API-Key: $DEMRISK_API_KEY" \\
      -d @configs/table1.json

Relative file paths in the document resolve against the server's working
directory.
"""

import asyncio
import logging
import os
import uuid
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from fastapi import Body, FastAPI, Header, HTTPException

load_dotenv()

from demrisk import __version__
from demrisk.config import ConfigError, apply_env_overrides, build_inputs, config_echo, parse_run_config
from demrisk.orchestrator import ReportOrchestrator
from demrisk.reports import run_document

logger = logging.getLogger(__name__)

orchestrator = ReportOrchestrator()
app = FastAPI(title="demrisk API", version=__version__)

API_KEY = os.getenv("DEMRISK_API_KEY")
ALLOW_INSECURE_NOAUTH = os.getenv("DEMRISK_ALLOW_INSECURE_NOAUTH") == "1"


def _require_api_key(x_api_key: str | None) -> None:
    if ALLOW_INSECURE_NOAUTH:
        return
    if not API_KEY:
        raise HTTPException(
            status_code=500,
            detail="Server not configured. Set DEMRISK_API_KEY or DEMRISK_ALLOW_INSECURE_NOAUTH=1.",
        )
    if x_api_key != API_KEY:
        raise HTTPException(status_code=401, detail="Unauthorized")


@app.on_event("startup")
async def _log_insecure_noauth() -> None:
    if ALLOW_INSECURE_NOAUTH:
        logger.warning("DEMRISK_ALLOW_INSECURE_NOAUTH=1 set; API key checks disabled")


@app.get("/")
async def root() -> Dict[str, Any]:
    return {"message": "demrisk API", "commands": sorted(orchestrator.commands), "docs": "/docs"}


def _execute(command: str, document: Dict[str, Any]) -> Dict[str, Any]:
    payload = dict(document)
    seed: Optional[int] = payload.pop("seed", None)
    try:
        config = apply_env_overrides(parse_run_config(payload))
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    try:
        inputs = build_inputs(config, Path.cwd())
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None

    result = orchestrator.delegate(command, inputs, seed=seed)
    if result["status"] == "error":
        raise HTTPException(status_code=400, detail=result["error"])
    if result["status"] != "ok":
        error_id = uuid.uuid4().hex[:10]
        logger.error("%s failed checks (error_id=%s): %s", command, error_id, result["error"])
        raise HTTPException(status_code=500, detail={"error": result["error"], "error_id": error_id})

    return run_document(command, result["tables"], config_echo(config, seed))


async def _handle(command: str, document: Dict[str, Any], x_api_key: str | None) -> Dict[str, Any]:
    _require_api_key(x_api_key)
    try:
        return await asyncio.to_thread(_execute, command, document)
    except HTTPException:
        raise
    except Exception as exc:
        error_id = uuid.uuid4().hex[:10]
        logger.exception("%s failed (error_id=%s)", command, error_id)
        raise HTTPException(status_code=500, detail={"error": str(exc), "error_id": error_id}) from exc


@app.post("/value")
async def value(document: Dict[str, Any] = Body(...), x_api_key: str | None = Header(default=None)) -> Dict:
    return await _handle("value", document, x_api_key)


@app.post("/project")
async def project(document: Dict[str, Any] = Body(...), x_api_key: str | None = Header(default=None)) -> Dict:
    return await _handle("project", document, x_api_key)


@app.post("/decompose")
async def decompose(document: Dict[str, Any] = Body(...), x_api_key: str | None = Header(default=None)) -> Dict:
    return await _handle("decompose", document, x_api_key)


@app.post("/simulate")
async def simulate(document: Dict[str, Any] = Body(...), x_api_key: str | None = Header(default=None)) -> Dict:
    return await _handle("simulate", document, x_api_key)


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host="0.0.0.0", port=8000)
