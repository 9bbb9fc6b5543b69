#!/usr/bin/env python3
"""Run every report command on a config; flag simulated means more than 3 SE from the analytic ones."""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from dotenv import load_dotenv
load_dotenv()

from demrisk.config import build_inputs, config_echo, load_run_config
from demrisk.orchestrator import ReportOrchestrator
from demrisk.reports import write_reports

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main(config_name="case_study.json"):
    config, base_dir = load_run_config(os.path.join(ROOT, "configs", config_name))
    inputs = build_inputs(config, base_dir)
    o = ReportOrchestrator()
    out_dir = base_dir / config.output.directory
    failures = []

    for step, command in enumerate(("value", "project", "decompose", "simulate"), start=1):
        print("%d. %s ..." % (step, command), end=" ", flush=True)
        r = o.delegate(command, inputs)
        if r.get("status") != "ok":
            print("FAIL", r.get("error"))
            failures.append(command)
            continue
        paths = write_reports(command, r["tables"], out_dir, config.output.formats, config_echo(config))
        print("OK (%d files)" % len(paths))

        if command == "simulate":
            for table in r["tables"]:
                if table.name.startswith("simulate_diagnostics_"):
                    gaps = table.frame["gap_in_se_mcv"].abs()
                    if (gaps > 3).any():
                        print("   WARN %s: simulated mean more than 3 SE from the analytic mean" % table.name)

    if failures:
        print("\nFailed:", ", ".join(failures))
        sys.exit(1)
    print("\nAll reports written to", out_dir)


if __name__ == "__main__":
    main(*sys.argv[1:2])
