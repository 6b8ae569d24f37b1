"""Command line: ``aisgnss run | synth | eval``.

Exit codes: 0 success, 1 fatal configuration or I/O error, 2 completed with a
per-record error ratio above ``max_error_ratio``. The log level is read from
``AISGNSS_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, PipelineConfig
from .ingest import IngestError
from .pipeline import PipelineError, read_events_geojson, run_pipeline
from .synth import Scenario, evaluate, read_truth, synthesize, write_scenario

log = logging.getLogger("aisgnss")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aisgnss", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the detection pipeline")
    r.add_argument("--input", nargs="+", required=True, help="NDJSON or CSV files")
    r.add_argument("--config", help="pipeline config JSON (defaults when omitted)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--baseline", action="store_true", help="naive clustering comparator")
    r.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("synth", help="generate a synthetic scenario with ground truth")
    s.add_argument("--scenario", required=True, help="scenario JSON")
    s.add_argument("--out", required=True)
    s.add_argument("--disable-injections", action="store_true")

    e = sub.add_parser("eval", help="score detected events against ground truth")
    e.add_argument("--events", required=True, help="events.geojson from a run")
    e.add_argument("--truth", required=True, help="truth.ndjson from synth")
    e.add_argument("--out", required=True, help="metrics JSON")
    e.add_argument("--baseline-events", help="events.geojson from a baseline run")
    e.add_argument("--match-radius", type=float, default=10_000.0)
    e.add_argument("--match-window", type=float, default=1800.0)
    return p


def _cmd_run(a) -> int:
    cfg = PipelineConfig.load(a.config) if a.config else PipelineConfig()
    res = run_pipeline(a.input, cfg, "baseline" if a.baseline else "full", a.workers, a.out)
    counts = {}
    for ev in res.events:
        counts[ev.category.value] = counts.get(ev.category.value, 0) + 1
    print(json.dumps({"events": counts, "parse_errors": len(res.errors), "out": str(a.out)}))
    if res.error_ratio > cfg.max_error_ratio:
        log.warning("per-record error ratio %.4f exceeds %.4f", res.error_ratio, cfg.max_error_ratio)
        return 2
    return 0


def _cmd_synth(a) -> int:
    sc = Scenario.load(a.scenario)
    recs, truth = synthesize(sc, enabled=not a.disable_injections)
    paths = write_scenario(a.out, recs, truth, sc)
    print(json.dumps({"records": len(recs), "truth_events": len(truth.events),
                      "files": {k: str(v) for k, v in paths.items()}}))
    return 0


def _cmd_eval(a) -> int:
    events = read_events_geojson(a.events)
    truth = read_truth(a.truth)
    base = read_events_geojson(a.baseline_events) if a.baseline_events else None
    m = evaluate(events, truth, a.match_radius, a.match_window, base)
    text = json.dumps(m.to_dict(), indent=2) + "\n"
    out = Path(a.out)
    tmp = out.with_name(out.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, out)
    print(text, end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("AISGNSS_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    a = _parser().parse_args(argv)
    try:
        return {"run": _cmd_run, "synth": _cmd_synth, "eval": _cmd_eval}[a.command](a)
    except (ConfigError, PipelineError, IngestError, OSError, ValueError, KeyError) as e:
        print(f"aisgnss: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
