"""Synthesize the spoofing or jamming preset, run full and baseline modes via
the CLI, score both and print the stage table.

    python3 scripts/demo_events.py spoofing --seed 0 --out /tmp/demo
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from aisgnss.cli import main as cli
from aisgnss.synth import artifact_scenario, jamming_scenario, spoofing_scenario

PRESETS = {"spoofing": spoofing_scenario, "jamming": jamming_scenario, "artifacts": artifact_scenario}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("preset", choices=sorted(PRESETS))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="demo_out")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    sc_path = out / "scenario.json"
    sc_path.write_text(json.dumps(PRESETS[a.preset](a.seed).to_dict(), indent=2))
    steps = [
        ["synth", "--scenario", str(sc_path), "--out", str(out / "data")],
        ["run", "--input", str(out / "data" / "records.ndjson"), "--out", str(out / "full")],
        ["run", "--input", str(out / "data" / "records.ndjson"), "--out", str(out / "baseline"), "--baseline"],
        ["eval", "--events", str(out / "full" / "events.geojson"), "--truth", str(out / "data" / "truth.ndjson"),
         "--baseline-events", str(out / "baseline" / "events.geojson"), "--out", str(out / "metrics.json")],
    ]
    for argv in steps:
        code = cli(argv)
        if code:
            raise SystemExit(code)
    print((out / "full" / "stage_table.csv").read_text())


if __name__ == "__main__":
    main()
