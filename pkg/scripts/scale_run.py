"""End-to-end scale run: synthesize N messages, run the CLI at 1 and W workers
in child processes, compare output bytes and report wall time and peak RSS.

    python3 scripts/scale_run.py --records 10000000 --workers 8 --work /tmp/scale
"""

from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
import threading
import time
from pathlib import Path

from aisgnss.synth import DAY_S, Scenario, generate_baseline, write_scenario

OUTPUTS = ("events.geojson", "event_members.geojson", "stage_table.csv", "stage_table.json")
# VmHWM belongs to the exec'd address space; ru_maxrss would carry over the
# forking parent's peak (large after input generation).
_CHILD = """
import sys, time
from aisgnss.cli import main
t0 = time.perf_counter()
code = main(sys.argv[1:])
hwm = [ln.split()[1] for ln in open("/proc/self/status") if ln.startswith("VmHWM")][0]
print("__STATS__", code, time.perf_counter() - t0, hwm, file=sys.stderr)
sys.exit(code)
"""


def make_input(n_records: int, work: Path, seed: int = 0) -> Path:
    path = work / "input" / "records.ndjson"
    if path.exists():
        return path
    duration = DAY_S
    n_vessels = math.ceil(n_records / (duration / 10.0 + 1))
    recs, truth = generate_baseline(Scenario(seed=seed, duration=duration, n_vessels=n_vessels))
    write_scenario(path.parent, recs, truth)
    return path


def _descendants(root: int) -> list[int]:
    parent = {}
    for d in Path("/proc").iterdir():
        if d.name.isdigit():
            try:
                parent[int(d.name)] = int((d / "stat").read_text().rsplit(")", 1)[1].split()[1])
            except (OSError, IndexError, ValueError):
                pass
    tree, frontier = [root], [root]
    while frontier:
        frontier = [p for p, pp in parent.items() if pp in frontier]
        tree.extend(frontier)
    return tree


def _pss_kb(pid: int) -> int:
    try:
        for ln in Path(f"/proc/{pid}/smaps_rollup").read_text().splitlines():
            if ln.startswith("Pss:"):
                return int(ln.split()[1])
    except OSError:
        pass
    return 0


class TreeMemorySampler(threading.Thread):
    """Polls the summed PSS of a process and its descendants.

    PSS splits copy-on-write pages shared with forked pool workers, so the sum
    is the tree's physical footprint rather than a multiple count of it.
    """

    def __init__(self, pid: int, interval: float = 0.5):
        super().__init__(daemon=True)
        self.pid, self.interval = pid, interval
        self.peak_kb = 0
        self.done = threading.Event()

    def run(self):
        while not self.done.is_set():
            self.peak_kb = max(self.peak_kb, sum(_pss_kb(p) for p in _descendants(self.pid)))
            self.done.wait(self.interval)


def run_cli(inp: Path, out: Path, workers: int) -> dict:
    """One pipeline run in a fresh interpreter.

    ``peak_mb`` is the larger of the main process's exact peak RSS (VmHWM) and the
    sampled peak PSS of the whole process tree (main plus pool workers).
    """
    t0 = time.perf_counter()
    p = subprocess.Popen([sys.executable, "-c", _CHILD, "run", "--input", str(inp), "--out", str(out),
                          "--workers", str(workers)], stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    sampler = TreeMemorySampler(p.pid)
    sampler.start()
    _, err = p.communicate()
    wall = time.perf_counter() - t0
    sampler.done.set()
    sampler.join()
    if p.returncode != 0:
        raise RuntimeError(f"run failed ({p.returncode}): {err[-2000:]}")
    stats = [ln for ln in err.splitlines() if ln.startswith("__STATS__")][-1].split()
    main_mb = int(stats[3]) / 1024
    tree_mb = sampler.peak_kb / 1024
    manifest = json.loads((out / "manifest.json").read_text())
    return {"workers": workers, "wall_s": round(wall, 1), "main_peak_rss_mb": round(main_mb, 1),
            "tree_peak_pss_mb": round(tree_mb, 1), "peak_mb": round(max(main_mb, tree_mb), 1),
            "stage_seconds": manifest["stage_seconds"]}


def scale_run(n_records: int, workers: int, work: Path) -> dict:
    work.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    inp = make_input(n_records, work)
    gen_s = time.perf_counter() - t0
    n_lines = sum(1 for _ in open(inp, "rb"))
    runs = [run_cli(inp, work / f"out_w{w}", w) for w in (1, workers)]
    identical = all((work / "out_w1" / f).read_bytes() == (work / f"out_w{workers}" / f).read_bytes()
                    for f in OUTPUTS)
    return {"records": n_lines, "generate_s": round(gen_s, 1), "runs": runs, "identical": identical}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--records", type=int, default=10_000_000)
    ap.add_argument("--workers", type=int, default=8)
    ap.add_argument("--work", default="/tmp/aisgnss_scale")
    a = ap.parse_args()
    print(json.dumps(scale_run(a.records, a.workers, Path(a.work)), indent=2))


if __name__ == "__main__":
    main()
