"""Always-on run profiling: per-step wall times and per-worker task intervals.

The coordinator wraps each pipeline stage in record_step; workers stamp their
own chunk timings and ship them back piggybacked on result frames, so
futures-based parallel stages are profiled without any external tooling.

All timestamps come from time.monotonic(). On this platform that clock is
system-wide, so worker processes on the same host stamp on the same timeline
as the coordinator and task intervals nest inside their step intervals.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

STEP_VOCABULARY = (
    "mapping",
    "assemblies",
    "parse_assemblies",
    "sequences",
    "find_families",
    "assign_families",
    "operons",
    "taxonomy",
    "annotate_functions",
    "output",
)

PROFILE_FORMAT_VERSION = 1


@dataclass
class StepRecord:
    step_name: str
    t_start: float
    t_end: float
    parallel: bool = False
    status: str = "ok"  # ok | failed

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def to_dict(self) -> dict:
        return {
            "step_name": self.step_name,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "duration": round(self.duration, 6),
            "parallel": self.parallel,
            "status": self.status,
        }


class Profiler:
    """Collects StepRecords and TaskRecords for one run."""

    def __init__(self):
        self.t_run_start = time.monotonic()
        self.t_run_end: float | None = None
        self.steps: list[StepRecord] = []
        self.task_records: list = []

    def record_step(self, name: str, thunk, parallel: bool = False):
        """Run thunk, timing it as step `name`. The record is closed even
        when the thunk raises; the error propagates."""
        if name not in STEP_VOCABULARY:
            raise ConfigError(f"unknown profile step '{name}'")
        if any(s.step_name == name for s in self.steps):
            raise ConfigError(f"profile step '{name}' recorded twice")
        t0 = time.monotonic()
        try:
            result = thunk()
        except BaseException:
            self.steps.append(StepRecord(name, t0, time.monotonic(), parallel, "failed"))
            raise
        self.steps.append(StepRecord(name, t0, time.monotonic(), parallel, "ok"))
        return result

    def add_task_records(self, records) -> None:
        self.task_records.extend(records)

    def finalize(self) -> None:
        self.t_run_end = time.monotonic()

    def emit(self, out_dir) -> tuple[Path, Path]:
        if self.t_run_end is None:
            self.finalize()
        return emit_profile(
            self.steps, self.task_records, out_dir, run_interval=(self.t_run_start, self.t_run_end)
        )


def emit_profile(step_records, task_records, out_dir, run_interval=None) -> tuple[Path, Path]:
    """Write profile.json and gantt.csv under out_dir; returns both paths.

    profile.json holds the run interval, per-step durations, and per-worker
    task intervals. gantt.csv has one row per task record.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    steps = list(step_records)
    tasks = list(task_records)
    if run_interval is not None:
        t0, t1 = run_interval
    else:
        points = [s.t_start for s in steps] + [r.t_start for r in tasks]
        ends = [s.t_end for s in steps] + [r.t_end for r in tasks]
        t0 = min(points) if points else 0.0
        t1 = max(ends) if ends else 0.0
    workers: dict[str, list] = {}
    for rec in sorted(tasks, key=lambda r: (r.worker_id, r.t_start, r.chunk_id)):
        workers.setdefault(str(rec.worker_id), []).append(
            {
                "chunk_id": rec.chunk_id,
                "step": rec.step,
                "t_start": rec.t_start,
                "t_end": rec.t_end,
                "duration": round(rec.t_end - rec.t_start, 6),
                "item_count": rec.item_count,
                "status": rec.status,
            }
        )
    profile = {
        "format_version": PROFILE_FORMAT_VERSION,
        "clock": "monotonic",
        "run": {"t_start": t0, "t_end": t1, "duration": round(t1 - t0, 6)},
        "steps": [s.to_dict() for s in steps],
        "workers": workers,
        "n_task_records": len(tasks),
    }
    profile_path = out_dir / "profile.json"
    with open(profile_path, "w", encoding="utf-8") as fh:
        json.dump(profile, fh, sort_keys=True, indent=2)
        fh.write("\n")
    gantt_path = out_dir / "gantt.csv"
    with open(gantt_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["worker_id", "chunk_id", "step", "t_start", "t_end"])
        for rec in sorted(tasks, key=lambda r: (r.worker_id, r.t_start, r.chunk_id)):
            writer.writerow([rec.worker_id, rec.chunk_id, rec.step or "", rec.t_start, rec.t_end])
    return profile_path, gantt_path


def render_report(profile: dict, width: int = 60) -> str:
    """Plain-text per-step table plus a per-worker Gantt strip."""
    lines = []
    run = profile.get("run", {})
    t0, t1 = run.get("t_start", 0.0), run.get("t_end", 0.0)
    span = max(t1 - t0, 1e-9)
    lines.append(f"run duration: {run.get('duration', 0.0):.3f}s")
    lines.append("")
    lines.append(f"{'step':<20} {'duration_s':>10} {'parallel':>8} {'status':>7}")
    for s in profile.get("steps", []):
        lines.append(
            f"{s['step_name']:<20} {s['duration']:>10.3f} {str(bool(s.get('parallel'))):>8} {s.get('status', 'ok'):>7}"
        )
    workers = profile.get("workers", {})
    if workers:
        lines.append("")
        lines.append("worker activity (one column per time slice):")
        for wid in sorted(workers, key=int):
            strip = [" "] * width
            for rec in workers[wid]:
                a = int((rec["t_start"] - t0) / span * (width - 1))
                b = int((rec["t_end"] - t0) / span * (width - 1))
                for i in range(max(a, 0), min(b, width - 1) + 1):
                    strip[i] = "#"
            busy = sum(rec["t_end"] - rec["t_start"] for rec in workers[wid])
            lines.append(f"w{int(wid):<3d} |{''.join(strip)}| busy {busy:.3f}s")
    return "\n".join(lines)
