"""Virtual-clock scheduling simulator.

Answers "what would the makespan be" for a list of task durations under a
chunking policy, without running anything. Static mode deals one contiguous
chunk per worker up front, so its makespan is the largest chunk sum. Dynamic
mode replays the pool's greedy behaviour: chunks are taken in order by
whichever worker frees up first (ties to the lower worker id).

Used by `gcontext bench` and by tests that compare scheduling policies.
"""

from __future__ import annotations

import heapq
import random

from ..errors import ConfigError
from .chunking import ChunkingPolicy, plan_chunks

DISTRIBUTIONS = ("uniform", "heavy", "lognormal")


def simulate_makespan(durations, n_workers: int, policy: ChunkingPolicy) -> float:
    """Simulated completion time of the last task, in the durations' units."""
    if n_workers < 1:
        raise ConfigError("n_workers must be >= 1")
    durations = list(durations)
    if any(d < 0 for d in durations):
        raise ConfigError("task durations must be >= 0")
    chunks = plan_chunks(len(durations), policy, n_workers)
    if not chunks:
        return 0.0
    chunk_times = [sum(durations[c.start : c.stop]) for c in chunks]
    if policy.mode == "static":
        # one chunk per worker, dealt once: workers run in parallel
        return max(chunk_times)
    free = [(0.0, wid) for wid in range(n_workers)]
    heapq.heapify(free)
    makespan = 0.0
    for t in chunk_times:
        avail, wid = heapq.heappop(free)
        done = avail + t
        makespan = max(makespan, done)
        heapq.heappush(free, (done, wid))
    return makespan


def make_durations(distribution: str, n_tasks: int, seed: int = 0) -> list[float]:
    """Deterministic task-time samples for benchmarking.

    uniform    every task takes 1 unit
    heavy      10% of tasks carry 80% of the total time, positions shuffled
    lognormal  right-skewed continuous times
    """
    if n_tasks < 0:
        raise ConfigError("n_tasks must be >= 0")
    rng = random.Random(seed)
    if distribution == "uniform":
        return [1.0] * n_tasks
    if distribution == "heavy":
        n_heavy = max(1, n_tasks // 10)
        n_light = n_tasks - n_heavy
        # light tasks take 1 unit; heavy tasks split 80% of the total
        light_total = float(n_light)
        heavy_total = 4.0 * light_total if n_light else 1.0
        heavy_each = heavy_total / n_heavy
        durations = [heavy_each] * n_heavy + [1.0] * n_light
        rng.shuffle(durations)
        return durations
    if distribution == "lognormal":
        return [rng.lognormvariate(0.0, 1.5) for _ in range(n_tasks)]
    raise ConfigError(f"unknown distribution '{distribution}', expected one of {', '.join(DISTRIBUTIONS)}")


def bench_scheduling(durations_by_name: dict, n_workers: int, policies) -> list[dict]:
    """Makespan table: one row per (distribution, policy) pair.

    durations_by_name maps a label to its task-duration list. Rows carry the
    simulated makespan, the serial time, and the implied speedup.
    """
    rows = []
    for name in sorted(durations_by_name):
        durations = list(durations_by_name[name])
        serial = float(sum(durations))
        for policy in policies:
            makespan = simulate_makespan(durations, n_workers, policy)
            rows.append(
                {
                    "distribution": name,
                    "policy": policy.label(),
                    "n_tasks": len(durations),
                    "n_workers": n_workers,
                    "serial_time": round(serial, 6),
                    "makespan": round(makespan, 6),
                    "speedup": round(serial / makespan, 6) if makespan else 0.0,
                }
            )
    return rows


def format_bench_table(rows) -> str:
    """Fixed-width text table for `gcontext bench` output."""
    headers = ["distribution", "policy", "n_tasks", "n_workers", "serial_time", "makespan", "speedup"]
    table = [[str(r[h]) for h in headers] for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in table)) if table else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for row in table:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)
