"""Distributed map executor: frame protocol, chunking, pools, simulator."""

from .chunking import ChunkingPolicy, TaskChunk, TaskRecord, plan_chunks, split_static
from .pool import Pool, open_pool, parallel_map, parse_endpoint
from .sim import DISTRIBUTIONS, bench_scheduling, format_bench_table, make_durations, simulate_makespan
from .wire import ERROR, HELLO, PROTOCOL_VERSION, RESULT, SHUTDOWN, TASK
from .worker import TaskContext, import_task_modules, resolve_task, run_socket_worker, task, worker_loop

__all__ = [
    "ChunkingPolicy",
    "TaskChunk",
    "TaskRecord",
    "plan_chunks",
    "split_static",
    "Pool",
    "open_pool",
    "parallel_map",
    "parse_endpoint",
    "DISTRIBUTIONS",
    "bench_scheduling",
    "format_bench_table",
    "make_durations",
    "simulate_makespan",
    "HELLO",
    "TASK",
    "RESULT",
    "ERROR",
    "SHUTDOWN",
    "PROTOCOL_VERSION",
    "TaskContext",
    "task",
    "resolve_task",
    "import_task_modules",
    "worker_loop",
    "run_socket_worker",
]
