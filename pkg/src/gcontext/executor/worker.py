"""Worker side of the pool: task registry and the frame-processing loop.

Tasks are plain functions registered under a stable name:

    @task("gc.square")
    def square(items, ctx):
        return [i * i for i in items]

A task receives a sublist of the submitted items plus a TaskContext and must
return one result per item. Workers resolve tasks by name, so any process
that imports the registering module can serve them; extra modules to import
at startup are passed to the worker entry points.
"""

from __future__ import annotations

import importlib
import logging
import time
import traceback
from dataclasses import dataclass, field

from .wire import ERROR, HELLO, PROTOCOL_VERSION, RESULT, SHUTDOWN, TASK, ChannelClosed, PipeChannel

logger = logging.getLogger(__name__)

_REGISTRY: dict[str, callable] = {}


@dataclass
class TaskContext:
    worker_id: int
    cores: int = 1
    params: dict = field(default_factory=dict)


def task(name: str):
    """Register a task function under a stable wire name."""

    def wrap(fn):
        _REGISTRY[name] = fn
        fn.task_name = name
        return fn

    return wrap


def resolve_task(name: str):
    if name not in _REGISTRY:
        raise KeyError(f"unknown task '{name}'")
    return _REGISTRY[name]


def import_task_modules(modules) -> None:
    for mod in modules:
        importlib.import_module(mod)


def worker_loop(channel, worker_id: int, cores: int = 1) -> None:
    """Handshake, then serve TASK frames until SHUTDOWN or channel loss."""
    channel.send(HELLO, {"protocol_version": PROTOCOL_VERSION, "worker_id": worker_id})
    while True:
        try:
            ftype, body = channel.recv()
        except ChannelClosed:
            return
        if ftype == SHUTDOWN:
            return
        if ftype == ERROR:
            logger.error("worker %d rejected by coordinator: %s", worker_id, body.get("error"))
            return
        if ftype != TASK:
            logger.warning("worker %d ignoring unexpected frame type %d", worker_id, ftype)
            continue

        chunk_id = body["chunk_id"]
        epoch = body.get("epoch", 0)
        ctx = TaskContext(worker_id=worker_id, cores=cores, params=body.get("params") or {})
        t_start = time.monotonic()
        try:
            fn = resolve_task(body["task"])
            results = fn(body["items"], ctx)
            results = list(results)
            if len(results) != len(body["items"]):
                raise ValueError(
                    f"task '{body['task']}' returned {len(results)} results for {len(body['items'])} items"
                )
        except Exception:
            record = {
                "worker_id": worker_id,
                "chunk_id": chunk_id,
                "t_start": t_start,
                "t_end": time.monotonic(),
                "item_count": len(body["items"]),
                "status": "failed",
            }
            try:
                channel.send(
                    ERROR,
                    {"chunk_id": chunk_id, "epoch": epoch, "error": traceback.format_exc(), "record": record},
                )
            except ChannelClosed:
                return
            continue
        record = {
            "worker_id": worker_id,
            "chunk_id": chunk_id,
            "t_start": t_start,
            "t_end": time.monotonic(),
            "item_count": len(body["items"]),
            "status": "ok",
        }
        try:
            channel.send(RESULT, {"chunk_id": chunk_id, "epoch": epoch, "results": results, "record": record})
        except ChannelClosed:
            return


def worker_process_entry(conn, worker_id: int, cores: int, task_modules: tuple[str, ...]) -> None:
    """Entry point for spawned multiprocess workers."""
    import_task_modules(task_modules)
    worker_loop(PipeChannel(conn), worker_id, cores)


def run_socket_worker(host: str, port: int, worker_id: int, cores: int = 1, task_modules: tuple[str, ...] = ()) -> None:
    """Entry point for `gcontext worker --connect host:port`."""
    import socket as _socket

    from .wire import SocketChannel

    import_task_modules(task_modules)
    sock = _socket.create_connection((host, port))
    sock.setsockopt(_socket.IPPROTO_TCP, _socket.TCP_NODELAY, 1)
    worker_loop(SocketChannel(sock), worker_id, cores)
    try:
        sock.close()
    except OSError:
        pass
