"""Coordinator side: worker pools and the order-preserving parallel map.

A pool is a fixed set of workers with dense ids 0..n-1, all speaking the
frame protocol over one of three transports:

    inprocess    worker threads in this process, frames over queue pairs
    multiprocess spawned child processes, frames over pipes
    socket       external processes connecting to a TCP listener

parallel_map cuts the item list into chunks per the chunking policy, deals
chunks to idle workers (lowest id first), and reassembles results in input
order. A chunk that fails is retried once on a different worker when one is
alive; a second failure aborts the map with the timing records gathered so
far attached to the error.
"""

from __future__ import annotations

import bisect
import logging
import multiprocessing
import queue
import socket
import threading
import time

from ..errors import ConfigError, ParallelMapError, ProtocolError
from . import wire
from .chunking import ChunkingPolicy, TaskRecord, plan_chunks
from .worker import worker_loop, worker_process_entry

logger = logging.getLogger(__name__)

TRANSPORTS = ("inprocess", "multiprocess", "socket")


class _WorkerConn:
    """One connected worker: channel, liveness flag, and its local runner
    (thread or process) when the pool owns it."""

    def __init__(self, worker_id, channel, runner=None):
        self.worker_id = worker_id
        self.channel = channel
        self.runner = runner
        self.alive = True
        self.reader = None


def _expect_hello(channel, timeout, n_workers, taken=None, expect_id=None) -> int:
    """Validate a worker's HELLO; raises ProtocolError on any mismatch."""
    ftype, body = channel.recv(timeout=timeout)
    if ftype != wire.HELLO:
        raise ProtocolError(f"expected HELLO, got frame type {ftype}")
    version = body.get("protocol_version")
    if version != wire.PROTOCOL_VERSION:
        raise ProtocolError(
            f"protocol version mismatch: worker speaks {version!r}, coordinator speaks {wire.PROTOCOL_VERSION}"
        )
    wid = body.get("worker_id")
    if not isinstance(wid, int) or isinstance(wid, bool) or not 0 <= wid < n_workers:
        raise ProtocolError(f"worker_id {wid!r} outside 0..{n_workers - 1}")
    if expect_id is not None and wid != expect_id:
        raise ProtocolError(f"expected worker_id {expect_id}, got {wid}")
    if taken is not None and wid in taken:
        raise ProtocolError(f"duplicate worker_id {wid}")
    return wid


def parse_endpoint(value) -> tuple[str, int]:
    """'host:port' or (host, port) -> (host, port)."""
    if isinstance(value, tuple) and len(value) == 2:
        host, port = value
        return str(host), int(port)
    if isinstance(value, str) and ":" in value:
        host, _, port = value.rpartition(":")
        try:
            return host, int(port)
        except ValueError:
            pass
    raise ConfigError(f"bad endpoint {value!r}, expected host:port")


class Pool:
    """A fixed set of handshaken workers plus per-worker reader threads."""

    def __init__(self, transport: str, conns: list[_WorkerConn], cores_per_worker: int = 1):
        self.transport = transport
        self.cores_per_worker = cores_per_worker
        self._conns = {wc.worker_id: wc for wc in conns}
        self._events: queue.Queue = queue.Queue()
        self._epoch = 0
        self._closed = False
        for wc in conns:
            wc.reader = threading.Thread(
                target=self._read_worker, args=(wc,), daemon=True, name=f"pool-reader-{wc.worker_id}"
            )
            wc.reader.start()

    @property
    def n_workers(self) -> int:
        return len(self._conns)

    def alive_workers(self) -> list[int]:
        return sorted(wid for wid, wc in self._conns.items() if wc.alive)

    def _read_worker(self, wc: _WorkerConn) -> None:
        while True:
            try:
                ftype, body = wc.channel.recv()
            except (wire.ChannelClosed, ProtocolError, OSError) as exc:
                self._events.put(("crash", wc.worker_id, str(exc)))
                return
            self._events.put(("frame", wc.worker_id, ftype, body))

    def parallel_map(self, items, task, policy: ChunkingPolicy, params=None, step=None):
        """Run a registered task over items; returns (results, records).

        Results come back in input order regardless of which worker ran
        which chunk. Records are per-chunk timings as reported by workers.
        """
        if self._closed:
            raise ParallelMapError(-1, "pool is closed", [])
        task_name = task if isinstance(task, str) else getattr(task, "task_name", None)
        if not task_name:
            raise ValueError("task must be a registered task function or its wire name")
        items = list(items)
        self._epoch += 1
        epoch = self._epoch
        chunks = plan_chunks(len(items), policy, self.n_workers)
        if not chunks:
            return [], []
        chunk_by_id = {c.chunk_id: c for c in chunks}
        pending = [c.chunk_id for c in chunks]  # kept sorted ascending
        in_flight: dict[int, int] = {}  # worker_id -> chunk_id
        results_by_chunk: dict[int, list] = {}
        records: list[TaskRecord] = []
        params = params or {}

        def send_chunk(wid: int, cid: int) -> bool:
            c = chunk_by_id[cid]
            body = {
                "epoch": epoch,
                "chunk_id": cid,
                "task": task_name,
                "items": items[c.start : c.stop],
                "params": params,
            }
            try:
                self._conns[wid].channel.send(wire.TASK, body)
            except wire.ChannelClosed as exc:
                self._conns[wid].alive = False
                self._events.put(("crash", wid, str(exc)))
                return False
            in_flight[wid] = cid
            return True

        def dispatch() -> None:
            while pending:
                alive = self.alive_workers()
                idle = [wid for wid in alive if wid not in in_flight]
                if not idle:
                    return
                sent_any = False
                for wid in idle:
                    pick = None
                    for cid in pending:
                        avoid = chunk_by_id[cid].avoid_worker
                        if avoid == wid and len(alive) > 1:
                            continue  # retry goes to a different worker when possible
                        pick = cid
                        break
                    if pick is None:
                        continue
                    pending.remove(pick)
                    if send_chunk(wid, pick):
                        sent_any = True
                    else:
                        bisect.insort(pending, pick)
                        break  # worker set changed; recompute
                if not sent_any:
                    return

        def fail_chunk(cid: int, wid: int, message: str) -> None:
            c = chunk_by_id[cid]
            c.retries += 1
            if c.retries > 1:
                raise ParallelMapError(cid, message, records)
            c.avoid_worker = wid
            bisect.insort(pending, cid)
            logger.warning("chunk %d failed on worker %d, retrying: %s", cid, wid, message.strip().splitlines()[-1])

        dispatch()
        while len(results_by_chunk) < len(chunks):
            if not self.alive_workers():
                first = pending[0] if pending else sorted(in_flight.values())[0]
                raise ParallelMapError(first, "no workers alive", records)
            if pending and not in_flight:
                dispatch()
                continue
            event = self._events.get()
            kind, wid = event[0], event[1]
            if kind == "crash":
                self._conns[wid].alive = False
                cid = in_flight.pop(wid, None)
                if cid is not None:
                    fail_chunk(cid, wid, f"worker {wid} crashed: {event[2]}")
                dispatch()
                continue
            ftype, body = event[2], event[3]
            if body.get("epoch") != epoch:
                continue  # stale frame from an abandoned map
            if ftype == wire.RESULT:
                cid = body.get("chunk_id")
                if in_flight.get(wid) != cid:
                    continue
                del in_flight[wid]
                rec = TaskRecord.from_dict(body["record"])
                rec.step = step
                records.append(rec)
                results_by_chunk[cid] = body["results"]
                dispatch()
            elif ftype == wire.ERROR:
                cid = in_flight.pop(wid, None)
                if body.get("record"):
                    rec = TaskRecord.from_dict(body["record"])
                    rec.step = step
                    records.append(rec)
                if cid is not None:
                    fail_chunk(cid, wid, body.get("error", "task failed"))
                dispatch()
            else:
                logger.warning("ignoring unexpected frame type %d from worker %d", ftype, wid)

        ordered: list = []
        for c in chunks:  # dense chunk ids in item order, so this is input order
            ordered.extend(results_by_chunk[c.chunk_id])
        return ordered, records

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for wc in self._conns.values():
            if wc.alive:
                try:
                    wc.channel.send(wire.SHUTDOWN, {})
                except wire.ChannelClosed:
                    pass
        for wc in self._conns.values():
            if wc.runner is not None:
                wc.runner.join(timeout=10)
        for wc in self._conns.values():
            wc.channel.close()
        for wc in self._conns.values():
            r = wc.runner
            if r is not None and hasattr(r, "terminate") and r.is_alive():
                r.terminate()

    def __enter__(self) -> "Pool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_pool(
    transport: str,
    workers: int,
    cores_per_worker: int = 1,
    listen=None,
    handshake_timeout: float = 30.0,
    task_modules: tuple[str, ...] = (),
) -> Pool:
    """Start (or wait for) `workers` workers and return a handshaken Pool.

    For the socket transport, `listen` names the endpoint to bind; workers
    are external processes (`gcontext worker --connect ...`) and this call
    blocks until all of them have said HELLO or the timeout expires. A
    connection with a bad HELLO (wrong version, out-of-range or duplicate
    worker_id) gets an ERROR frame and is dropped without burning a slot.
    """
    if transport not in TRANSPORTS:
        raise ConfigError(f"unknown transport '{transport}', expected one of {', '.join(TRANSPORTS)}")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    if cores_per_worker < 1:
        raise ConfigError("cores_per_worker must be >= 1")

    conns: list[_WorkerConn] = []
    if transport == "inprocess":
        for wid in range(workers):
            coord_ch, worker_ch = wire.QueueChannel.pair()
            t = threading.Thread(
                target=worker_loop, args=(worker_ch, wid, cores_per_worker), daemon=True, name=f"worker-{wid}"
            )
            t.start()
            _expect_hello(coord_ch, handshake_timeout, workers, expect_id=wid)
            conns.append(_WorkerConn(wid, coord_ch, runner=t))
    elif transport == "multiprocess":
        ctx = multiprocessing.get_context("spawn")
        for wid in range(workers):
            parent, child = ctx.Pipe(duplex=True)
            p = ctx.Process(
                target=worker_process_entry,
                args=(child, wid, cores_per_worker, tuple(task_modules)),
                daemon=True,
                name=f"worker-{wid}",
            )
            p.start()
            child.close()  # keep only the worker's end open in the child
            conns.append(_WorkerConn(wid, wire.PipeChannel(parent), runner=p))
        for wc in conns:
            _expect_hello(wc.channel, handshake_timeout, workers, expect_id=wc.worker_id)
    else:
        if listen is None:
            raise ConfigError("socket transport requires a listen endpoint")
        host, port = parse_endpoint(listen)
        srv = socket.create_server((host, port), backlog=max(workers, 8))
        taken: dict[int, wire.SocketChannel] = {}
        deadline = time.monotonic() + handshake_timeout
        try:
            while len(taken) < workers:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(
                        f"socket pool incomplete: {len(taken)}/{workers} workers after {handshake_timeout:.0f}s"
                    )
                srv.settimeout(remaining)
                try:
                    sock, _addr = srv.accept()
                except socket.timeout:
                    continue
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                ch = wire.SocketChannel(sock)
                try:
                    wid = _expect_hello(ch, min(remaining, 10.0), workers, taken=taken)
                except (ProtocolError, TimeoutError, wire.ChannelClosed) as exc:
                    logger.warning("rejecting worker connection: %s", exc)
                    try:
                        ch.send(wire.ERROR, {"error": str(exc)})
                    except wire.ChannelClosed:
                        pass
                    ch.close()
                    continue
                taken[wid] = ch
        finally:
            srv.close()
        conns = [_WorkerConn(wid, taken[wid]) for wid in sorted(taken)]
    return Pool(transport, conns, cores_per_worker)


def parallel_map(items, task, policy: ChunkingPolicy, pool: Pool, params=None, step=None):
    """Module-level convenience wrapper around Pool.parallel_map."""
    return pool.parallel_map(items, task, policy, params=params, step=step)
