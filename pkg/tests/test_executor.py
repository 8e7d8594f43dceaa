"""Tests for the distributed map executor: wire frames, chunk planning,
pools over all three transports, failure handling, and the scheduling
simulator."""

import multiprocessing
import random
import socket
import struct
import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcontext.errors import ConfigError, ParallelMapError, ProtocolError
from gcontext.executor import (
    ERROR,
    HELLO,
    PROTOCOL_VERSION,
    RESULT,
    SHUTDOWN,
    TASK,
    ChunkingPolicy,
    bench_scheduling,
    format_bench_table,
    make_durations,
    open_pool,
    parse_endpoint,
    plan_chunks,
    resolve_task,
    run_socket_worker,
    simulate_makespan,
    split_static,
    task,
    worker_loop,
)
from gcontext.executor import wire
from tests.task_defs import square

STATIC = ChunkingPolicy("static")
DYN1 = ChunkingPolicy("dynamic", 1)
DYN3 = ChunkingPolicy("dynamic", 3)


# --- wire frames -----------------------------------------------------------


def test_frame_constants():
    assert (HELLO, TASK, RESULT, ERROR, SHUTDOWN) == (0, 1, 2, 3, 4)
    assert PROTOCOL_VERSION == 1


def test_canonical_json_bytes():
    got = wire.canonical_json({"b": 1, "a": [1, 2], "u": "é"})
    assert got == '{"a":[1,2],"b":1,"u":"é"}'.encode("utf-8")


@pytest.mark.parametrize("ftype", [HELLO, TASK, RESULT, ERROR, SHUTDOWN])
def test_frame_roundtrip(ftype):
    body = {"n": 3, "items": [1, "x"], "nested": {"k": None}}
    frame = wire.encode_frame(ftype, body)
    (length,) = struct.unpack("!I", frame[:4])
    assert length == len(frame) - 4
    got_type, got_body = wire.decode_payload(frame[4:])
    assert (got_type, got_body) == (ftype, body)


def test_decode_payload_rejects_empty_and_garbage():
    with pytest.raises(ProtocolError, match="empty frame"):
        wire.decode_payload(b"")
    with pytest.raises(ProtocolError, match="undecodable"):
        wire.decode_payload(bytes([TASK]) + b"{not json")


def test_queue_channel_roundtrip_and_close():
    a, b = wire.QueueChannel.pair()
    a.send(TASK, {"items": [1, 2]})
    assert b.recv(timeout=1) == (TASK, {"items": [1, 2]})
    b.send(RESULT, {"ok": True})
    assert a.recv(timeout=1) == (RESULT, {"ok": True})
    a.close()
    with pytest.raises(wire.ChannelClosed):
        b.recv(timeout=1)


def test_pipe_channel_roundtrip():
    parent, child = multiprocessing.Pipe(duplex=True)
    a, b = wire.PipeChannel(parent), wire.PipeChannel(child)
    a.send(HELLO, {"protocol_version": 1, "worker_id": 0})
    assert b.recv(timeout=1) == (HELLO, {"protocol_version": 1, "worker_id": 0})
    a.close()
    b.close()


def test_socket_channel_roundtrip_and_bad_length():
    s1, s2 = socket.socketpair()
    a, b = wire.SocketChannel(s1), wire.SocketChannel(s2)
    a.send(TASK, {"x": 1})
    assert b.recv(timeout=1) == (TASK, {"x": 1})
    s1.sendall(struct.pack("!I", 0))  # zero-length frame is invalid
    with pytest.raises(ProtocolError, match="bad frame length"):
        b.recv(timeout=1)
    a.close()
    b.close()


def test_socket_channel_recv_timeout():
    s1, s2 = socket.socketpair()
    try:
        with pytest.raises(TimeoutError):
            wire.SocketChannel(s2).recv(timeout=0.05)
    finally:
        s1.close()
        s2.close()


# --- chunk planning --------------------------------------------------------


def test_split_static_examples():
    assert split_static(10, 4) == [3, 3, 2, 2]
    assert split_static(3, 8) == [1, 1, 1]
    assert split_static(0, 4) == []
    assert split_static(7, 1) == [7]


@settings(max_examples=200, deadline=None)
@given(n_items=st.integers(min_value=0, max_value=500),
       n_workers=st.integers(min_value=1, max_value=32))
def test_split_static_properties(n_items, n_workers):
    sizes = split_static(n_items, n_workers)
    assert sum(sizes) == n_items
    assert len(sizes) == min(n_workers, n_items)
    if sizes:
        assert max(sizes) - min(sizes) <= 1
        assert sizes == sorted(sizes, reverse=True)


def test_split_static_validation():
    with pytest.raises(ConfigError):
        split_static(5, 0)
    with pytest.raises(ConfigError):
        split_static(-1, 2)


def test_plan_chunks_dynamic_fixed_size():
    chunks = plan_chunks(10, DYN3, n_workers=4)
    assert [(c.chunk_id, c.start, c.stop) for c in chunks] == [
        (0, 0, 3), (1, 3, 6), (2, 6, 9), (3, 9, 10)]


def test_plan_chunks_partition_property():
    for n, policy, workers in [(10, STATIC, 4), (10, DYN3, 2), (1, DYN3, 8), (0, DYN1, 4)]:
        chunks = plan_chunks(n, policy, workers)
        assert [c.chunk_id for c in chunks] == list(range(len(chunks)))
        cursor = 0
        for c in chunks:
            assert c.start == cursor
            cursor = c.stop
        assert cursor == n


def test_chunking_policy_validation_and_labels():
    assert STATIC.label() == "static"
    assert DYN3.label() == "dynamic(3)"
    with pytest.raises(ConfigError):
        ChunkingPolicy("sideways")
    with pytest.raises(ConfigError):
        ChunkingPolicy("dynamic", 0)


# --- pools: in-process transport -------------------------------------------


@pytest.mark.parametrize("policy", [STATIC, DYN1, DYN3], ids=lambda p: p.label())
def test_parallel_map_matches_serial_inprocess(policy):
    items = list(range(1, 9))
    with open_pool("inprocess", 3) as pool:
        results, records = pool.parallel_map(items, "t.square", policy)
    assert results == [x * x for x in items]
    assert sum(r.item_count for r in records) == len(items)
    assert all(r.status == "ok" for r in records)


def test_parallel_map_every_worker_participates():
    with open_pool("inprocess", 4) as pool:
        results, records = pool.parallel_map(list(range(40)), "t.square", DYN1)
    assert results == [x * x for x in range(40)]
    assert {r.worker_id for r in records} == {0, 1, 2, 3}
    assert sorted(r.chunk_id for r in records) == list(range(40))


def test_parallel_map_records_agree_with_results():
    # t.whoami returns the executing worker id, so the result of chunk i
    # must equal the worker_id stamped on chunk i's record.
    with open_pool("inprocess", 4) as pool:
        results, records = pool.parallel_map(list(range(24)), "t.whoami", DYN1)
    for rec in records:
        assert results[rec.chunk_id] == rec.worker_id


def test_parallel_map_per_worker_intervals_disjoint():
    with open_pool("inprocess", 3) as pool:
        _, records = pool.parallel_map([2] * 30, "t.busy_ms", DYN1)
    by_worker = {}
    for rec in records:
        by_worker.setdefault(rec.worker_id, []).append(rec)
    for recs in by_worker.values():
        recs.sort(key=lambda r: r.t_start)
        for a, b in zip(recs, recs[1:]):
            assert a.t_end <= b.t_start


def test_parallel_map_params_reach_tasks():
    with open_pool("inprocess", 2) as pool:
        results, _ = pool.parallel_map([10, 20], "t.add_delta", STATIC,
                                       params={"delta": 5})
    assert results == [15, 25]


def test_parallel_map_accepts_registered_callable():
    with open_pool("inprocess", 2) as pool:
        results, _ = pool.parallel_map([3], square, STATIC)
        assert results == [9]
        with pytest.raises(ValueError, match="registered task"):
            pool.parallel_map([3], lambda items, ctx: items, STATIC)


def test_parallel_map_empty_items():
    with open_pool("inprocess", 2) as pool:
        assert pool.parallel_map([], "t.square", DYN1) == ([], [])


def test_parallel_map_step_lands_on_records():
    with open_pool("inprocess", 2) as pool:
        _, records = pool.parallel_map([1, 2], "t.square", STATIC, step="sequences")
    assert {r.step for r in records} == {"sequences"}


def test_failing_chunk_retried_on_other_worker_then_raises():
    with open_pool("inprocess", 2) as pool:
        with pytest.raises(ParallelMapError, match="chunk 0"):
            pool.parallel_map([-1], "t.boom", DYN1)
        # both attempts left failed records, on different workers
        # (the retry must avoid the worker that just failed)
    # records travel on the exception
    with open_pool("inprocess", 2) as pool:
        try:
            pool.parallel_map([-1], "t.boom", DYN1)
        except ParallelMapError as exc:
            failed = [r for r in exc.task_records if r.status == "failed"]
            assert len(failed) == 2
            assert len({r.worker_id for r in failed}) == 2
            assert "negative item rejected" in str(exc)


def test_failed_map_keeps_completed_chunk_records():
    with open_pool("inprocess", 2) as pool:
        try:
            pool.parallel_map([1, 2, 3, 4, 5, -9], "t.boom", DYN1)
            raise AssertionError("map should have failed")
        except ParallelMapError as exc:
            assert any(r.status == "ok" for r in exc.task_records)
            assert sum(r.status == "failed" for r in exc.task_records) == 2


def test_single_worker_retries_on_itself():
    with open_pool("inprocess", 1) as pool:
        try:
            pool.parallel_map([-1], "t.boom", DYN1)
            raise AssertionError("map should have failed")
        except ParallelMapError as exc:
            failed = [r for r in exc.task_records if r.status == "failed"]
            assert [r.worker_id for r in failed] == [0, 0]


def test_pool_reusable_after_failed_map():
    with open_pool("inprocess", 2) as pool:
        with pytest.raises(ParallelMapError):
            pool.parallel_map([1, -1, 3], "t.boom", DYN1)
        results, _ = pool.parallel_map([5, 6], "t.square", STATIC)
        assert results == [25, 36]


def test_unknown_task_name_aborts_map():
    with open_pool("inprocess", 2) as pool:
        with pytest.raises(ParallelMapError, match="unknown task"):
            pool.parallel_map([1], "t.nonexistent", STATIC)


def test_closed_pool_rejects_map():
    pool = open_pool("inprocess", 1)
    pool.close()
    with pytest.raises(ParallelMapError, match="pool is closed"):
        pool.parallel_map([1], "t.square", STATIC)
    pool.close()  # idempotent


def test_open_pool_validation():
    with pytest.raises(ConfigError, match="unknown transport"):
        open_pool("carrier-pigeon", 1)
    with pytest.raises(ConfigError, match="workers"):
        open_pool("inprocess", 0)
    with pytest.raises(ConfigError, match="cores_per_worker"):
        open_pool("inprocess", 1, cores_per_worker=0)
    with pytest.raises(ConfigError, match="listen endpoint"):
        open_pool("socket", 1)


def test_parse_endpoint_forms():
    assert parse_endpoint("localhost:7070") == ("localhost", 7070)
    assert parse_endpoint(("10.0.0.1", 99)) == ("10.0.0.1", 99)
    with pytest.raises(ConfigError):
        parse_endpoint("no-port-here")
    with pytest.raises(ConfigError):
        parse_endpoint("host:notaport")


# --- pools: multiprocess transport ------------------------------------------


TASK_MODULES = ("tests.task_defs",)


@pytest.mark.parametrize("policy", [STATIC, DYN3], ids=lambda p: p.label())
def test_multiprocess_matches_serial(policy):
    items = list(range(1, 11))
    with open_pool("multiprocess", 2, task_modules=TASK_MODULES) as pool:
        results, records = pool.parallel_map(items, "t.square", policy)
    assert results == [x * x for x in items]
    assert sum(r.item_count for r in records) == len(items)


def test_multiprocess_worker_crash_retried_elsewhere():
    # Worker 0 exits the process mid-chunk; the chunk must be replayed on
    # worker 1 and the pool must carry on with the survivors.
    items = [13, 7]
    with open_pool("multiprocess", 2, task_modules=TASK_MODULES) as pool:
        results, records = pool.parallel_map(items, "t.die_on_13", STATIC)
        assert results == [13, 7]
        assert pool.alive_workers() == [1]
        assert all(r.worker_id == 1 for r in records)
        # the pool still serves maps with the remaining worker
        more, _ = pool.parallel_map([2, 3], "t.square", DYN1)
        assert more == [4, 9]


def test_multiprocess_all_workers_dead_aborts():
    with open_pool("multiprocess", 1, task_modules=TASK_MODULES) as pool:
        with pytest.raises(ParallelMapError, match="no workers alive|crashed"):
            pool.parallel_map([13], "t.die_on_13", STATIC)


# --- pools: socket transport -------------------------------------------------


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def connect_retry(port, deadline_s=10.0):
    deadline = time.monotonic() + deadline_s
    while True:
        try:
            return socket.create_connection(("127.0.0.1", port))
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.05)


def socket_worker_thread(port, wid):
    def run():
        deadline = time.monotonic() + 10.0
        while True:
            try:
                run_socket_worker("127.0.0.1", port, wid)
                return
            except OSError:
                if time.monotonic() > deadline:
                    raise
                time.sleep(0.05)

    t = threading.Thread(target=run, daemon=True, name=f"socket-worker-{wid}")
    t.start()
    return t


def test_socket_pool_matches_serial():
    port = free_port()
    threads = [socket_worker_thread(port, wid) for wid in (0, 1)]
    with open_pool("socket", 2, listen=f"127.0.0.1:{port}") as pool:
        results, records = pool.parallel_map(list(range(12)), "t.square", DYN3)
    assert results == [x * x for x in range(12)]
    assert sum(r.item_count for r in records) == 12
    for t in threads:
        t.join(timeout=10)
        assert not t.is_alive()


def test_socket_pool_rejects_wrong_protocol_version():
    port = free_port()
    seen = {}
    rejected = threading.Event()

    def bad_client():
        ch = wire.SocketChannel(connect_retry(port))
        ch.send(HELLO, {"protocol_version": 99, "worker_id": 0})
        seen["frame"] = ch.recv(timeout=10)
        rejected.set()
        ch.close()

    def good_worker():
        rejected.wait(timeout=10)
        run_socket_worker("127.0.0.1", port, 0)

    threading.Thread(target=bad_client, daemon=True).start()
    good = threading.Thread(target=good_worker, daemon=True)
    good.start()
    with open_pool("socket", 1, listen=f"127.0.0.1:{port}") as pool:
        assert pool.n_workers == 1
        results, _ = pool.parallel_map([4], "t.square", STATIC)
        assert results == [16]
    ftype, body = seen["frame"]
    assert ftype == ERROR
    assert "protocol version mismatch" in body["error"]
    good.join(timeout=10)


def test_socket_pool_rejects_duplicate_worker_id():
    port = free_port()
    seen = {}

    def clients():
        ch0 = wire.SocketChannel(connect_retry(port))
        ch0.send(HELLO, {"protocol_version": PROTOCOL_VERSION, "worker_id": 0})
        dup = wire.SocketChannel(connect_retry(port))
        dup.send(HELLO, {"protocol_version": PROTOCOL_VERSION, "worker_id": 0})
        seen["frame"] = dup.recv(timeout=10)  # blocks until the reject
        dup.close()
        ch1 = wire.SocketChannel(connect_retry(port))
        ch1.send(HELLO, {"protocol_version": PROTOCOL_VERSION, "worker_id": 1})
        seen["channels"] = (ch0, ch1)

    threading.Thread(target=clients, daemon=True).start()
    pool = open_pool("socket", 2, listen=f"127.0.0.1:{port}")
    pool.close()
    ftype, body = seen["frame"]
    assert ftype == ERROR
    assert "duplicate worker_id" in body["error"]
    for ch in seen["channels"]:
        ch.close()


# --- worker loop -------------------------------------------------------------


@task("t.wrong_count")
def wrong_count(items, ctx):
    return items[:-1]


def start_worker(worker_id=0):
    coord, worker = wire.QueueChannel.pair()
    t = threading.Thread(target=worker_loop, args=(worker, worker_id), daemon=True)
    t.start()
    ftype, body = coord.recv(timeout=2)
    assert ftype == HELLO
    assert body == {"protocol_version": PROTOCOL_VERSION, "worker_id": worker_id}
    return coord, t


def test_worker_loop_serves_and_shuts_down():
    coord, t = start_worker()
    coord.send(TASK, {"chunk_id": 0, "epoch": 1, "task": "t.square",
                      "items": [2, 3], "params": {}})
    ftype, body = coord.recv(timeout=2)
    assert ftype == RESULT
    assert body["results"] == [4, 9]
    assert body["chunk_id"] == 0 and body["epoch"] == 1
    rec = body["record"]
    assert rec["worker_id"] == 0 and rec["status"] == "ok" and rec["item_count"] == 2
    assert rec["t_end"] >= rec["t_start"]
    coord.send(SHUTDOWN, {})
    t.join(timeout=2)
    assert not t.is_alive()


def test_worker_loop_reports_task_exception():
    coord, t = start_worker()
    coord.send(TASK, {"chunk_id": 3, "epoch": 1, "task": "t.boom",
                      "items": [-4], "params": {}})
    ftype, body = coord.recv(timeout=2)
    assert ftype == ERROR
    assert "negative item rejected" in body["error"]
    assert body["record"]["status"] == "failed"
    coord.send(SHUTDOWN, {})
    t.join(timeout=2)


def test_worker_loop_rejects_wrong_result_count():
    coord, t = start_worker()
    coord.send(TASK, {"chunk_id": 0, "epoch": 1, "task": "t.wrong_count",
                      "items": [1, 2], "params": {}})
    ftype, body = coord.recv(timeout=2)
    assert ftype == ERROR
    assert "returned 1 results for 2 items" in body["error"]
    coord.send(SHUTDOWN, {})
    t.join(timeout=2)


def test_worker_loop_ignores_unexpected_frames():
    coord, t = start_worker()
    coord.send(RESULT, {"chunk_id": 9})  # nonsense direction; must not kill it
    coord.send(TASK, {"chunk_id": 0, "epoch": 1, "task": "t.square",
                      "items": [5], "params": {}})
    ftype, body = coord.recv(timeout=2)
    assert ftype == RESULT and body["results"] == [25]
    coord.send(SHUTDOWN, {})
    t.join(timeout=2)


def test_resolve_task_unknown_name():
    with pytest.raises(KeyError, match="t.never_registered"):
        resolve_task("t.never_registered")


# --- scheduling simulator ----------------------------------------------------


def test_sim_big_task_first_example():
    durations = [8, 1, 1, 1]
    assert simulate_makespan(durations, 2, STATIC) == 9  # chunks [8,1] and [1,1]
    assert simulate_makespan(durations, 2, DYN1) == 8


def test_sim_uniform_tasks_make_policies_equal():
    durations = [1.0] * 8
    assert simulate_makespan(durations, 4, STATIC) == 2.0
    assert simulate_makespan(durations, 4, DYN1) == 2.0


def test_sim_single_worker_serializes():
    durations = [3.0, 1.0, 2.0]
    assert simulate_makespan(durations, 1, STATIC) == 6.0
    assert simulate_makespan(durations, 1, DYN1) == 6.0


def test_sim_empty_and_validation():
    assert simulate_makespan([], 4, STATIC) == 0.0
    with pytest.raises(ConfigError):
        simulate_makespan([1.0], 0, STATIC)
    with pytest.raises(ConfigError):
        simulate_makespan([-1.0], 2, STATIC)


def test_sim_bounds_hold_on_random_instances():
    rng = random.Random(99)
    for _ in range(200):
        m = rng.randint(1, 8)
        durations = [rng.uniform(0.0, 10.0) for _ in range(rng.randint(1, 60))]
        static = simulate_makespan(durations, m, STATIC)
        dyn = simulate_makespan(durations, m, DYN1)
        lower = max(sum(durations) / m, max(durations))
        assert static >= lower - 1e-9
        assert dyn >= lower - 1e-9
        # greedy list scheduling is within Graham's (2 - 1/m) of any schedule
        assert dyn <= (2 - 1 / m) * static + 1e-9


def test_make_durations_heavy_is_eighty_twenty():
    durations = make_durations("heavy", 200, seed=3)
    assert len(durations) == 200
    heavy = [d for d in durations if d != 1.0]
    light = [d for d in durations if d == 1.0]
    assert len(heavy) == 20
    assert sum(heavy) == pytest.approx(4.0 * sum(light))
    assert sum(heavy) / sum(durations) == pytest.approx(0.8)


def test_make_durations_other_distributions():
    assert make_durations("uniform", 5) == [1.0] * 5
    a = make_durations("lognormal", 50, seed=7)
    b = make_durations("lognormal", 50, seed=7)
    assert a == b and all(d > 0 for d in a)
    assert make_durations("uniform", 0) == []
    with pytest.raises(ConfigError, match="unknown distribution"):
        make_durations("bimodal", 10)


def test_bench_scheduling_row_math():
    rows = bench_scheduling({"heavy": make_durations("heavy", 100, 0)}, 4,
                            [STATIC, DYN1])
    assert [r["policy"] for r in rows] == ["static", "dynamic(1)"]
    for row in rows:
        assert row["speedup"] == pytest.approx(row["serial_time"] / row["makespan"],
                                               abs=1e-5)
    table = format_bench_table(rows)
    assert table.splitlines()[0].split() == [
        "distribution", "policy", "n_tasks", "n_workers",
        "serial_time", "makespan", "speedup"]
    assert "dynamic(1)" in table
