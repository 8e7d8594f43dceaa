"""Chunk planning for distributed maps.

Static mode deals one contiguous chunk per worker up front; dynamic mode cuts
the item list into fixed-size chunks that idle workers pull until exhausted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError


@dataclass(frozen=True)
class ChunkingPolicy:
    mode: str = "static"  # static | dynamic
    dynamic_chunk_size: int = 1

    def __post_init__(self):
        if self.mode not in ("static", "dynamic"):
            raise ConfigError(f"unknown chunking mode '{self.mode}'")
        if self.dynamic_chunk_size < 1:
            raise ConfigError("dynamic_chunk_size must be >= 1")

    def label(self) -> str:
        if self.mode == "static":
            return "static"
        return f"dynamic({self.dynamic_chunk_size})"


@dataclass
class TaskChunk:
    chunk_id: int
    start: int  # first item index, inclusive
    stop: int  # last item index, exclusive
    retries: int = 0
    avoid_worker: int | None = None

    @property
    def item_count(self) -> int:
        return self.stop - self.start


@dataclass
class TaskRecord:
    worker_id: int
    chunk_id: int
    t_start: float
    t_end: float
    item_count: int
    status: str = "ok"  # ok | failed
    step: str | None = None

    def to_dict(self) -> dict:
        return {
            "worker_id": self.worker_id,
            "chunk_id": self.chunk_id,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "item_count": self.item_count,
            "status": self.status,
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskRecord":
        return cls(
            worker_id=d["worker_id"],
            chunk_id=d["chunk_id"],
            t_start=d["t_start"],
            t_end=d["t_end"],
            item_count=d["item_count"],
            status=d.get("status", "ok"),
            step=d.get("step"),
        )


def split_static(n_items: int, n_workers: int) -> list[int]:
    """Contiguous chunk sizes: min(n_workers, n_items) chunks, sizes within 1,
    larger chunks first. (10, 4) -> [3, 3, 2, 2]."""
    if n_workers < 1:
        raise ConfigError("n_workers must be >= 1")
    if n_items < 0:
        raise ConfigError("n_items must be >= 0")
    n_chunks = min(n_workers, n_items)
    if n_chunks == 0:
        return []
    base, rem = divmod(n_items, n_chunks)
    return [base + 1] * rem + [base] * (n_chunks - rem)


def plan_chunks(n_items: int, policy: ChunkingPolicy, n_workers: int) -> list[TaskChunk]:
    """Cut [0, n_items) into TaskChunks with dense ids in index order."""
    if policy.mode == "static":
        sizes = split_static(n_items, n_workers)
    else:
        size = policy.dynamic_chunk_size
        sizes = [size] * (n_items // size)
        if n_items % size:
            sizes.append(n_items % size)
    chunks = []
    cursor = 0
    for cid, size in enumerate(sizes):
        chunks.append(TaskChunk(chunk_id=cid, start=cursor, stop=cursor + size))
        cursor += size
    assert cursor == n_items
    return chunks
