"""Exception hierarchy shared across the package."""


class GcontextError(Exception):
    """Base class for all gcontext errors."""


class ConfigError(GcontextError):
    """Bad command line, config file, or option combination (usage error, exit 1)."""


class DataError(GcontextError):
    """Bad or missing input data, store, or dump (data error, exit 2)."""


class StoreError(DataError):
    """Store file unreadable, wrong kind, or format version mismatch."""


class BackendError(DataError):
    """External similarity tool failed or produced unusable output."""


class ProtocolError(GcontextError):
    """Malformed frame or handshake violation on a worker channel."""


class StageError(GcontextError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage


class ParallelMapError(GcontextError):
    """A distributed map failed after retry; keeps records of completed chunks."""

    def __init__(self, chunk_id: int, message: str, task_records=None):
        super().__init__(f"parallel map failed on chunk {chunk_id}: {message}")
        self.chunk_id = chunk_id
        self.task_records = list(task_records or [])
