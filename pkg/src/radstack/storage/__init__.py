"""The three embedded stores everything else communicates through.

No module in the platform talks to another module directly: workers, the
training loop, and the API only ever share state via these interfaces
(record store, blob store, job queue). All three are file-backed so the
whole platform runs on a laptop, and all are safe for concurrent use from
many threads or processes of one node.

On-disk layout under a single data directory:
    data/
      records.db   -- relational/record store and queues (sqlite, WAL)
      blobs/       -- content-addressed object tree + versioned key links
      inbox/       -- file-drop ingest directory (see radstack.ingestion)
"""

from pathlib import Path

from radstack.storage.blobs import BlobKey, BlobStore, BlobConflictError, BlobNotFoundError
from radstack.storage.queues import JobMessage, JobQueue, StaleAckError
from radstack.storage.records import (
    AccessDeniedError,
    RecordQuery,
    RecordSchemaError,
    RecordStore,
)

NAMESPACES = ("volumes", "masks", "models", "exports")


class Storage:
    """Bundle of the three stores rooted at one data directory.

    This is the only handle worker handlers receive; holding it is what
    "may read/write storage" means in this codebase.
    """

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        db_path = self.data_dir / "records.db"
        self.records = RecordStore(db_path)
        self.blobs = BlobStore(self.data_dir / "blobs")
        self.queue = JobQueue(db_path)

    def close(self):
        self.records.close()
        self.queue.close()


def open_storage(data_dir):
    return Storage(data_dir)


__all__ = [
    "Storage",
    "open_storage",
    "NAMESPACES",
    "BlobKey",
    "BlobStore",
    "BlobConflictError",
    "BlobNotFoundError",
    "JobMessage",
    "JobQueue",
    "StaleAckError",
    "RecordStore",
    "RecordQuery",
    "RecordSchemaError",
    "AccessDeniedError",
]
