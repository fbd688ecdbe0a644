"""Job queue with at-least-once delivery and visibility-timeout redelivery.

The message table is an append-only log; claiming a message flips it
in-flight and stamps when it becomes visible again, so an unacked message
reappears (attempt + 1) after the timeout. FIFO is NOT guaranteed and
consumers must be idempotent; the worker fabric layers exactly-once effects
on top. Payloads reference blob keys and record ids only -- PHI never rides
a queue message.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import time
import uuid
from dataclasses import dataclass


class StaleAckError(ValueError):
    """Ack for a job that is unknown, already acked, or past its visibility."""


@dataclass(frozen=True)
class JobMessage:
    job_id: str
    job_type: str
    payload: dict
    attempt: int
    enqueue_time: float


class JobQueue:
    def __init__(self, db_path):
        self.db_path = str(db_path)
        self._local = threading.local()
        self._init_schema()

    def _conn(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = sqlite3.connect(self.db_path, timeout=60.0)
            conn.execute("PRAGMA journal_mode=WAL")
            conn.execute("PRAGMA synchronous=NORMAL")
            conn.execute("PRAGMA busy_timeout=60000")
            conn.execute("PRAGMA cache_size=-256")  # see records.py: flat memory
            self._local.conn = conn
        return conn

    def _init_schema(self):
        conn = self._conn()
        with conn:
            conn.execute(
                "CREATE TABLE IF NOT EXISTS q_messages ("
                "  job_id TEXT PRIMARY KEY,"
                "  queue TEXT NOT NULL,"
                "  job_type TEXT NOT NULL,"
                "  payload TEXT NOT NULL,"
                "  attempt INTEGER NOT NULL DEFAULT 0,"
                "  enqueue_time REAL NOT NULL,"
                "  state TEXT NOT NULL DEFAULT 'pending',"  # pending|inflight|acked
                "  visible_at REAL NOT NULL)"
            )
            conn.execute(
                "CREATE INDEX IF NOT EXISTS q_ready "
                "ON q_messages (queue, state, visible_at)"
            )

    def close(self):
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None

    def send(self, queue, payload, job_type=None, job_id=None):
        """Durably enqueue a message; returns its job id."""
        job_id = job_id or uuid.uuid4().hex
        now = time.time()
        conn = self._conn()
        with conn:
            conn.execute(
                "INSERT INTO q_messages (job_id, queue, job_type, payload, enqueue_time, visible_at)"
                " VALUES (?, ?, ?, ?, ?, ?)",
                (job_id, queue, job_type or queue, json.dumps(payload), now, now),
            )
        return job_id

    def receive(self, queue, visibility_timeout=30.0):
        """Claim one visible message, or None. Redelivered messages carry an
        incremented attempt count. No ordering guarantee."""
        if visibility_timeout <= 0:
            raise ValueError("visibility_timeout must be positive")
        now = time.time()
        conn = self._conn()
        with conn:
            row = conn.execute(
                "SELECT job_id, job_type, payload, attempt, enqueue_time FROM q_messages"
                " WHERE queue = ? AND state != 'acked' AND visible_at <= ?"
                " ORDER BY visible_at LIMIT 1",
                (queue, now),
            ).fetchone()
            if row is None:
                return None
            job_id, job_type, payload, attempt, enqueue_time = row
            conn.execute(
                "UPDATE q_messages SET state = 'inflight', attempt = ?, visible_at = ?"
                " WHERE job_id = ?",
                (attempt + 1, now + visibility_timeout, job_id),
            )
        return JobMessage(job_id, job_type, json.loads(payload), attempt + 1, enqueue_time)

    def ack(self, queue, job_id):
        """Settle a message for good. Acking something unknown, already
        settled, or past its visibility window raises StaleAckError
        (non-fatal: the consumer's work stands, the message may redeliver)."""
        now = time.time()
        conn = self._conn()
        with conn:
            cur = conn.execute(
                "UPDATE q_messages SET state = 'acked', visible_at = ?"
                " WHERE queue = ? AND job_id = ? AND state = 'inflight' AND visible_at > ?",
                (now, queue, job_id, now),
            )
        if cur.rowcount != 1:
            raise StaleAckError(f"stale ack for job {job_id!r} on queue {queue!r}")

    def depth(self, queue):
        """Messages deliverable right now (pending plus expired in-flight)."""
        now = time.time()
        return self._conn().execute(
            "SELECT COUNT(*) FROM q_messages"
            " WHERE queue = ? AND state != 'acked' AND visible_at <= ?",
            (queue, now),
        ).fetchone()[0]

    def stats(self, queue):
        """Conservation snapshot: sends == acked + inflight + pending."""
        now = time.time()
        rows = self._conn().execute(
            "SELECT state, visible_at FROM q_messages WHERE queue = ?", (queue,)
        ).fetchall()
        acked = sum(1 for s, _ in rows if s == "acked")
        inflight = sum(1 for s, v in rows if s == "inflight" and v > now)
        pending = len(rows) - acked - inflight
        return {"sends": len(rows), "acked": acked, "inflight": inflight, "pending": pending}

    def queues(self):
        return [r[0] for r in self._conn().execute("SELECT DISTINCT queue FROM q_messages")]
