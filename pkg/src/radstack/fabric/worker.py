"""Stateless single-task workers over the job queue, with elastic pools.

Each worker repeatedly claims one message for its job type, runs the
registered handler, and settles the message. Handlers receive exactly two
things -- the payload and the storage bundle -- so the only way modules can
interact is through storage; no worker holds a channel to another worker.

Delivery is at-least-once; effects are exactly-once: before acking, the
handler's completion is recorded in an idempotency ledger keyed by the
payload's idempotency key, and any later duplicate delivery of the same work
short-circuits on that ledger entry. Handlers must confine their writes to
idempotent storage operations (versioned blob puts, keyed upserts) so a
crash between effect and ledger insert converges on retry. Poison messages
dead-letter after max_attempts.
"""

from __future__ import annotations

import logging
import math
import threading
import time
import uuid
from dataclasses import dataclass

from radstack.storage import StaleAckError

log = logging.getLogger(__name__)


class UnknownJobTypeError(ValueError):
    pass


@dataclass(frozen=True)
class WorkerSpec:
    job_type: str
    handler: object  # callable(payload: dict, storage) -> dict | None
    idempotency_key: object  # callable(payload: dict) -> str
    max_attempts: int = 5
    visibility_timeout: float = 30.0


@dataclass(frozen=True)
class ScalingPolicy:
    """desired = clamp(ceil(depth / jobs_per_worker), min, max), re-evaluated
    every interval seconds."""

    min_workers: int = 1
    max_workers: int = 4
    jobs_per_worker: int = 4
    interval: float = 0.25

    def desired(self, depth):
        want = math.ceil(depth / self.jobs_per_worker) if depth > 0 else 0
        return max(self.min_workers, min(self.max_workers, want))


@dataclass
class PoolState:
    job_type: str
    desired_count: int = 0
    live_count: int = 0
    queue_depth: int = 0
    processed_total: int = 0
    failed_total: int = 0
    deduplicated_total: int = 0
    dead_lettered_total: int = 0


class _Pool:
    def __init__(self, spec, policy):
        self.spec = spec
        self.policy = policy
        self.state = PoolState(job_type=spec.job_type, desired_count=policy.min_workers)
        self.lock = threading.Lock()
        self.threads = []


class WorkerFabric:
    """Supervises one worker pool per registered job type."""

    def __init__(self, storage, specs, policy=None, poll_interval=0.02):
        self.storage = storage
        self.policy = policy or ScalingPolicy()
        self.poll_interval = poll_interval
        self._pools = {}
        self._stop = threading.Event()
        self._supervisor = None
        for spec in specs:
            self.register(spec)

    def register(self, spec: WorkerSpec, policy: ScalingPolicy | None = None):
        if spec.job_type in self._pools:
            raise ValueError(f"job type {spec.job_type!r} already registered")
        self._pools[spec.job_type] = _Pool(spec, policy or self.policy)

    def submit_job(self, job_type, payload):
        """Durably enqueue one job; returns its id."""
        if job_type not in self._pools:
            raise UnknownJobTypeError(f"no worker registered for job type {job_type!r}")
        return self.storage.queue.send(job_type, payload, job_type=job_type)

    # Lifecycle ---------------------------------------------------------

    def start(self):
        self._stop.clear()
        for pool in self._pools.values():
            self._resize(pool, pool.policy.min_workers)
        self._supervisor = threading.Thread(target=self._supervise, daemon=True, name="fabric-supervisor")
        self._supervisor.start()
        return self

    def stop(self, timeout=10.0):
        self._stop.set()
        if self._supervisor is not None:
            self._supervisor.join(timeout=timeout)
        for pool in self._pools.values():
            with pool.lock:
                pool.state.desired_count = 0
                threads = list(pool.threads)
            for t in threads:
                t.join(timeout=timeout)

    def _supervise(self):
        while not self._stop.is_set():
            for pool in self._pools.values():
                depth = self.storage.queue.depth(pool.spec.job_type)
                desired = pool.policy.desired(depth)
                with pool.lock:
                    pool.state.queue_depth = depth
                self._resize(pool, desired)
            self._stop.wait(min(p.policy.interval for p in self._pools.values()) if self._pools else 0.25)

    def _resize(self, pool, desired):
        with pool.lock:
            pool.state.desired_count = desired
            pool.threads = [t for t in pool.threads if t.is_alive()]
            live = len(pool.threads)
            for _ in range(desired - live):
                ident = uuid.uuid4().hex[:8]
                t = threading.Thread(
                    target=self._worker_loop,
                    args=(pool, ident),
                    daemon=True,
                    name=f"worker-{pool.spec.job_type}-{ident}",
                )
                pool.threads.append(t)
                t.start()
            pool.state.live_count = len(pool.threads)
        # shrinking happens passively: loops exit when over quota

    def _worker_loop(self, pool, ident):
        spec = pool.spec
        queue = self.storage.queue
        me = threading.current_thread()
        while not self._stop.is_set():
            with pool.lock:
                pool.threads = [t for t in pool.threads if t.is_alive() or t is me]
                over_quota = me not in pool.threads or pool.threads.index(me) >= pool.state.desired_count
                if over_quota:
                    if me in pool.threads:
                        pool.threads.remove(me)
                    pool.state.live_count = len(pool.threads)
                    return
                pool.state.live_count = len(pool.threads)
            msg = queue.receive(spec.job_type, visibility_timeout=spec.visibility_timeout)
            if msg is None:
                self._stop.wait(self.poll_interval)
                continue
            self._process(pool, msg)

    def _process(self, pool, msg):
        spec = pool.spec
        records = self.storage.records
        key = str(spec.idempotency_key(msg.payload))
        if records.get("applied_keys", key) is not None:
            with pool.lock:
                pool.state.deduplicated_total += 1
                pool.state.processed_total += 1
            self._safe_ack(spec.job_type, msg.job_id)
            return
        try:
            result = spec.handler(msg.payload, self.storage)
        except Exception as exc:
            with pool.lock:
                pool.state.failed_total += 1
            if msg.attempt >= spec.max_attempts:
                records.upsert(
                    "dead_letter",
                    {
                        "id": msg.job_id,
                        "job_type": spec.job_type,
                        "payload": msg.payload,
                        "attempts": msg.attempt,
                        "error": repr(exc),
                    },
                )
                with pool.lock:
                    pool.state.dead_lettered_total += 1
                self._safe_ack(spec.job_type, msg.job_id)
                log.error("dead-lettered %s job %s after %d attempts: %r",
                          spec.job_type, msg.job_id, msg.attempt, exc)
            else:
                log.warning("%s job %s attempt %d failed: %r",
                            spec.job_type, msg.job_id, msg.attempt, exc)
            return
        records.insert_if_absent(
            "applied_keys",
            {"id": key, "job_type": spec.job_type, "job_id": msg.job_id,
             "result": result, "applied_at": time.time()},
        )
        with pool.lock:
            pool.state.processed_total += 1
        self._safe_ack(spec.job_type, msg.job_id)

    def _safe_ack(self, queue_name, job_id):
        try:
            self.storage.queue.ack(queue_name, job_id)
        except StaleAckError:
            pass  # visibility lapsed; the idempotency ledger absorbs the redelivery

    # Introspection ------------------------------------------------------

    def pipeline_status(self):
        """Point-in-time snapshot of every pool's counters."""
        snapshot = {}
        for job_type, pool in self._pools.items():
            with pool.lock:
                st = pool.state
                snapshot[job_type] = PoolState(
                    job_type=job_type,
                    desired_count=st.desired_count,
                    live_count=st.live_count,
                    queue_depth=self.storage.queue.depth(job_type),
                    processed_total=st.processed_total,
                    failed_total=st.failed_total,
                    deduplicated_total=st.deduplicated_total,
                    dead_lettered_total=st.dead_lettered_total,
                )
        return snapshot

    def drain(self, timeout=60.0):
        """Block until every registered queue is fully settled."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            stats = [self.storage.queue.stats(jt) for jt in self._pools]
            if all(s["pending"] == 0 and s["inflight"] == 0 for s in stats):
                return True
            time.sleep(0.02)
        return False
