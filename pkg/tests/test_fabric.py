"""Worker fabric: exactly-once effects, elasticity, conservation, isolation."""

import inspect
import threading
import time

import pytest

from radstack.fabric import ScalingPolicy, UnknownJobTypeError, WorkerFabric, WorkerSpec
from radstack.storage import RecordQuery, Storage


@pytest.fixture
def store(tmp_path):
    s = Storage(tmp_path / "data")
    yield s
    s.close()


def effect_handler(payload, storage):
    # the countable effect: an insert-only row keyed by the work id
    storage.records.insert_if_absent("notes", {"id": f"effect-{payload['work_id']}"})
    return {"ok": True}


class TestFabric:
    def test_submit_unknown_type_rejected(self, store):
        fabric = WorkerFabric(store, [])
        with pytest.raises(UnknownJobTypeError):
            fabric.submit_job("nope", {})

    def test_ten_jobs_processed_exactly_once(self, store):
        spec = WorkerSpec(
            job_type="work",
            handler=effect_handler,
            idempotency_key=lambda p: f"work:{p['work_id']}",
            visibility_timeout=5.0,
        )
        fabric = WorkerFabric(store, [spec], ScalingPolicy(1, 1, interval=0.05))
        fabric.start()
        try:
            for i in range(10):
                fabric.submit_job("work", {"work_id": i})
            assert fabric.drain(timeout=20)
        finally:
            fabric.stop()
        applied = [store.records.get("applied_keys", f"work:{i}") for i in range(10)]
        assert all(a is not None for a in applied)
        assert store.records.count("dead_letter") == 0

    def test_exactly_once_under_crashes_and_duplicates(self, store, rng):
        """5% of handler runs crash mid-flight; short visibility causes
        duplicate deliveries. Every idempotency key applies exactly once."""
        n = 400
        crash = iter(rng.random(n * 40) < 0.05)
        lock = threading.Lock()
        raw_runs = [0]

        def flaky(payload, storage):
            with lock:
                raw_runs[0] += 1
            if next(crash):
                raise RuntimeError("injected crash")
            if next(crash):
                # effect lands but the worker dies before recording/acking:
                # the retry must converge, not double-apply
                storage.records.insert_if_absent("notes", {"id": f"effect-{payload['work_id']}"})
                raise RuntimeError("injected crash after effect")
            storage.records.insert_if_absent("notes", {"id": f"effect-{payload['work_id']}"})
            return None

        spec = WorkerSpec(
            job_type="flaky",
            handler=flaky,
            idempotency_key=lambda p: f"flaky:{p['work_id']}",
            max_attempts=25,
            visibility_timeout=0.5,
        )
        fabric = WorkerFabric(store, [spec], ScalingPolicy(8, 8, interval=0.05))
        fabric.start()
        try:
            for i in range(n):
                fabric.submit_job("flaky", {"work_id": i})
            assert fabric.drain(timeout=120)
        finally:
            fabric.stop()

        applied = store.records.query(
            RecordQuery("applied_keys", predicates=[("job_type", "eq", "flaky")])
        )
        keys = [a["id"] for a in applied]
        assert sorted(keys) == sorted(f"flaky:{i}" for i in range(n))  # no loss, no dup
        assert store.records.count("dead_letter") == 0
        effects = [store.records.get("notes", f"effect-{i}") for i in range(n)]
        assert all(e is not None for e in effects)

    def test_poison_message_dead_letters(self, store):
        def poison(payload, storage):
            raise ValueError("always broken")

        spec = WorkerSpec(
            job_type="poison",
            handler=poison,
            idempotency_key=lambda p: "poison:1",
            max_attempts=3,
            visibility_timeout=0.05,
        )
        fabric = WorkerFabric(store, [spec], ScalingPolicy(1, 1, interval=0.05))
        fabric.start()
        try:
            job_id = fabric.submit_job("poison", {"x": 1})
            deadline = time.monotonic() + 20
            while time.monotonic() < deadline:
                if store.records.get("dead_letter", job_id) is not None:
                    break
                time.sleep(0.05)
        finally:
            fabric.stop()
        dead = store.records.get("dead_letter", job_id)
        assert dead is not None and dead["attempts"] == 3
        status = fabric.pipeline_status()["poison"]
        assert status.failed_total == 3
        assert status.processed_total == 0

    def test_pool_scales_up_then_back_to_min(self, store):
        gate = threading.Event()

        def slow(payload, storage):
            gate.wait(timeout=10)
            storage.records.insert_if_absent("notes", {"id": f"slow-{payload['work_id']}"})

        policy = ScalingPolicy(min_workers=1, max_workers=6, jobs_per_worker=2, interval=0.05)
        spec = WorkerSpec(
            job_type="slow", handler=slow,
            idempotency_key=lambda p: f"slow:{p['work_id']}", visibility_timeout=30.0,
        )
        fabric = WorkerFabric(store, [spec], policy)
        fabric.start()
        try:
            for i in range(24):
                fabric.submit_job("slow", {"work_id": i})
            deadline = time.monotonic() + 10
            saw_max = False
            while time.monotonic() < deadline:
                if fabric.pipeline_status()["slow"].live_count >= 6:
                    saw_max = True
                    break
                time.sleep(0.02)
            assert saw_max, "pool never scaled up under backlog"
            gate.set()
            assert fabric.drain(timeout=30)
            deadline = time.monotonic() + 10
            while time.monotonic() < deadline:
                st = fabric.pipeline_status()["slow"]
                if st.desired_count == 1 and st.live_count <= 1:
                    break
                time.sleep(0.05)
            st = fabric.pipeline_status()["slow"]
            assert st.desired_count == 1 and st.live_count <= 1
        finally:
            fabric.stop()

    def test_conservation_under_load(self, store):
        spec = WorkerSpec(
            job_type="acct",
            handler=lambda p, s: None,
            idempotency_key=lambda p: f"acct:{p['work_id']}",
            visibility_timeout=5.0,
        )
        fabric = WorkerFabric(store, [spec], ScalingPolicy(2, 4, interval=0.05))
        for i in range(50):
            fabric.submit_job("acct", {"work_id": i})
        stats = store.queue.stats("acct")
        assert stats["pending"] == 50  # nothing started yet
        fabric.start()
        try:
            assert fabric.drain(timeout=30)
        finally:
            fabric.stop()
        stats = store.queue.stats("acct")
        assert stats["sends"] == 50
        assert stats["acked"] == 50
        assert stats["pending"] == stats["inflight"] == 0
        st = fabric.pipeline_status()["acct"]
        assert st.processed_total >= 50

    def test_isolation_handlers_receive_only_storage(self, store):
        """Architecture check: every handler signature is (payload, storage);
        the fabric passes exactly those two objects and nothing else."""
        seen = {}

        def handler(payload, storage):
            seen["args"] = (payload, storage)

        spec = WorkerSpec(job_type="iso", handler=handler, idempotency_key=lambda p: "iso:1")
        sig = inspect.signature(spec.handler)
        assert len(sig.parameters) == 2
        fabric = WorkerFabric(store, [spec], ScalingPolicy(1, 1, interval=0.05))
        fabric.start()
        try:
            fabric.submit_job("iso", {"a": 1})
            assert fabric.drain(timeout=10)
        finally:
            fabric.stop()
        payload, storage_arg = seen["args"]
        assert payload == {"a": 1}
        assert storage_arg is store  # the one shared boundary
