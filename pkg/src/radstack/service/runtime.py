"""Platform runtime: wires storage, the worker fabric, per-project training
loops, and the inbox watcher into one start/stoppable unit. The HTTP app is
a stateless veneer over this object; everything durable lives in storage."""

from __future__ import annotations

import hashlib
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

from radstack.fabric import ScalingPolicy, WorkerFabric, WorkerSpec
from radstack.ingestion.anonymize import InclusionList
from radstack.ingestion.inbox import (
    INGEST_QUEUE,
    SERIES_INGESTED_QUEUE,
    ingest_series_files,
    scan_inbox,
)
from radstack.learning import MaturityPolicy, LoopConfig, ThresholdSegmenter, TrainingLoop
from radstack.service import auth
from radstack.storage import Storage
from radstack.storage.records import RecordQuery

log = logging.getLogger(__name__)

TRAINERS = {"threshold-segmenter": ThresholdSegmenter}


@dataclass
class PlatformConfig:
    data_dir: str = "./data"
    host: str = "127.0.0.1"
    port: int = 8077
    workers_min: int = 1
    workers_max: int = 4
    jobs_per_worker: int = 4
    scale_interval: float = 0.25
    inclusion_list_file: str | None = None
    maturity_threshold: float = 0.7
    drift_alpha: float = 0.01
    drift_baseline: int = 50
    drift_window: int = 50
    admin_user: str = "admin"
    admin_password: str = "admin"
    default_protocol: str = "unassigned"
    inbox_poll_seconds: float = 1.0
    loop_idle_wait: float = 0.25
    start_training_loops: bool = True

    def inclusion_list(self):
        if self.inclusion_list_file:
            return InclusionList.from_file(self.inclusion_list_file)
        return InclusionList.default()


def evaluate_filter(series_doc, predicates):
    """Apply cohort-filter predicates to one series record (safe fields)."""
    for p in predicates:
        field_name, op, value = p["field"], p["op"], p["value"]
        actual = series_doc.get(field_name)
        if op == "eq":
            ok = actual == value
        elif op == "ne":
            ok = actual != value
        elif op == "lt":
            ok = actual is not None and actual < value
        elif op == "le":
            ok = actual is not None and actual <= value
        elif op == "gt":
            ok = actual is not None and actual > value
        elif op == "ge":
            ok = actual is not None and actual >= value
        elif op == "contains":
            ok = actual is not None and str(value) in str(actual)
        else:
            raise ValueError(f"unknown filter op {op!r}")
        if not ok:
            return False
    return True


def validate_filter(predicates):
    """Cohort filters may reference safe-partition fields only."""
    from radstack.ingestion.anonymize import FORBIDDEN_FIELDS

    for p in predicates:
        name = p.get("field", "")
        if name.startswith("phi.") or name in FORBIDDEN_FIELDS:
            raise ValueError(f"cohort filter may not reference PHI field {name!r}")
        if not p.get("op"):
            raise ValueError("filter predicate missing op")


class Platform:
    def __init__(self, config: PlatformConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.storage = Storage(self.data_dir)
        self.inclusion = config.inclusion_list()
        self._loops = {}
        self._loop_threads = {}
        self._stop = threading.Event()
        self._inbox_thread = None

        inclusion = self.inclusion

        def ingest_handler(payload, storage):
            ingest_series_files(storage, payload["files"], inclusion)

        def cohort_update_handler(payload, storage):
            update_open_cohorts(storage, payload["series_id"])

        self.fabric = WorkerFabric(
            self.storage,
            [
                WorkerSpec(
                    job_type=INGEST_QUEUE,
                    handler=ingest_handler,
                    idempotency_key=lambda p: "ingest:"
                    + hashlib.sha256("|".join(sorted(p["files"])).encode()).hexdigest()[:24],
                ),
                WorkerSpec(
                    job_type=SERIES_INGESTED_QUEUE,
                    handler=cohort_update_handler,
                    idempotency_key=lambda p: f"cohort-update:{p['series_id']}",
                ),
            ],
            ScalingPolicy(
                min_workers=config.workers_min,
                max_workers=config.workers_max,
                jobs_per_worker=config.jobs_per_worker,
                interval=config.scale_interval,
            ),
        )

    # Lifecycle -----------------------------------------------------------

    def start(self):
        self._stop.clear()
        auth_user = self.storage.records.get("users", self.config.admin_user)
        if auth_user is None:
            auth.create_user(
                self.storage,
                self.config.admin_user,
                self.config.admin_password,
                roles=("admin",),
            )
        self.storage.records.insert_if_absent(
            "protocols", {"id": self.config.default_protocol, "title": "Unassigned intake"}
        )
        self.fabric.start()
        if self.config.start_training_loops:
            for project in self.storage.records.query(RecordQuery("projects")):
                self.ensure_loop(project["id"])
        self._inbox_thread = threading.Thread(target=self._watch_inbox, daemon=True,
                                              name="inbox-watcher")
        self._inbox_thread.start()
        return self

    def stop(self):
        self._stop.set()
        for thread in self._loop_threads.values():
            thread.join(timeout=10)
        if self._inbox_thread is not None:
            self._inbox_thread.join(timeout=10)
        self.fabric.stop()
        self.storage.close()

    # Ingestion -----------------------------------------------------------

    @property
    def inbox_dir(self):
        return self.data_dir / "inbox"

    def scan_inbox_now(self):
        return scan_inbox(self.storage, self.inbox_dir)

    def _watch_inbox(self):
        while not self._stop.is_set():
            try:
                self.scan_inbox_now()
            except Exception:
                log.exception("inbox scan failed")
            self._stop.wait(self.config.inbox_poll_seconds)

    # Training loops --------------------------------------------------------

    def trainer_for(self, project_record):
        name = project_record.get("trainer", "threshold-segmenter")
        factory = TRAINERS.get(name)
        if factory is None:
            raise ValueError(f"unknown trainer {name!r}")
        return factory()

    def maturity_policy(self, project_record):
        return MaturityPolicy(
            metric_name=project_record.get("metric_name", "dice"),
            threshold=float(project_record.get("maturity_threshold",
                                               self.config.maturity_threshold)),
        )

    def ensure_loop(self, project_id):
        if project_id in self._loops or not self.config.start_training_loops:
            return
        project = self.storage.records.get("projects", project_id)
        if project is None:
            return
        loop = TrainingLoop(
            self.storage,
            project_id,
            self.trainer_for(project),
            self.maturity_policy(project),
            LoopConfig(
                drift_baseline=self.config.drift_baseline,
                drift_window=self.config.drift_window,
                drift_alpha=self.config.drift_alpha,
            ),
        )
        thread = threading.Thread(
            target=loop.run,
            args=(self._stop,),
            kwargs={"idle_wait": self.config.loop_idle_wait},
            daemon=True,
            name=f"training-loop-{project_id}",
        )
        self._loops[project_id] = loop
        self._loop_threads[project_id] = thread
        thread.start()


def update_open_cohorts(storage, series_id):
    """Add a freshly ingested series to every open cohort it matches."""
    series = storage.records.get("series", series_id)
    if series is None:
        return
    for cohort in storage.records.query(RecordQuery("cohorts")):
        if not cohort.get("open", False):
            continue
        if not evaluate_filter(series, cohort.get("filter", [])):
            continue
        members = set(cohort.get("members", []))
        if series_id in members:
            continue
        cohort.pop("_version", None)
        members.add(series_id)
        cohort["members"] = sorted(members)
        storage.records.upsert("cohorts", cohort)
        storage.records.append(
            "events",
            {"kind": "cohort_member_added", "cohort_id": cohort["id"],
             "series_id": series_id, "automatic": True},
        )
