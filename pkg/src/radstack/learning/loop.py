"""The continuous training loop: annotations stream in, the model trains
incrementally, good versions snapshot, drift freezes and re-initiates, and a
replay guard restores the best snapshot on catastrophic forgetting.

One loop instance per project is the single writer of that project's model
state. Sign-off events arrive on the project's training queue; the
annotations table is rescanned as well, so a lost message delays nothing.
The loop is resumable: trainer state reloads from the newest snapshot and
loop bookkeeping from a record, so a restart picks up where it stopped.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass

from radstack.core.annotation import AnnotationSet
from radstack.ingestion.inbox import load_volume
from radstack.learning.drift import DriftMonitor
from radstack.learning.metrics import METRICS
from radstack.learning.snapshots import SnapshotStore
from radstack.learning.trainer import TrainingExample
from radstack.storage import BlobKey
from radstack.storage.records import RecordQuery

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaturityPolicy:
    metric_name: str = "dice"
    threshold: float = 0.7
    validation_fraction: float = 0.2

    def __post_init__(self):
        if not (0 < self.validation_fraction < 1):
            raise ValueError("validation_fraction must be in (0, 1)")


@dataclass(frozen=True)
class LoopConfig:
    batch_limit: int = 16
    drift_baseline: int = 50
    drift_window: int = 50
    drift_alpha: float = 0.01
    forgetting_delta: float = 0.10
    replay_size: int = 8
    backoff_seconds: float = 0.5


def is_validation_series(series_id, fraction):
    """Deterministic split: hash of the series id against the fraction."""
    h = int(hashlib.sha256(str(series_id).encode()).hexdigest()[:12], 16)
    return (h % 10_000) / 10_000.0 < fraction


def training_queue(project_id):
    return f"training:{project_id}"


@dataclass(frozen=True)
class ProposalResult:
    status: str  # ready | not_mature
    annotation: AnnotationSet | None = None
    model_version: int | None = None
    metric_value: float | None = None


def propose_annotation(storage, project_id, series_id, trainer, policy: MaturityPolicy):
    """Serve the best snapshot's prediction, gated on maturity.

    No proposal is ever served from a snapshot whose metric is below the
    policy threshold; with no snapshots at all the project is not mature.
    Output is tagged machine-proposed with the producing model version, so
    it stays distinguishable from human work until a person signs it off.
    """
    snaps = SnapshotStore(storage, project_id)
    best = snaps.best()
    if best is None or best["metric_value"] < policy.threshold:
        return ProposalResult(status="not_mature")
    volume = load_volume(storage, series_id)
    if volume is None:
        raise KeyError(f"series {series_id!r} not ingested")
    state = trainer.deserialize(snaps.load_state(best))
    pred = trainer.predict(state, volume)
    series = storage.records.get("series", series_id)
    ann = AnnotationSet(
        target=(series.get("study_id", ""), series_id),
        author=f"model:{best['model_id']}",
        masks=pred.masks,
        series_labels=pred.labels,
        machine_proposed=True,
        model_version=best["version"],
    )
    return ProposalResult(
        status="ready",
        annotation=ann,
        model_version=best["version"],
        metric_value=best["metric_value"],
    )


class TrainingLoop:
    def __init__(self, storage, project_id, trainer, policy=None, config=None, trainer_config=None):
        self.storage = storage
        self.project_id = project_id
        self.trainer = trainer
        self.policy = policy or MaturityPolicy()
        self.config = config or LoopConfig()
        self.trainer_config = trainer_config or {}
        self.snapshots = SnapshotStore(storage, project_id)
        self.monitor = DriftMonitor(
            baseline_size=self.config.drift_baseline,
            window_size=self.config.drift_window,
            alpha=self.config.drift_alpha,
        )
        self.state = None
        self.trained_ids = set()
        self.replay_ids = []
        self.best_replay_metric = None
        self.mix_replay = False
        self._resume()

    # Persistence --------------------------------------------------------

    def _state_record_id(self):
        return f"loop:{self.project_id}"

    def _resume(self):
        rec = self.storage.records.get("models", self._state_record_id())
        latest = self.snapshots.latest()
        if latest is not None:
            self.state = self.trainer.deserialize(self.snapshots.load_state(latest))
        else:
            self.state = self.trainer.init(self.trainer_config)
        if rec is not None:
            self.trained_ids = set(rec.get("trained_ids", []))
            self.replay_ids = list(rec.get("replay_ids", []))
            self.best_replay_metric = rec.get("best_replay_metric")
            self.mix_replay = bool(rec.get("mix_replay", False))
            self.monitor.load_state(rec.get("drift", {}))

    def _persist(self):
        self.storage.records.upsert(
            "models",
            {
                "id": self._state_record_id(),
                "project_id": self.project_id,
                "kind": "loop_state",
                "trained_ids": sorted(self.trained_ids),
                "replay_ids": list(self.replay_ids),
                "best_replay_metric": self.best_replay_metric,
                "mix_replay": self.mix_replay,
                "drift": self.monitor.state_dict(),
            },
        )

    # Data access --------------------------------------------------------

    def _signed_off_annotations(self):
        return self.storage.records.query(
            RecordQuery(
                "annotations",
                predicates=[
                    ("project_id", "eq", self.project_id),
                    ("signed_off", "eq", 1),
                    ("synthetic", "eq", 0),
                ],
                order_by="signed_off_at",
            )
        )

    def _load_example(self, ann_record):
        data = self.storage.blobs.get(
            BlobKey("masks", f"ann/{ann_record['id']}", ann_record["blob_version"])
        )
        ann = AnnotationSet.from_json_dict(json.loads(data.decode("utf-8")))
        volume = load_volume(self.storage, ann_record["series_id"])
        if volume is None or not ann.masks:
            return None
        return TrainingExample(
            series_id=ann_record["series_id"],
            volume=volume,
            mask=ann.masks[0],
            labels=tuple(ann.all_label_values()),
        )

    def _split(self, records):
        train, validation = [], []
        for rec in records:
            if is_validation_series(rec["series_id"], self.policy.validation_fraction):
                validation.append(rec)
            else:
                train.append(rec)
        return train, validation

    def _evaluate(self, records):
        """Mean policy metric of current predictions over the given rows."""
        metric_fn = METRICS[self.policy.metric_name]
        scores = []
        for rec in records:
            ex = self._load_example(rec)
            if ex is None:
                continue
            pred = self.trainer.predict(self.state, ex.volume)
            predicted = pred.masks[0] if pred.masks else None
            if predicted is None:
                scores.append(0.0)
            else:
                scores.append(metric_fn(predicted, ex.mask))
        return sum(scores) / len(scores) if scores else None

    # One iteration ------------------------------------------------------

    def step(self):
        """Pull newly signed-off work, train, evaluate, snapshot, guard."""
        q = training_queue(self.project_id)
        while True:  # drain sign-off notifications; the table scan is the source of truth
            msg = self.storage.queue.receive(q, visibility_timeout=5.0)
            if msg is None:
                break
            self.storage.queue.ack(q, msg.job_id)

        all_signed = self._signed_off_annotations()
        train_rows, validation_rows = self._split(all_signed)
        new_rows = [r for r in train_rows if r["id"] not in self.trained_ids]
        if not new_rows:
            return {"event": "idle"}
        new_rows = new_rows[: self.config.batch_limit]

        batch = []
        for rec in new_rows:
            ex = self._load_example(rec)
            if ex is not None:
                batch.append(ex)
            self.trained_ids.add(rec["id"])

        event = {
            "event": "trained",
            "batch": [r["id"] for r in new_rows],
            "metric": None,
            "snapshot_version": None,
            "drifted": False,
            "restored": False,
        }
        if batch:
            fit_batch = list(batch)
            if self.mix_replay:
                fit_batch.extend(self._replay_examples())
            try:
                self.state = self.trainer.fit_increment(self.state, fit_batch)
            except Exception:
                # trainer failure: snapshots are untouched; retry after backoff
                for rec in new_rows:
                    self.trained_ids.discard(rec["id"])
                log.exception("trainer failure in project %s; backing off", self.project_id)
                time.sleep(self.config.backoff_seconds)
                return {"event": "trainer_error"}

        metric_value = self._evaluate(validation_rows)
        event["metric"] = metric_value
        if metric_value is not None:
            snap = self.snapshots.snapshot_if_best(
                self.trainer.serialize(self.state),
                self.policy.metric_name,
                metric_value,
                trained_on=sorted(self.trained_ids),
            )
            if snap is not None:
                event["snapshot_version"] = snap["version"]
                if not self.replay_ids:
                    # freeze the replay set at the first snapshot
                    self.replay_ids = [r["id"] for r in new_rows][: self.config.replay_size]

        for rec in new_rows:
            ann_labels = rec.get("labels_summary", [])
            self.monitor.observe(ann_labels)
        drift = self.monitor.check()
        if drift is not None and drift.drifted:
            event["drifted"] = True
            self._freeze_and_reinit(drift)
        else:
            restored = self._forgetting_guard()
            event["restored"] = restored

        self.storage.records.append(
            "events",
            {
                "kind": "training_batch",
                "project_id": self.project_id,
                "annotation_ids": event["batch"],
                "metric": metric_value,
                "snapshot_version": event["snapshot_version"],
                "drifted": event["drifted"],
                "restored": event["restored"],
            },
        )
        self._persist()
        return event

    def _replay_examples(self):
        rows = [self.storage.records.get("annotations", rid) for rid in self.replay_ids]
        out = []
        for rec in rows:
            if rec is None:
                continue
            ex = self._load_example(rec)
            if ex is not None:
                out.append(ex)
        return out

    def _forgetting_guard(self):
        """Restore the best snapshot if the replay metric collapses."""
        if not self.replay_ids:
            return False
        rows = [self.storage.records.get("annotations", rid) for rid in self.replay_ids]
        replay_metric = self._evaluate([r for r in rows if r is not None])
        if replay_metric is None:
            return False
        if self.best_replay_metric is None or replay_metric > self.best_replay_metric:
            self.best_replay_metric = replay_metric
            return False
        if replay_metric < (1.0 - self.config.forgetting_delta) * self.best_replay_metric:
            best = self.snapshots.best()
            if best is not None:
                self.state = self.trainer.deserialize(self.snapshots.load_state(best))
            self.mix_replay = True
            self.storage.records.append(
                "events",
                {
                    "kind": "forgetting_restore",
                    "project_id": self.project_id,
                    "replay_metric": replay_metric,
                    "best_replay_metric": self.best_replay_metric,
                },
            )
            return True
        return False

    def _freeze_and_reinit(self, drift):
        """Freeze the current best snapshot and retrain on the full cohort."""
        best = self.snapshots.best()
        if best is not None:
            self.snapshots.freeze(best)
        self.storage.records.append(
            "events",
            {
                "kind": "drift_freeze",
                "project_id": self.project_id,
                "statistic": drift.statistic,
                "p_value": drift.p_value,
            },
        )
        self.state = self.trainer.init(self.trainer_config)
        train_rows, _validation = self._split(self._signed_off_annotations())
        full = [self._load_example(r) for r in train_rows]
        full = [ex for ex in full if ex is not None]
        if full:
            self.state = self.trainer.fit_increment(self.state, full)
        self.trained_ids = {r["id"] for r in train_rows}
        self.monitor.reset_baseline()

    def run(self, stop_event, idle_wait=0.25):
        """Supervised never-returning loop; trainer errors back off and retry."""
        while not stop_event.is_set():
            try:
                event = self.step()
            except Exception:
                log.exception("loop error in project %s", self.project_id)
                stop_event.wait(self.config.backoff_seconds)
                continue
            if event["event"] in ("idle", "trainer_error"):
                stop_event.wait(idle_wait)
