"""Best-snapshot retention: persisted model versions form exactly the prefix
maxima of the validation metric sequence."""

from __future__ import annotations

import time

from radstack.storage import BlobKey
from radstack.storage.records import RecordQuery


class SnapshotStore:
    def __init__(self, storage, project_id, model_id="model"):
        self.storage = storage
        self.project_id = project_id
        self.model_id = model_id

    def _record_id(self, version):
        return f"{self.project_id}:{self.model_id}:v{version:06d}"

    def _blob_id(self):
        return f"{self.project_id}/{self.model_id}"

    def list(self):
        rows = self.storage.records.query(
            RecordQuery(
                "models",
                predicates=[
                    ("project_id", "eq", self.project_id),
                    ("model_id", "eq", self.model_id),
                ],
                order_by="version",
            )
        )
        return rows

    def latest(self):
        rows = self.list()
        return rows[-1] if rows else None

    def best(self):
        """Highest-fidelity snapshot: argmax of the policy metric."""
        rows = self.list()
        if not rows:
            return None
        return max(rows, key=lambda r: (r["metric_value"], r["version"]))

    def snapshot_if_best(self, state_bytes, metric_name, metric_value, trained_on=()):
        """Persist a snapshot iff the metric strictly improves on best-so-far.

        The weights blob is written before the record, so a failure between
        the two leaves no dangling record (the orphan blob is harmless and
        content-addressed storage deduplicates a rewrite).
        """
        best = self.best()
        if best is not None and metric_value <= best["metric_value"]:
            return None
        latest = self.latest()
        version = (latest["version"] + 1) if latest else 1
        key = BlobKey("models", self._blob_id(), version)
        self.storage.blobs.put(key, state_bytes)
        record = {
            "id": self._record_id(version),
            "project_id": self.project_id,
            "model_id": self.model_id,
            "version": version,
            "metric_name": metric_name,
            "metric_value": float(metric_value),
            "weights_namespace": key.namespace,
            "weights_id": key.id,
            "weights_version": key.version,
            "trained_on": list(trained_on),
            "frozen": False,
            "created_at": time.time(),
        }
        self.storage.records.upsert("models", record)
        self.storage.records.append(
            "events",
            {
                "kind": "model_snapshot",
                "project_id": self.project_id,
                "version": version,
                "metric_value": float(metric_value),
            },
        )
        return record

    def load_state(self, record) -> bytes:
        key = BlobKey(record["weights_namespace"], record["weights_id"], record["weights_version"])
        return self.storage.blobs.get(key)

    def freeze(self, record):
        """Mark a snapshot frozen (retained and immutable, excluded from
        nothing -- freezing is bookkeeping for the drift response)."""
        rec = self.storage.records.get("models", record["id"])
        rec.pop("_version", None)
        rec["frozen"] = True
        self.storage.records.upsert("models", rec)
        self.storage.records.append(
            "events",
            {"kind": "model_frozen", "project_id": self.project_id, "version": rec["version"]},
        )
        return rec
