"""Write paths for series and annotations, shared by the API and tests.

Annotation versioning is optimistic: the version-(n+1) blob write is the
arbiter (versions are write-once), so of two concurrent uploads exactly one
wins and the loser sees a conflict. Sign-off re-validates against the
project template and only then releases the annotation to training by
posting to the project's training queue.
"""

from __future__ import annotations

import dataclasses
import json
import time
import uuid

from radstack.core.annotation import AnnotationSet, validate_annotation
from radstack.ingestion.inbox import SERIES_INGESTED_QUEUE
from radstack.learning.loop import training_queue
from radstack.storage import BlobConflictError, BlobKey


class VersionConflictError(ValueError):
    """Someone else already wrote this annotation version."""


class IncompleteAnnotationError(ValueError):
    def __init__(self, report):
        super().__init__("annotation incomplete per template")
        self.report = report


class NotIngestedError(KeyError):
    """Annotation attempted for a series without an assembled volume."""


def register_series(storage, series_id, volume, safe=None, phi=None, study_id=""):
    """Store a volume directly (test seeding and benchmark corpora); the
    DICOM path in radstack.ingestion.inbox writes the same shape."""
    storage.blobs.put(BlobKey("volumes", series_id, 1), volume.to_bytes())
    nz, ny, nx = volume.dims
    storage.records.upsert(
        "series",
        {
            "id": series_id,
            "study_id": study_id or f"study-{series_id}",
            "dims": [nz, ny, nx],
            "spacing_mm": list(volume.spacing_mm),
            "orientation": list(volume.orientation),
            "rescale": list(volume.rescale),
            "volume_blob_version": 1,
            "ingested_at": time.time(),
            **(safe or {}),
        },
        phi=phi or {},
    )
    storage.records.append("events", {"kind": "series_ingested", "series_id": series_id, "slices": nz})
    storage.queue.send(SERIES_INGESTED_QUEUE, {"series_id": series_id}, job_type=SERIES_INGESTED_QUEUE)
    return series_id


def save_annotation(storage, project_id, ann: AnnotationSet, ann_id=None, base_version=0,
                    synthetic=False):
    """Store a new annotation version; returns the updated record.

    Refuses series that have not been ingested (annotation strictly follows
    ingestion). base_version must match the current version; the blob write
    for version base+1 is atomic, so concurrent uploads cannot both win.
    """
    series_id = ann.target[1]
    series = storage.records.get("series", series_id)
    if series is None:
        raise NotIngestedError(f"series {series_id!r} has no assembled volume")

    if ann_id is None:
        ann_id = uuid.uuid4().hex
        current = None
    else:
        current = storage.records.get("annotations", ann_id)
    current_version = current["version"] if current else 0
    if base_version != current_version:
        raise VersionConflictError(
            f"annotation {ann_id} is at version {current_version}, upload based on {base_version}"
        )
    if current and current.get("signed_off"):
        raise VersionConflictError(f"annotation {ann_id} is signed off; reopen required")

    new_version = base_version + 1
    stored = AnnotationSet(
        target=ann.target,
        author=ann.author,
        study_labels=ann.study_labels,
        series_labels=ann.series_labels,
        slice_labels=ann.slice_labels,
        boxes=ann.boxes,
        masks=ann.masks,
        version=new_version,
        signed_off=False,
        machine_proposed=ann.machine_proposed,
        model_version=ann.model_version,
    )
    payload = json.dumps(stored.to_json_dict(), sort_keys=True).encode("utf-8")
    try:
        storage.blobs.put(BlobKey("masks", f"ann/{ann_id}", new_version), payload)
    except BlobConflictError:
        raise VersionConflictError(
            f"annotation {ann_id} version {new_version} was written concurrently"
        ) from None

    record = {
        "id": ann_id,
        "series_id": series_id,
        "study_id": series.get("study_id", ""),
        "project_id": project_id,
        "author": ann.author,
        "version": new_version,
        "blob_version": new_version,
        "signed_off": False,
        "signed_off_at": None,
        "machine_proposed": ann.machine_proposed,
        "model_version": ann.model_version,
        "synthetic": bool(synthetic),
        "labels_summary": list(stored.all_label_values()),
        "updated_at": time.time(),
    }
    storage.records.upsert("annotations", record)
    return record


def get_annotation(storage, ann_id):
    record = storage.records.get("annotations", ann_id)
    if record is None:
        return None, None
    data = storage.blobs.get(BlobKey("masks", f"ann/{ann_id}", record["blob_version"]))
    ann = AnnotationSet.from_json_dict(json.loads(data.decode("utf-8")))
    if record["signed_off"] and not ann.signed_off:
        # the stored blob is immutable; the sign-off flag lives on the record
        ann = dataclasses.replace(ann, signed_off=True)
    return record, ann


def sign_off_annotation(storage, ann_id, template):
    """Finalize a version and release it to training.

    Permitted only when the completeness report is empty; the check runs
    against the series' slice count so required slice-level fields must
    cover every slice.
    """
    record, ann = get_annotation(storage, ann_id)
    if record is None:
        raise KeyError(f"annotation {ann_id!r} not found")
    series = storage.records.get("series", record["series_id"])
    n_slices = series["dims"][0] if series else None
    report = validate_annotation(ann, template, n_slices=n_slices)
    if not report.empty:
        raise IncompleteAnnotationError(report)

    record = dict(record)
    record.pop("_version", None)
    record["signed_off"] = True
    record["signed_off_at"] = time.time()
    storage.records.upsert("annotations", record)
    storage.records.append(
        "events",
        {
            "kind": "annotation_signed",
            "annotation_id": ann_id,
            "project_id": record["project_id"],
            "series_id": record["series_id"],
            "version": record["version"],
        },
    )
    if not record.get("synthetic"):
        storage.queue.send(
            training_queue(record["project_id"]),
            {"annotation_id": ann_id},
            job_type="training_event",
        )
    return {"annotation_id": ann_id, "version": record["version"], "signed_off": True}
