"""File-drop ingestion: the desk-scale stand-in for a DICOM node's pull.

Files appearing under the inbox directory are grouped by series, staged, and
enqueued as ingest jobs; the ingest worker assembles each group into a
volume, stores it, and announces availability so open cohorts pick the
series up with no manual step (ingestion always precedes annotation).
"""

from __future__ import annotations

import logging
import shutil
import time
from pathlib import Path

from radstack.ingestion.anonymize import InclusionList
from radstack.ingestion.dicomio import parse_dicom
from radstack.ingestion.series import assemble_series
from radstack.storage import BlobConflictError, BlobKey

log = logging.getLogger(__name__)

INGEST_QUEUE = "ingest_series"
SERIES_INGESTED_QUEUE = "series_ingested"


def scan_inbox(storage, inbox_dir, staging_dir=None):
    """Group inbox files by series, stage them, enqueue one job per group.

    Unparseable files are moved aside to <inbox>/rejected rather than
    blocking the scan. Returns the enqueued job ids.
    """
    inbox = Path(inbox_dir)
    inbox.mkdir(parents=True, exist_ok=True)
    staging = Path(staging_dir) if staging_dir else inbox.parent / "staging"
    rejected = inbox / "rejected"

    groups = {}
    for path in sorted(inbox.glob("*.dcm")):
        try:
            ds = parse_dicom(path.read_bytes())
        except Exception as exc:
            log.warning("rejecting %s: %s", path.name, exc)
            rejected.mkdir(parents=True, exist_ok=True)
            shutil.move(str(path), rejected / path.name)
            continue
        groups.setdefault(ds["SeriesInstanceUID"], []).append(path)

    job_ids = []
    for series_uid, paths in groups.items():
        batch_dir = staging / f"batch_{int(time.time() * 1000)}_{len(job_ids)}"
        batch_dir.mkdir(parents=True, exist_ok=True)
        staged = []
        for p in paths:
            target = batch_dir / p.name
            shutil.move(str(p), target)
            staged.append(str(target))
        job_ids.append(
            storage.queue.send(
                INGEST_QUEUE,
                {"files": staged},
                job_type=INGEST_QUEUE,
            )
        )
    return job_ids


def ingest_series_files(storage, file_paths, inclusion: InclusionList | None = None,
                        timings=None):
    """Parse, assemble, and persist one series; returns its series id.

    Idempotent: a series whose volume blob already exists is left untouched.
    When a timings dict is supplied, the phase costs are recorded there for
    the throughput benchmark (parse_s per slice, assemble_s, blob_s,
    records_s).
    """
    t_all = time.perf_counter()
    datasets = []
    parse_s = []
    for path in file_paths:
        ts = time.perf_counter()
        datasets.append(parse_dicom(Path(path).read_bytes()))
        parse_s.append(time.perf_counter() - ts)

    ts = time.perf_counter()
    volume, meta = assemble_series(datasets, inclusion)
    assemble_s = time.perf_counter() - ts

    series_id = persist_series(storage, volume, meta,
                               ingest_seconds=time.perf_counter() - t_all,
                               timings=timings)
    if timings is not None:
        timings["parse_s"] = parse_s
        timings["assemble_s"] = assemble_s
        timings["total_s"] = time.perf_counter() - t_all
    return series_id


def persist_series(storage, volume, meta, ingest_seconds=None, timings=None):
    """Store an assembled series (blob, records, availability event)."""
    series_id = meta.series_uid_hash
    study_id = meta.safe["study_uid_hash"]

    ts = time.perf_counter()
    key = BlobKey("volumes", series_id, 1)
    try:
        storage.blobs.put(key, volume.to_bytes())
    except BlobConflictError:
        log.info("series %s already ingested; skipping", series_id)
        return series_id
    if timings is not None:
        timings["blob_s"] = time.perf_counter() - ts

    ts = time.perf_counter()
    nz, ny, nx = volume.dims
    storage.records.upsert(
        "series",
        {
            "id": series_id,
            "study_id": study_id,
            "dims": [nz, ny, nx],
            "spacing_mm": list(volume.spacing_mm),
            "orientation": list(volume.orientation),
            "rescale": list(volume.rescale),
            "volume_blob_version": 1,
            "ingested_at": time.time(),
            "ingest_seconds": ingest_seconds,
            "ingest_seconds_per_slice": ingest_seconds / nz if ingest_seconds else None,
            "provenance": list(meta.provenance),
            **meta.safe,
        },
        phi=dict(meta.phi),
    )
    storage.records.upsert(
        "studies",
        {"id": study_id, "series_ids": [series_id]},
    )
    storage.records.append(
        "events",
        {"kind": "series_ingested", "series_id": series_id, "slices": nz},
    )
    storage.queue.send(
        SERIES_INGESTED_QUEUE, {"series_id": series_id}, job_type=SERIES_INGESTED_QUEUE
    )
    if timings is not None:
        timings["records_s"] = time.perf_counter() - ts
    return series_id


def load_volume(storage, series_id):
    """Rehydrate a VolumeTensor from the series record plus its blob."""
    from radstack.core.volume import VolumeTensor

    rec = storage.records.get("series", series_id)
    if rec is None:
        return None
    data = storage.blobs.get(BlobKey("volumes", series_id, rec["volume_blob_version"]))
    return VolumeTensor.from_bytes(
        data,
        tuple(rec["dims"]),
        tuple(rec["spacing_mm"]),
        tuple(rec["orientation"]),
        tuple(rec["rescale"]),
    )
