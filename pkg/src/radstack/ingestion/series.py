"""Stacking parsed slices into volumes and translating volumes back out."""

from __future__ import annotations

import numpy as np

from radstack.core.metadata import MetadataRecord
from radstack.core.volume import VolumeTensor
from radstack.ingestion.anonymize import InclusionList, hash_to_dicom_uid, hash_uid
from radstack.ingestion.dicomio import serialize_dataset

# Fields that are constant across a well-formed series and must agree.
_CONSISTENT_FIELDS = (
    "Rows",
    "Columns",
    "PixelSpacing",
    "ImageOrientationPatient",
    "BitsAllocated",
    "PixelRepresentation",
    "RescaleSlope",
    "RescaleIntercept",
    "Modality",
)

_PHI_EXPORT_FIELDS = ("PatientName", "PatientID", "StudyDate", "AccessionNumber", "InstitutionName")


class InconsistentSeriesError(ValueError):
    """Slices disagree on geometry or identity; the message lists offenders."""


class DuplicateSliceError(ValueError):
    pass


class ExportError(ValueError):
    pass


def _slice_position_along_normal(ds):
    pos = np.array(ds["ImagePositionPatient"], dtype=float)
    orient = np.array(ds["ImageOrientationPatient"], dtype=float)
    normal = np.cross(orient[:3], orient[3:])
    return float(pos @ normal)


def assemble_series(datasets, inclusion: InclusionList | None = None):
    """Order slices along the normal and stack them into a VolumeTensor.

    Intensities are stored post rescale (slope * raw + intercept) as signed
    16-bit. Metadata is split on the spot: inclusion-list fields plus hashed
    UIDs into the safe partition, everything else retained as PHI.
    """
    if not datasets:
        raise InconsistentSeriesError("no slices supplied")
    inclusion = inclusion or InclusionList.default()

    series_uids = {ds["SeriesInstanceUID"] for ds in datasets}
    if len(series_uids) != 1:
        raise InconsistentSeriesError(f"mixed SeriesInstanceUID values: {sorted(series_uids)}")

    first = datasets[0]
    for ds in datasets[1:]:
        for field in _CONSISTENT_FIELDS:
            if ds[field] != first[field]:
                raise InconsistentSeriesError(
                    f"instance {ds['SOPInstanceUID']} disagrees on {field}: "
                    f"{ds[field]!r} != {first[field]!r}"
                )

    keyed = sorted(
        datasets, key=lambda ds: (_slice_position_along_normal(ds), ds["InstanceNumber"])
    )
    positions = [_slice_position_along_normal(ds) for ds in keyed]
    for a, b, ds in zip(positions, positions[1:], keyed[1:]):
        if abs(b - a) < 1e-6:
            raise DuplicateSliceError(
                f"instance {ds['SOPInstanceUID']} duplicates slice position {b:g} mm"
            )

    rows, cols = first["Rows"], first["Columns"]
    slope = first["RescaleSlope"][0]
    intercept = first["RescaleIntercept"][0]
    signed = first["PixelRepresentation"] == 1
    raw_dtype = "<i2" if signed else "<u2"

    slices = []
    for ds in keyed:
        raw = np.frombuffer(ds["PixelData"], dtype=raw_dtype).reshape(rows, cols)
        scaled = raw.astype(np.float64) * slope + intercept
        slices.append(np.clip(np.rint(scaled), -32768, 32767).astype(np.int16))
    voxels = np.stack(slices, axis=0)

    if len(keyed) > 1:
        dz = float(np.mean(np.diff(positions)))
    else:
        dz = float(first["SliceThickness"][0])
    ps = first["PixelSpacing"]
    spacing = (dz, float(ps[0]), float(ps[1]))
    orientation = tuple(float(c) for c in first["ImageOrientationPatient"])

    volume = VolumeTensor(voxels, spacing, orientation, rescale=(slope, intercept))

    series_hash = hash_uid(first["SeriesInstanceUID"])
    study_hash = hash_uid(first["StudyInstanceUID"])
    safe, phi = {}, {}
    origin = keyed[0]["ImagePositionPatient"]
    # per-slice fields (position, instance number) are taken from the sorted
    # first slice so re-ingesting an export reproduces the same record
    for name, value in keyed[0].named_items().items():
        if name == "SOPClassUID":
            continue  # protocol constant, not metadata
        if name == "ImagePositionPatient":
            value = list(origin)
        if name in inclusion.allowed:
            safe[name] = value
        else:
            phi[name] = value
    safe["study_uid_hash"] = study_hash
    safe["slice_count"] = len(keyed)
    provenance = tuple(
        f"{ds['SOPInstanceUID']}#{ds['InstanceNumber']}" for ds in keyed
    )
    meta = MetadataRecord(series_uid_hash=series_hash, safe=safe, phi=phi, provenance=provenance)
    return volume, meta


def export_dicom(volume, meta, out_dir, phi_grant=False):
    """Write the volume back out as one subset file per slice.

    With a PHI grant the original identifying tags and UIDs are restored,
    and re-ingesting the file set reproduces the volume bit-exactly. Without
    a grant, PHI tags are omitted entirely and UIDs are replaced by their
    hash-derived forms; such exports are for outside consumers and do not
    re-enter the strict ingest path.
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    nz, ny, nx = volume.dims
    slope, intercept = volume.rescale
    if slope == 0:
        raise ExportError("rescale slope of zero cannot be inverted")
    raw = (volume.voxels.astype(np.float64) - intercept) / slope
    raw_int = np.rint(raw)
    if not np.allclose(raw, raw_int, atol=1e-6):
        raise ExportError("rescale does not invert to integral raw values")
    signed = int(meta.safe.get("PixelRepresentation", 1)) == 1
    lo, hi = (-32768, 32767) if signed else (0, 65535)
    if raw_int.min() < lo or raw_int.max() > hi:
        raise ExportError(f"raw values outside {'signed' if signed else 'unsigned'} 16-bit range")
    raw_dtype = "<i2" if signed else "<u2"
    raw_int = raw_int.astype(raw_dtype)

    if phi_grant:
        series_uid = meta.phi.get("SeriesInstanceUID")
        study_uid = meta.phi.get("StudyInstanceUID")
        if not series_uid or not study_uid:
            raise ExportError("PHI partition lacks original UIDs; cannot export with grant")
    else:
        series_uid = hash_to_dicom_uid(meta.series_uid_hash)
        study_uid = hash_to_dicom_uid(hash_uid(meta.safe.get("study_uid_hash", "unknown")))

    normal = volume.slice_normal()
    origin = np.array(
        meta.safe.get("ImagePositionPatient", [0.0, 0.0, 0.0]), dtype=float
    )
    dz = volume.spacing_mm[0]
    sop_uids = []
    if phi_grant and len(meta.provenance) == nz:
        sop_uids = [entry.split("#")[0] for entry in meta.provenance]

    paths = []
    for k in range(nz):
        position = origin + normal * (dz * k)
        sop_uid = sop_uids[k] if sop_uids else hash_to_dicom_uid(hash_uid(f"{series_uid}/{k}"))
        fields = {
            "SOPInstanceUID": sop_uid,
            "SOPClassUID": "1.2.840.10008.5.1.4.1.1.2",
            "Modality": meta.safe.get("Modality", "CT"),
            "StudyInstanceUID": study_uid,
            "SeriesInstanceUID": series_uid,
            "InstanceNumber": k + 1,
            "Rows": ny,
            "Columns": nx,
            "BitsAllocated": 16,
            "PixelRepresentation": 1 if signed else 0,
            "PixelSpacing": [volume.spacing_mm[1], volume.spacing_mm[2]],
            "SliceThickness": meta.safe.get("SliceThickness", [dz]),
            "ImagePositionPatient": [round(p, 6) for p in position],
            "ImageOrientationPatient": list(volume.orientation),
            "RescaleIntercept": [intercept],
            "RescaleSlope": [slope],
        }
        if "BodyPartExamined" in meta.safe:
            fields["BodyPartExamined"] = meta.safe["BodyPartExamined"]
        if phi_grant:
            for name in _PHI_EXPORT_FIELDS:
                if name in meta.phi:
                    fields[name] = meta.phi[name]
        payload = raw_int[k].tobytes()
        data = serialize_dataset(fields, payload, sop_uid)
        path = out_dir / f"{meta.series_uid_hash}_{k + 1:04d}.dcm"
        path.write_bytes(data)
        paths.append(path)
    return paths
