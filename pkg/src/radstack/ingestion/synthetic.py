"""Synthetic DICOM corpus generator for tests, benchmarks, and demos.

Produces subset-conformant chest-CT-shaped series (3 mm slice thickness and
interval by default) with deterministic PHI sentinel values and optional
bright-sphere content whose ground-truth mask is returned for training
corpora.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from radstack.ingestion.dicomio import serialize_dataset

UID_ROOT = "1.2.826.0.1.3680043.10.424"


@dataclass
class SeriesSpec:
    index: int = 0
    n_slices: int = 12
    rows: int = 64
    cols: int = 64
    slice_thickness_mm: float = 3.0
    slice_interval_mm: float = 3.0
    pixel_spacing: tuple = (0.7, 0.7)
    modality: str = "CT"
    body_part: str | None = "CHEST"
    rescale_slope: float = 1.0
    rescale_intercept: float = -1024.0
    pixel_representation: int = 0  # unsigned raw, CT-style
    content: str = "noise"  # noise | sphere
    background_range: tuple = (-200, 100)
    sphere_range: tuple = (300, 500)
    sphere_radius_frac: float = 0.3
    patient_name: str = ""
    patient_id: str = ""
    study_date: str | None = "20240101"
    accession: str | None = None
    institution: str | None = None
    shuffle_slices: bool = True


@dataclass
class GeneratedSeries:
    files: list  # file payloads, possibly shuffled relative to z order
    series_uid: str
    study_uid: str
    spec: SeriesSpec
    voxels: np.ndarray  # expected post-rescale int16, z-ascending
    sphere_mask: np.ndarray | None = None


def _uid(*parts):
    return ".".join([UID_ROOT, *[str(p) for p in parts]])


def generate_series(spec: SeriesSpec, rng) -> GeneratedSeries:
    series_uid = _uid(spec.index, "2", rng.integers(1, 10**9))
    study_uid = _uid(spec.index, "1", rng.integers(1, 10**9))
    name = spec.patient_name or f"PHINAME^{spec.index:04d}"
    pid = spec.patient_id or f"PHI-ID-{spec.index:04d}"

    lo, hi = spec.background_range
    stored = rng.integers(lo, hi + 1, size=(spec.n_slices, spec.rows, spec.cols)).astype(np.int64)
    sphere = None
    if spec.content == "sphere":
        zz, yy, xx = np.mgrid[0 : spec.n_slices, 0 : spec.rows, 0 : spec.cols]
        center = np.array([spec.n_slices / 2, spec.rows / 2, spec.cols / 2])
        center += rng.uniform(-0.15, 0.15, size=3) * center
        radius = spec.sphere_radius_frac * min(spec.n_slices, spec.rows, spec.cols) / 2 * 2
        dist = np.sqrt(
            ((zz - center[0]) * (spec.slice_interval_mm / spec.pixel_spacing[0])) ** 2
            + (yy - center[1]) ** 2
            + (xx - center[2]) ** 2
        )
        sphere = dist <= radius
        s_lo, s_hi = spec.sphere_range
        stored[sphere] = rng.integers(s_lo, s_hi + 1, size=int(sphere.sum()))

    # keep the raw (pre-rescale) values representable in the chosen raw type
    raw = (stored - spec.rescale_intercept) / spec.rescale_slope
    raw = np.rint(raw).astype(np.int64)
    if spec.pixel_representation == 0:
        raw = np.clip(raw, 0, 65535)
        raw_typed = raw.astype("<u2")
    else:
        raw = np.clip(raw, -32768, 32767)
        raw_typed = raw.astype("<i2")
    stored = np.clip(
        np.rint(raw * spec.rescale_slope + spec.rescale_intercept), -32768, 32767
    ).astype(np.int16)

    files = []
    order = list(range(spec.n_slices))
    if spec.shuffle_slices:
        rng.shuffle(order)
    for k in order:
        sop_uid = _uid(spec.index, "3", k + 1)
        fields = {
            "SOPInstanceUID": sop_uid,
            "SOPClassUID": "1.2.840.10008.5.1.4.1.1.2",
            "Modality": spec.modality,
            "PatientName": name,
            "PatientID": pid,
            "StudyInstanceUID": study_uid,
            "SeriesInstanceUID": series_uid,
            "InstanceNumber": k + 1,
            "Rows": spec.rows,
            "Columns": spec.cols,
            "BitsAllocated": 16,
            "PixelRepresentation": spec.pixel_representation,
            "PixelSpacing": list(spec.pixel_spacing),
            "SliceThickness": [spec.slice_thickness_mm],
            "ImagePositionPatient": [0.0, 0.0, k * spec.slice_interval_mm],
            "ImageOrientationPatient": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            "RescaleIntercept": [spec.rescale_intercept],
            "RescaleSlope": [spec.rescale_slope],
        }
        if spec.body_part:
            fields["BodyPartExamined"] = spec.body_part
        if spec.study_date:
            fields["StudyDate"] = spec.study_date
        if spec.accession:
            fields["AccessionNumber"] = spec.accession
        if spec.institution:
            fields["InstitutionName"] = spec.institution
        files.append(serialize_dataset(fields, raw_typed[k].tobytes(), sop_uid))

    return GeneratedSeries(
        files=files,
        series_uid=series_uid,
        study_uid=study_uid,
        spec=spec,
        voxels=stored,
        sphere_mask=sphere,
    )


def corpus_specs(n_series=50, seed=7, n_slices=12, rows=64, cols=64, content="noise"):
    """Chest-CT-shaped corpus with randomized optional tags per series."""
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(n_series):
        specs.append(
            SeriesSpec(
                index=i,
                n_slices=n_slices,
                rows=rows,
                cols=cols,
                content=content,
                body_part="CHEST" if rng.random() < 0.7 else None,
                study_date="20240101" if rng.random() < 0.8 else None,
                accession=f"PHI-ACC-{i:04d}" if rng.random() < 0.5 else None,
                institution=f"PHI Hospital {i}" if rng.random() < 0.3 else None,
            )
        )
    return specs


def write_corpus(out_dir, specs, seed=7):
    """Write one .dcm file per slice; returns the GeneratedSeries list."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    generated = []
    for spec in specs:
        gs = generate_series(spec, rng)
        for j, payload in enumerate(gs.files):
            (out_dir / f"series{spec.index:04d}_{j:04d}.dcm").write_bytes(payload)
        generated.append(gs)
    return generated
