"""DICOM subset parsing, series assembly, anonymization, and exports."""

import numpy as np
import pytest

from radstack.core.metadata import MetadataRecord
from radstack.ingestion import (
    DEFAULT_INCLUSION_FIELDS,
    DuplicateSliceError,
    InclusionList,
    IncompleteDatasetError,
    InconsistentSeriesError,
    NotDicomError,
    UnsupportedFormatError,
    anonymize,
    assemble_series,
    export_dicom,
    export_structured_report,
    hash_uid,
    parse_dicom,
    read_structured_report,
    serialize_dataset,
)
from radstack.ingestion.dicomio import CorruptDicomError
from radstack.ingestion.synthetic import SeriesSpec, corpus_specs, generate_series


def minimal_fields(instance=1, series_uid="1.2.3.4", study_uid="1.2.3", rows=4, cols=4, z=0.0):
    return {
        "SOPInstanceUID": f"{series_uid}.{instance}",
        "Modality": "CT",
        "PatientName": "Doe^Jane",
        "PatientID": "MRN-001",
        "StudyInstanceUID": study_uid,
        "SeriesInstanceUID": series_uid,
        "InstanceNumber": instance,
        "Rows": rows,
        "Columns": cols,
        "BitsAllocated": 16,
        "PixelRepresentation": 1,
        "PixelSpacing": [0.5, 0.5],
        "SliceThickness": [3.0],
        "ImagePositionPatient": [0.0, 0.0, z],
        "ImageOrientationPatient": [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        "RescaleIntercept": [0.0],
        "RescaleSlope": [1.0],
    }


def minimal_file(**kw):
    fields = minimal_fields(**{k: v for k, v in kw.items() if k != "pixels"})
    rows, cols = fields["Rows"], fields["Columns"]
    pixels = kw.get("pixels")
    if pixels is None:
        pixels = np.zeros((rows, cols), dtype="<i2")
    return serialize_dataset(fields, pixels.astype("<i2").tobytes(), fields["SOPInstanceUID"])


class TestParser:
    def test_rows_decodes_as_integer(self):
        ds = parse_dicom(minimal_file(rows=512, cols=4))
        assert ds["Rows"] == 512
        assert isinstance(ds["Rows"], int)

    def test_missing_magic_is_not_dicom(self):
        data = minimal_file()
        broken = data[:128] + b"XXXX" + data[132:]
        with pytest.raises(NotDicomError):
            parse_dicom(broken)
        with pytest.raises(NotDicomError):
            parse_dicom(b"short")

    def test_missing_required_tag_names_it(self):
        fields = minimal_fields()
        del fields["SliceThickness"]
        data = serialize_dataset(fields, b"\x00" * 32, fields["SOPInstanceUID"])
        with pytest.raises(IncompleteDatasetError, match="SliceThickness"):
            parse_dicom(data)

    def test_wrong_transfer_syntax_unsupported(self):
        data = minimal_file()
        implicit = b"1.2.840.10008.1.2\x00"
        explicit = b"1.2.840.10008.1.2.1\x00"
        assert explicit in data
        with pytest.raises(UnsupportedFormatError):
            parse_dicom(data.replace(explicit, implicit + b" ", 1))

    def test_truncated_element_reports_offset(self):
        data = minimal_file()
        with pytest.raises(CorruptDicomError, match="offset"):
            parse_dicom(data[:-10])

    def test_pixel_length_must_match_rows_cols(self):
        fields = minimal_fields(rows=4, cols=4)
        data = serialize_dataset(fields, b"\x00" * 30, fields["SOPInstanceUID"])
        with pytest.raises(CorruptDicomError, match="Rows"):
            parse_dicom(data)

    def test_roundtrip_through_own_writer(self, rng):
        for i in range(25):
            spec = SeriesSpec(
                index=i,
                n_slices=2,
                rows=8,
                cols=8,
                body_part="CHEST" if rng.random() < 0.5 else None,
                study_date="20230505" if rng.random() < 0.5 else None,
                accession=f"A{i}" if rng.random() < 0.5 else None,
            )
            gs = generate_series(spec, rng)
            for payload in gs.files:
                ds = parse_dicom(payload)
                again = serialize_dataset(
                    {k: v for k, v in ds.named_items().items()},
                    ds["PixelData"],
                    ds["SOPInstanceUID"],
                )
                ds2 = parse_dicom(again)
                assert ds2.named_items() == ds.named_items()
                assert ds2["PixelData"] == ds["PixelData"]


class TestAssembly:
    def test_shuffled_slices_sort_by_position(self, rng):
        files = [minimal_file(instance=i + 1, z=float(z)) for i, z in enumerate([0, 3, 6])]
        datasets = [parse_dicom(files[i]) for i in (2, 0, 1)]
        volume, meta = assemble_series(datasets)
        assert volume.dims == (3, 4, 4)
        assert volume.spacing_mm[0] == pytest.approx(3.0)
        assert meta.safe["ImagePositionPatient"] == [0.0, 0.0, 0.0]

    def test_conflicting_rows_rejected(self):
        a = parse_dicom(minimal_file(instance=1, rows=4, cols=4, z=0.0))
        b = parse_dicom(minimal_file(instance=2, rows=8, cols=8, z=3.0))
        with pytest.raises(InconsistentSeriesError, match="Rows"):
            assemble_series([a, b])

    def test_duplicate_positions_rejected(self):
        a = parse_dicom(minimal_file(instance=1, z=0.0))
        b = parse_dicom(minimal_file(instance=2, z=0.0))
        with pytest.raises(DuplicateSliceError):
            assemble_series([a, b])

    def test_mixed_series_uid_rejected(self):
        a = parse_dicom(minimal_file(instance=1, series_uid="1.1", z=0.0))
        b = parse_dicom(minimal_file(instance=2, series_uid="1.2", z=3.0))
        with pytest.raises(InconsistentSeriesError, match="SeriesInstanceUID"):
            assemble_series([a, b])

    def test_rescale_applied_to_stored_values(self, rng):
        spec = SeriesSpec(index=0, n_slices=3, rows=8, cols=8)
        gs = generate_series(spec, rng)
        volume, _ = assemble_series([parse_dicom(f) for f in gs.files])
        assert np.array_equal(volume.voxels, gs.voxels)

    def test_corpus_matches_reference_stacking(self, rng):
        for spec in corpus_specs(n_series=50, seed=11, n_slices=4, rows=8, cols=8):
            gs = generate_series(spec, rng)
            datasets = [parse_dicom(f) for f in gs.files]
            volume, meta = assemble_series(datasets)
            # independent oracle: sort parsed slices by z position, stack raw
            zs = [(ds["ImagePositionPatient"][2], ds) for ds in datasets]
            zs.sort(key=lambda t: t[0])
            expected = np.stack(
                [
                    np.frombuffer(ds["PixelData"], dtype="<u2").reshape(8, 8).astype(np.int64)
                    * ds["RescaleSlope"][0]
                    + ds["RescaleIntercept"][0]
                    for _z, ds in zs
                ]
            ).astype(np.int16)
            assert np.array_equal(volume.voxels, expected)
            assert volume.spacing_mm[0] == pytest.approx(3.0)
            assert meta.safe["Modality"] == "CT"
            assert "PatientName" not in meta.safe
            assert meta.phi["PatientName"].startswith("PHINAME^")


class TestAnonymize:
    def test_patient_name_never_passes(self):
        meta = MetadataRecord(
            series_uid_hash="abc",
            safe={"Modality": "CT"},
            phi={"PatientName": "Doe^Jane"},
        )
        out = anonymize(meta, InclusionList.default())
        assert "PatientName" not in out

    def test_projection_identity_on_safe_fields(self):
        safe = {"Modality": "CT", "Rows": 64, "study_uid_hash": "ff" * 8}
        meta = MetadataRecord(series_uid_hash="abc", safe=safe, phi={})
        out = anonymize(meta, InclusionList.default())
        assert out == {**safe, "series_uid_hash": "abc"}

    def test_inclusion_list_rejects_forbidden_fields(self):
        with pytest.raises(ValueError):
            InclusionList(frozenset({"Modality", "PatientName"}))
        with pytest.raises(ValueError):
            InclusionList(frozenset())

    def test_fuzzed_records_never_leak(self, rng):
        allowed = InclusionList.default()
        tricky = [
            "patientname", "PATIENTNAME", "Patient​Name", "ΡatientName",  # homoglyph rho
            "PatientName ", " PatientName", "Patient_Name", "PatientNames",
        ]
        pool = list(DEFAULT_INCLUSION_FIELDS) + tricky + ["StudyDate", "AccessionNumber"]
        for i in range(10_000):
            n = int(rng.integers(1, 6))
            keys = [str(rng.choice(pool)) for _ in range(n)]
            safe = {k: f"v{i}" for k in keys}
            meta = MetadataRecord(series_uid_hash=f"h{i}", safe=safe, phi={})
            out = anonymize(meta, allowed)
            extra = set(out) - set(DEFAULT_INCLUSION_FIELDS) - {"series_uid_hash"}
            extra = {k for k in extra if not k.endswith("_uid_hash")}
            assert not extra, f"leaked keys: {extra}"

    def test_uid_hash_deterministic_and_collision_free(self, rng):
        uids = [f"1.2.840.{i}.{int(rng.integers(1e9))}" for i in range(5000)]
        hashes = [hash_uid(u) for u in uids]
        assert hashes == [hash_uid(u) for u in uids]
        assert len(set(hashes)) == len(set(uids))


class TestExport:
    def test_ingest_export_ingest_bit_exact(self, rng, tmp_path):
        spec = SeriesSpec(index=3, n_slices=5, rows=16, cols=16)
        gs = generate_series(spec, rng)
        volume, meta = assemble_series([parse_dicom(f) for f in gs.files])
        paths = export_dicom(volume, meta, tmp_path / "out", phi_grant=True)
        assert len(paths) == 5
        volume2, meta2 = assemble_series([parse_dicom(p.read_bytes()) for p in paths])
        assert np.array_equal(volume2.voxels, volume.voxels)
        assert meta2.safe == meta.safe
        assert meta2.series_uid_hash == meta.series_uid_hash

    def test_export_without_grant_has_no_phi_tags(self, rng, tmp_path):
        spec = SeriesSpec(index=4, n_slices=3, rows=8, cols=8, accession="SECRET-ACC")
        gs = generate_series(spec, rng)
        volume, meta = assemble_series([parse_dicom(f) for f in gs.files])
        paths = export_dicom(volume, meta, tmp_path / "anon", phi_grant=False)
        phi_values = [v for v in meta.phi.values() if isinstance(v, str)]
        for p in paths:
            raw = p.read_bytes()
            ds = parse_dicom(raw, require_tags=False)
            for name in ("PatientName", "PatientID", "StudyDate", "AccessionNumber"):
                assert name not in ds
            for value in phi_values:
                assert value.encode() not in raw

    def test_slice_payload_arithmetic(self, rng, tmp_path):
        spec = SeriesSpec(index=5, n_slices=4, rows=512, cols=512)
        gs = generate_series(spec, rng)
        volume, meta = assemble_series([parse_dicom(f) for f in gs.files])
        paths = export_dicom(volume, meta, tmp_path / "big", phi_grant=True)
        for p in paths:
            ds = parse_dicom(p.read_bytes())
            assert len(ds["PixelData"]) == 512 * 512 * 2


class TestStructuredReport:
    def test_empty_findings_valid(self):
        text = export_structured_report("m1", 3, "series-x", [], created_at=123.0)
        doc = read_structured_report(text)
        assert doc["findings"] == []
        assert doc["model_version"] == 3

    def test_box_finding_roundtrip(self):
        finding = {"kind": "box", "label": "nodule", "slice_range": (1, 4), "bounds": (0, 0, 5, 5)}
        text = export_structured_report("m1", 1, "s", [finding], created_at=1.0)
        doc = read_structured_report(text)
        assert doc["findings"][0]["slice_range"] == [1, 4]

    def test_fuzzed_roundtrip(self, rng):
        kinds = ["box", "mask", "label"]
        for i in range(200):
            findings = []
            for _ in range(int(rng.integers(0, 5))):
                kind = kinds[int(rng.integers(0, 3))]
                f = {"kind": kind, "label": f"L{int(rng.integers(0, 9))}"}
                if kind == "box":
                    f["slice_range"] = (int(rng.integers(0, 5)), int(rng.integers(5, 9)))
                    f["bounds"] = tuple(int(v) for v in rng.integers(0, 64, size=4))
                elif kind == "mask":
                    f["mask_ref"] = f"masks/m{i}@v1"
                else:
                    f["value"] = "present"
                if rng.random() < 0.5:
                    f["confidence"] = round(float(rng.random()), 6)
                findings.append(f)
            text = export_structured_report("m", i, f"s{i}", findings, created_at=float(i))
            doc = read_structured_report(text)
            assert text == export_structured_report(
                "m", i, f"s{i}", doc["findings"], created_at=float(i)
            )
