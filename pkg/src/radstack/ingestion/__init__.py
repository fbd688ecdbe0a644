"""DICOM subset in/out: parsing, series assembly, PHI segregation, exports.

The supported interchange subset is explicit-VR little-endian, uncompressed
16-bit grayscale, one slice per file. Everything else is refused loudly
rather than normalized silently.
"""

from radstack.ingestion.dicomio import (
    CorruptDicomError,
    DicomDataset,
    IncompleteDatasetError,
    NotDicomError,
    UnsupportedFormatError,
    parse_dicom,
    serialize_dataset,
)
from radstack.ingestion.anonymize import (
    DEFAULT_INCLUSION_FIELDS,
    InclusionList,
    anonymize,
    hash_uid,
)
from radstack.ingestion.series import (
    DuplicateSliceError,
    InconsistentSeriesError,
    ExportError,
    assemble_series,
    export_dicom,
)
from radstack.ingestion.sr import read_structured_report, export_structured_report
from radstack.ingestion.inbox import ingest_series_files, scan_inbox

__all__ = [
    "parse_dicom",
    "serialize_dataset",
    "DicomDataset",
    "NotDicomError",
    "UnsupportedFormatError",
    "IncompleteDatasetError",
    "CorruptDicomError",
    "InclusionList",
    "DEFAULT_INCLUSION_FIELDS",
    "anonymize",
    "hash_uid",
    "assemble_series",
    "export_dicom",
    "InconsistentSeriesError",
    "DuplicateSliceError",
    "ExportError",
    "export_structured_report",
    "read_structured_report",
    "scan_inbox",
    "ingest_series_files",
]
