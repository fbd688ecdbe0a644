"""Inclusionary-list anonymization: only fields verified PHI-free pass.

An exclusion list fails open when a new field appears; the inclusion list
fails closed. Identifier fields never pass as-is: UIDs are replaced by
one-way hashes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

# Geometric/technical fields only; configurable per deployment.
DEFAULT_INCLUSION_FIELDS = (
    "Modality",
    "Rows",
    "Columns",
    "BitsAllocated",
    "PixelRepresentation",
    "PixelSpacing",
    "SliceThickness",
    "ImageOrientationPatient",
    "ImagePositionPatient",
    "RescaleSlope",
    "RescaleIntercept",
    "InstanceNumber",
    "BodyPartExamined",
)

# Name-bearing or date-bearing fields that may never be allowed in.
FORBIDDEN_FIELDS = frozenset(
    {
        "PatientName",
        "PatientID",
        "StudyDate",
        "AccessionNumber",
        "PatientBirthDate",
        "InstitutionName",
        "ReferringPhysicianName",
        "OperatorsName",
        "OtherPatientNames",
    }
)


def hash_uid(uid: str) -> str:
    """Deterministic one-way hash of a DICOM UID (128-bit hex)."""
    return hashlib.sha256(uid.encode("ascii")).hexdigest()[:32]


def hash_to_dicom_uid(uid_hash: str) -> str:
    """Render a hash as a legal UID under the UUID-derived 2.25 root."""
    return f"2.25.{int(uid_hash, 16)}"


@dataclass(frozen=True)
class InclusionList:
    allowed: frozenset
    uid_policy: str = "one-way-hash"

    def __post_init__(self):
        object.__setattr__(self, "allowed", frozenset(self.allowed))
        if not self.allowed:
            raise ValueError("inclusion list must be non-empty")
        bad = self.allowed & FORBIDDEN_FIELDS
        if bad:
            raise ValueError(f"inclusion list may never contain {sorted(bad)}")
        if self.uid_policy != "one-way-hash":
            raise ValueError(f"unknown uid policy {self.uid_policy!r}")

    @classmethod
    def default(cls):
        return cls(frozenset(DEFAULT_INCLUSION_FIELDS))

    @classmethod
    def from_file(cls, path):
        import json

        with open(path) as f:
            fields = json.load(f)
        return cls(frozenset(fields))


def anonymize(meta, inclusion: InclusionList) -> dict:
    """Project a metadata record onto the safe surface.

    Output keys are a subset of inclusion.allowed plus hashed UID fields
    (`*_uid_hash`). Values pass through untouched; field names are matched
    exactly (no case folding, so look-alike names never slip through).
    """
    out = {}
    for key, value in meta.safe.items():
        if key in inclusion.allowed:
            out[key] = value
        elif key.endswith("_uid_hash"):
            out[key] = value
    out["series_uid_hash"] = meta.series_uid_hash
    return out
