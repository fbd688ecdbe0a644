"""Explicit-VR little-endian DICOM reader and writer for the platform subset.

One slice per file, uncompressed 16-bit grayscale. The parser decodes
elements in ascending tag order, types the values it knows (US to int, DS to
decimal list, text VRs to str), and refuses anything outside the subset with
a specific error instead of guessing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
CT_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.2"

# VRs that use the 2-byte reserved + 4-byte length form.
_LONG_VRS = {"OB", "OW", "OF", "SQ", "UT", "UN"}
_KNOWN_VRS = _LONG_VRS | {
    "AE", "AS", "AT", "CS", "DA", "DS", "DT", "FL", "FD", "IS",
    "LO", "LT", "PN", "SH", "SL", "SS", "ST", "TM", "UI", "UL", "US",
}

# (group, element) -> (keyword, VR) for every tag the platform understands.
TAG_REGISTRY = {
    (0x0008, 0x0018): ("SOPInstanceUID", "UI"),
    (0x0008, 0x0016): ("SOPClassUID", "UI"),
    (0x0008, 0x0020): ("StudyDate", "DA"),
    (0x0008, 0x0050): ("AccessionNumber", "SH"),
    (0x0008, 0x0060): ("Modality", "CS"),
    (0x0008, 0x0080): ("InstitutionName", "LO"),
    (0x0010, 0x0010): ("PatientName", "PN"),
    (0x0010, 0x0020): ("PatientID", "LO"),
    (0x0010, 0x0030): ("PatientBirthDate", "DA"),
    (0x0010, 0x0040): ("PatientSex", "CS"),
    (0x0018, 0x0015): ("BodyPartExamined", "CS"),
    (0x0018, 0x0050): ("SliceThickness", "DS"),
    (0x0020, 0x000D): ("StudyInstanceUID", "UI"),
    (0x0020, 0x000E): ("SeriesInstanceUID", "UI"),
    (0x0020, 0x0013): ("InstanceNumber", "IS"),
    (0x0020, 0x0032): ("ImagePositionPatient", "DS"),
    (0x0020, 0x0037): ("ImageOrientationPatient", "DS"),
    (0x0028, 0x0010): ("Rows", "US"),
    (0x0028, 0x0011): ("Columns", "US"),
    (0x0028, 0x0030): ("PixelSpacing", "DS"),
    (0x0028, 0x0100): ("BitsAllocated", "US"),
    (0x0028, 0x0101): ("BitsStored", "US"),
    (0x0028, 0x0102): ("HighBit", "US"),
    (0x0028, 0x0103): ("PixelRepresentation", "US"),
    (0x0028, 0x1052): ("RescaleIntercept", "DS"),
    (0x0028, 0x1053): ("RescaleSlope", "DS"),
    (0x7FE0, 0x0010): ("PixelData", "OW"),
}
NAME_TO_TAG = {name: tag for tag, (name, _vr) in TAG_REGISTRY.items()}

REQUIRED_TAGS = (
    (0x0008, 0x0060),
    (0x0010, 0x0010),
    (0x0010, 0x0020),
    (0x0020, 0x000D),
    (0x0020, 0x000E),
    (0x0008, 0x0018),
    (0x0020, 0x0013),
    (0x0028, 0x0010),
    (0x0028, 0x0011),
    (0x0028, 0x0100),
    (0x0028, 0x0103),
    (0x0028, 0x0030),
    (0x0018, 0x0050),
    (0x0020, 0x0032),
    (0x0020, 0x0037),
    (0x0028, 0x1052),
    (0x0028, 0x1053),
    (0x7FE0, 0x0010),
)


class NotDicomError(ValueError):
    """Missing preamble magic: this is not a DICOM part-10 file."""


class UnsupportedFormatError(ValueError):
    """Valid DICOM but outside the supported subset (e.g. compressed)."""


class IncompleteDatasetError(ValueError):
    """A required tag is absent; the message names it."""


class CorruptDicomError(ValueError):
    """Structurally broken element; the message carries the byte offset."""


@dataclass
class DicomElement:
    vr: str
    raw: bytes
    value: object


class DicomDataset:
    """Ordered (group, element) -> DicomElement map plus typed accessors."""

    def __init__(self, elements, transfer_syntax=EXPLICIT_VR_LE):
        self.elements = dict(elements)
        self.transfer_syntax = transfer_syntax

    def __contains__(self, name_or_tag):
        return self._to_tag(name_or_tag) in self.elements

    @staticmethod
    def _to_tag(name_or_tag):
        if isinstance(name_or_tag, str):
            return NAME_TO_TAG[name_or_tag]
        return tuple(name_or_tag)

    def get(self, name_or_tag, default=None):
        el = self.elements.get(self._to_tag(name_or_tag))
        return el.value if el is not None else default

    def __getitem__(self, name_or_tag):
        tag = self._to_tag(name_or_tag)
        if tag not in self.elements:
            name = TAG_REGISTRY.get(tag, (f"({tag[0]:04X},{tag[1]:04X})", ""))[0]
            raise IncompleteDatasetError(f"required tag {name} {tag_str(tag)} absent")
        return self.elements[tag].value

    def named_items(self):
        """(keyword, value) for every element with a registered keyword."""
        out = {}
        for tag, el in self.elements.items():
            entry = TAG_REGISTRY.get(tag)
            if entry and tag != NAME_TO_TAG["PixelData"]:
                out[entry[0]] = el.value
        return out


def tag_str(tag):
    return f"({tag[0]:04X},{tag[1]:04X})"


def _decode_value(vr, raw):
    if vr in ("OB", "OW", "OF", "UN"):
        return raw
    if vr == "US":
        return struct.unpack("<H", raw[:2])[0]
    if vr == "UL":
        return struct.unpack("<I", raw[:4])[0]
    if vr in ("SS",):
        return struct.unpack("<h", raw[:2])[0]
    if vr in ("SL",):
        return struct.unpack("<i", raw[:4])[0]
    if vr == "FL":
        return struct.unpack("<f", raw[:4])[0]
    if vr == "FD":
        return struct.unpack("<d", raw[:8])[0]
    text = raw.decode("ascii", errors="replace").rstrip("\x00 ")
    if vr == "IS":
        return int(text) if text else 0
    if vr == "DS":
        return [float(part) for part in text.split("\\") if part != ""]
    return text


def _encode_value(vr, value):
    if vr in ("OB", "OW", "OF", "UN"):
        raw = bytes(value)
    elif vr == "US":
        raw = struct.pack("<H", int(value))
    elif vr == "UL":
        raw = struct.pack("<I", int(value))
    elif vr == "SS":
        raw = struct.pack("<h", int(value))
    elif vr == "SL":
        raw = struct.pack("<i", int(value))
    elif vr == "FL":
        raw = struct.pack("<f", float(value))
    elif vr == "FD":
        raw = struct.pack("<d", float(value))
    elif vr == "IS":
        raw = str(int(value)).encode("ascii")
    elif vr == "DS":
        parts = value if isinstance(value, (list, tuple)) else [value]
        raw = "\\".join(_format_ds(v) for v in parts).encode("ascii")
    else:
        raw = str(value).encode("ascii")
    if len(raw) % 2:
        raw += b"\x00" if vr in ("UI", "OB") else b" "
    return raw


def _format_ds(v):
    # DS values max 16 bytes; repr of a float fits after trimming
    s = f"{float(v):.10g}"
    return s[:16]


def _encode_element(tag, vr, value):
    raw = _encode_value(vr, value)
    head = struct.pack("<HH", tag[0], tag[1]) + vr.encode("ascii")
    if vr in _LONG_VRS:
        head += b"\x00\x00" + struct.pack("<I", len(raw))
    else:
        if len(raw) > 0xFFFF:
            raise ValueError(f"{tag_str(tag)} value too long for short-form VR {vr}")
        head += struct.pack("<H", len(raw))
    return head + raw


def _read_elements(data, offset, end):
    """Decode explicit-VR elements from data[offset:end] in tag order."""
    elements = {}
    last_tag = (-1, -1)
    while offset < end:
        if offset + 8 > end:
            raise CorruptDicomError(f"truncated element header at offset {offset}")
        group, element = struct.unpack_from("<HH", data, offset)
        vr = data[offset + 4 : offset + 6].decode("ascii", errors="replace")
        if vr not in _KNOWN_VRS:
            raise CorruptDicomError(
                f"unknown VR {vr!r} at offset {offset} for tag ({group:04X},{element:04X})"
            )
        if vr in _LONG_VRS:
            if offset + 12 > end:
                raise CorruptDicomError(f"truncated long-form element at offset {offset}")
            (length,) = struct.unpack_from("<I", data, offset + 8)
            value_off = offset + 12
        else:
            (length,) = struct.unpack_from("<H", data, offset + 6)
            value_off = offset + 8
        if vr == "SQ":
            raise UnsupportedFormatError(
                f"sequences are outside the supported subset (tag ({group:04X},{element:04X}))"
            )
        if length == 0xFFFFFFFF:
            raise UnsupportedFormatError("undefined-length elements are outside the subset")
        if value_off + length > end:
            raise CorruptDicomError(
                f"element ({group:04X},{element:04X}) at offset {offset} "
                f"claims {length} bytes past end of data"
            )
        tag = (group, element)
        if tag <= last_tag:
            raise CorruptDicomError(f"tags out of ascending order at offset {offset}")
        last_tag = tag
        raw = data[value_off : value_off + length]
        elements[tag] = DicomElement(vr, raw, _decode_value(vr, raw))
        offset = value_off + length
    return elements


def parse_dicom(data: bytes, require_tags=True) -> DicomDataset:
    """Parse one file of the supported subset into a typed dataset.

    Validates the 128-byte preamble + DICM magic, the transfer syntax, the
    required-tag set, BitsAllocated == 16, and that the pixel payload is
    exactly rows * cols * 2 bytes.
    """
    if len(data) < 132 or data[128:132] != b"DICM":
        raise NotDicomError("no DICM magic after 128-byte preamble")

    # File meta group (0002,xxxx) is always explicit VR LE.
    offset = 132
    meta_end = len(data)
    meta = {}
    while offset < meta_end:
        group = struct.unpack_from("<H", data, offset)[0]
        if group != 0x0002:
            break
        chunk = _read_single(data, offset)
        tag, el, offset = chunk
        meta[tag] = el
        if tag == (0x0002, 0x0000):
            meta_end = offset + struct.unpack("<I", el.raw[:4])[0]

    ts_el = meta.get((0x0002, 0x0010))
    transfer_syntax = ts_el.value if ts_el else EXPLICIT_VR_LE
    if transfer_syntax != EXPLICIT_VR_LE:
        raise UnsupportedFormatError(
            f"transfer syntax {transfer_syntax!r} unsupported; only explicit VR little endian"
        )

    elements = _read_elements(data, offset, len(data))
    ds = DicomDataset(elements, transfer_syntax)

    if require_tags:
        for tag in REQUIRED_TAGS:
            if tag not in elements:
                name = TAG_REGISTRY[tag][0]
                raise IncompleteDatasetError(f"required tag {name} {tag_str(tag)} absent")
        if ds["BitsAllocated"] != 16:
            raise UnsupportedFormatError(
                f"BitsAllocated {ds['BitsAllocated']} unsupported; subset is 16-bit"
            )
        pixel = ds["PixelData"]
        expected = ds["Rows"] * ds["Columns"] * 2
        if len(pixel) != expected:
            raise CorruptDicomError(
                f"pixel data is {len(pixel)} bytes; Rows*Columns*2 = {expected}"
            )
    return ds


def _read_single(data, offset):
    group, element = struct.unpack_from("<HH", data, offset)
    vr = data[offset + 4 : offset + 6].decode("ascii", errors="replace")
    if vr in _LONG_VRS:
        (length,) = struct.unpack_from("<I", data, offset + 8)
        value_off = offset + 12
    else:
        (length,) = struct.unpack_from("<H", data, offset + 6)
        value_off = offset + 8
    if value_off + length > len(data):
        raise CorruptDicomError(f"truncated element at offset {offset}")
    raw = data[value_off : value_off + length]
    return (group, element), DicomElement(vr, raw, _decode_value(vr, raw)), value_off + length


def serialize_dataset(fields: dict, pixel_data: bytes, sop_instance_uid: str) -> bytes:
    """Write one slice file (preamble, meta group, dataset) of the subset.

    fields maps registered keywords to typed values; PixelData is passed
    separately to keep callers honest about its size.
    """
    body_tags = []
    for name, value in fields.items():
        tag = NAME_TO_TAG[name]
        body_tags.append((tag, TAG_REGISTRY[tag][1], value))
    body_tags.append((NAME_TO_TAG["PixelData"], "OW", pixel_data))
    body_tags.sort(key=lambda t: t[0])
    body = b"".join(_encode_element(tag, vr, value) for tag, vr, value in body_tags)

    meta_elements = [
        ((0x0002, 0x0001), "OB", b"\x00\x01"),
        ((0x0002, 0x0002), "UI", CT_IMAGE_STORAGE),
        ((0x0002, 0x0003), "UI", sop_instance_uid),
        ((0x0002, 0x0010), "UI", EXPLICIT_VR_LE),
    ]
    meta_body = b"".join(_encode_element(tag, vr, value) for tag, vr, value in meta_elements)
    group_length = _encode_element((0x0002, 0x0000), "UL", len(meta_body))
    return b"\x00" * 128 + b"DICM" + group_length + meta_body + body
