"""Structured report export for model results: a documented JSON document
standing in for the binary structured-report encoding (out of scope)."""

from __future__ import annotations

import json
import time

SR_SCHEMA_VERSION = 1


def export_structured_report(model_id, model_version, series_id, findings, created_at=None):
    """Deterministic report document for one series' inference output.

    findings: list of dicts with `kind` (box|mask|label), `label`, and either
    box geometry, a mask blob reference, or a value.
    """
    doc = {
        "schema": "radstack-sr",
        "schema_version": SR_SCHEMA_VERSION,
        "model_id": str(model_id),
        "model_version": int(model_version),
        "series_id": str(series_id),
        "created_at": float(created_at if created_at is not None else time.time()),
        "findings": [_normalize_finding(f) for f in findings],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _normalize_finding(f):
    kind = f["kind"]
    if kind not in ("box", "mask", "label"):
        raise ValueError(f"unknown finding kind {kind!r}")
    out = {"kind": kind, "label": str(f["label"])}
    if kind == "box":
        out["slice_range"] = [int(f["slice_range"][0]), int(f["slice_range"][1])]
        out["bounds"] = [int(v) for v in f["bounds"]]  # y0, x0, y1, x1
    elif kind == "mask":
        out["mask_ref"] = str(f["mask_ref"])  # blob key string
    else:
        out["value"] = str(f["value"])
    if "confidence" in f:
        out["confidence"] = float(f["confidence"])
    return out


def read_structured_report(text):
    doc = json.loads(text)
    if doc.get("schema") != "radstack-sr":
        raise ValueError("not a structured report document")
    if doc.get("schema_version") != SR_SCHEMA_VERSION:
        raise ValueError(f"unsupported report version {doc.get('schema_version')}")
    return doc
