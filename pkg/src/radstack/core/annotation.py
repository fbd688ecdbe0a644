"""Annotation data model: templates with closed vocabularies, label vectors,
boxes, masks, and the completeness check that gates sign-off.

No free text is representable: every label value must come from a template
vocabulary, and validation reports any value outside it.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field

from radstack.core.mask import VoxelMask

LEVELS = ("study", "series", "slice", "region")


class TemplateError(ValueError):
    """Malformed template: duplicate ids, empty vocabulary, bad level."""


@dataclass(frozen=True)
class TemplateField:
    field_id: str
    level: str
    vocabulary: tuple
    required: bool = True

    def __post_init__(self):
        if self.level not in LEVELS:
            raise TemplateError(f"field {self.field_id!r}: level must be one of {LEVELS}")
        if not self.vocabulary:
            raise TemplateError(f"field {self.field_id!r}: vocabulary must be non-empty")
        object.__setattr__(self, "vocabulary", tuple(str(v) for v in self.vocabulary))


@dataclass(frozen=True)
class AnnotationTemplate:
    template_id: str
    fields: tuple

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        ids = [f.field_id for f in self.fields]
        if len(ids) != len(set(ids)):
            raise TemplateError(f"duplicate field ids in template {self.template_id!r}")

    def field_map(self):
        return {f.field_id: f for f in self.fields}

    def region_vocabulary(self):
        """Union of vocabularies of region-level fields: the legal mask/box labels."""
        vocab = set()
        for f in self.fields:
            if f.level == "region":
                vocab.update(f.vocabulary)
        return vocab

    def to_json_dict(self):
        return {
            "template_id": self.template_id,
            "fields": [
                {
                    "field_id": f.field_id,
                    "level": f.level,
                    "vocabulary": list(f.vocabulary),
                    "required": f.required,
                }
                for f in self.fields
            ],
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            template_id=d["template_id"],
            fields=tuple(
                TemplateField(
                    field_id=f["field_id"],
                    level=f["level"],
                    vocabulary=tuple(f["vocabulary"]),
                    required=bool(f.get("required", True)),
                )
                for f in d["fields"]
            ),
        )


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box spanning an inclusive slice range."""

    slice_range: tuple
    y0: int
    x0: int
    y1: int
    x1: int
    label: str

    def to_json_dict(self):
        return {
            "slice_range": list(self.slice_range),
            "y0": self.y0,
            "x0": self.x0,
            "y1": self.y1,
            "x1": self.x1,
            "label": self.label,
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            slice_range=tuple(d["slice_range"]),
            y0=d["y0"], x0=d["x0"], y1=d["y1"], x1=d["x1"],
            label=d["label"],
        )


@dataclass(frozen=True)
class AnnotationSet:
    """One author's annotation of one series, versioned by the server.

    slice_labels maps field_id -> {slice_index: value}. Masks and boxes carry
    labels from region-level vocabularies. machine_proposed marks model
    output, which never counts as human work until a person signs it off.
    """

    target: tuple  # (study_id, series_id)
    author: str
    study_labels: dict = field(default_factory=dict)
    series_labels: dict = field(default_factory=dict)
    slice_labels: dict = field(default_factory=dict)
    boxes: tuple = ()
    masks: tuple = ()
    version: int = 0
    signed_off: bool = False
    machine_proposed: bool = False
    model_version: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "masks", tuple(self.masks))

    def all_label_values(self):
        """Every categorical value carried by this annotation, for drift counts."""
        values = list(self.study_labels.values()) + list(self.series_labels.values())
        for per_slice in self.slice_labels.values():
            values.extend(per_slice.values())
        values.extend(b.label for b in self.boxes)
        values.extend(m.label for m in self.masks)
        return values

    def to_json_dict(self):
        return {
            "target": list(self.target),
            "author": self.author,
            "study_labels": dict(self.study_labels),
            "series_labels": dict(self.series_labels),
            "slice_labels": {
                fid: {str(z): v for z, v in per.items()} for fid, per in self.slice_labels.items()
            },
            "boxes": [b.to_json_dict() for b in self.boxes],
            "masks": [base64.b64encode(m.to_bytes()).decode("ascii") for m in self.masks],
            "version": self.version,
            "signed_off": self.signed_off,
            "machine_proposed": self.machine_proposed,
            "model_version": self.model_version,
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            target=tuple(d["target"]),
            author=d["author"],
            study_labels=dict(d.get("study_labels", {})),
            series_labels=dict(d.get("series_labels", {})),
            slice_labels={
                fid: {int(z): v for z, v in per.items()}
                for fid, per in d.get("slice_labels", {}).items()
            },
            boxes=tuple(BoundingBox.from_json_dict(b) for b in d.get("boxes", [])),
            masks=tuple(VoxelMask.from_bytes(base64.b64decode(m)) for m in d.get("masks", [])),
            version=int(d.get("version", 0)),
            signed_off=bool(d.get("signed_off", False)),
            machine_proposed=bool(d.get("machine_proposed", False)),
            model_version=d.get("model_version"),
        )


@dataclass(frozen=True)
class Violation:
    field_id: str
    reason: str  # missing | out_of_vocabulary | unknown_field
    detail: str = ""


@dataclass(frozen=True)
class CompletenessReport:
    violations: tuple

    @property
    def empty(self):
        return not self.violations

    def to_json_dict(self):
        return {
            "complete": self.empty,
            "violations": [
                {"field_id": v.field_id, "reason": v.reason, "detail": v.detail}
                for v in self.violations
            ],
        }


def _check_level(ann_labels, tpl_fields, level, violations):
    for fid, value in ann_labels.items():
        f = tpl_fields.get(fid)
        if f is None or f.level != level:
            violations.append(Violation(fid, "unknown_field", f"not a {level}-level template field"))
        elif value not in f.vocabulary:
            violations.append(Violation(fid, "out_of_vocabulary", f"value {value!r}"))
    for fid, f in tpl_fields.items():
        if f.level == level and f.required and fid not in ann_labels:
            violations.append(Violation(fid, "missing", f"required {level}-level field"))


def validate_annotation(ann, template, n_slices=None):
    """Report every required field that is missing or out of vocabulary.

    An empty report is the one and only condition under which sign-off is
    permitted. Unknown field ids are reported, never silently dropped.
    A required slice-level field must cover every slice when n_slices is
    known; otherwise at least one slice. A required region-level field needs
    at least one box or mask labeled from its vocabulary.
    """
    tpl_fields = template.field_map()
    violations = []

    _check_level(ann.study_labels, tpl_fields, "study", violations)
    _check_level(ann.series_labels, tpl_fields, "series", violations)

    for fid, per_slice in ann.slice_labels.items():
        f = tpl_fields.get(fid)
        if f is None or f.level != "slice":
            violations.append(Violation(fid, "unknown_field", "not a slice-level template field"))
            continue
        for z, value in per_slice.items():
            if value not in f.vocabulary:
                violations.append(Violation(fid, "out_of_vocabulary", f"slice {z} value {value!r}"))
    for fid, f in tpl_fields.items():
        if f.level != "slice" or not f.required:
            continue
        per_slice = ann.slice_labels.get(fid, {})
        if not per_slice:
            violations.append(Violation(fid, "missing", "required slice-level field"))
        elif n_slices is not None:
            uncovered = sorted(set(range(n_slices)) - set(per_slice))
            if uncovered:
                violations.append(
                    Violation(fid, "missing", f"slices without a value: {uncovered[:8]}")
                )

    region_fields = {fid: f for fid, f in tpl_fields.items() if f.level == "region"}
    region_vocab = template.region_vocabulary()
    region_labels = [b.label for b in ann.boxes] + [m.label for m in ann.masks]
    for label in region_labels:
        if label not in region_vocab:
            violations.append(Violation("<region>", "out_of_vocabulary", f"region label {label!r}"))
    for fid, f in region_fields.items():
        if f.required and not any(lbl in f.vocabulary for lbl in region_labels):
            violations.append(Violation(fid, "missing", "no region labeled from this vocabulary"))

    return CompletenessReport(tuple(violations))
