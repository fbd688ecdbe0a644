"""Template enforcement and the completeness gate."""

import numpy as np
import pytest

from oracles import oracle_completeness

from radstack.core.annotation import (
    AnnotationSet,
    AnnotationTemplate,
    BoundingBox,
    TemplateError,
    TemplateField,
    validate_annotation,
)
from radstack.core.mask import VoxelMask


def chest_template():
    return AnnotationTemplate(
        template_id="chest-v1",
        fields=(
            TemplateField("quality", "study", ("diagnostic", "limited"), required=True),
            TemplateField("contrast", "series", ("with", "without"), required=True),
            TemplateField("slice_ok", "slice", ("yes", "no"), required=False),
            TemplateField("finding", "region", ("lesion", "nodule"), required=True),
        ),
    )


def complete_annotation():
    mask = VoxelMask((4, 8, 8), [(0, 4)], label="lesion")
    return AnnotationSet(
        target=("st1", "se1"),
        author="u1",
        study_labels={"quality": "diagnostic"},
        series_labels={"contrast": "with"},
        masks=(mask,),
    )


class TestTemplate:
    def test_duplicate_field_ids_rejected(self):
        with pytest.raises(TemplateError):
            AnnotationTemplate(
                "t",
                (
                    TemplateField("a", "study", ("x",)),
                    TemplateField("a", "series", ("y",)),
                ),
            )

    def test_empty_vocabulary_rejected(self):
        with pytest.raises(TemplateError):
            TemplateField("a", "study", ())

    def test_bad_level_rejected(self):
        with pytest.raises(TemplateError):
            TemplateField("a", "volume", ("x",))

    def test_json_roundtrip(self):
        tpl = chest_template()
        again = AnnotationTemplate.from_json_dict(tpl.to_json_dict())
        assert again == tpl


class TestValidate:
    def test_complete_annotation_passes(self):
        report = validate_annotation(complete_annotation(), chest_template())
        assert report.empty

    def test_missing_series_field_reported(self):
        ann = complete_annotation()
        ann = AnnotationSet(
            target=ann.target,
            author=ann.author,
            study_labels=ann.study_labels,
            series_labels={},
            masks=ann.masks,
        )
        report = validate_annotation(ann, chest_template())
        assert [v.field_id for v in report.violations] == ["contrast"]
        assert report.violations[0].reason == "missing"

    def test_out_of_vocabulary_value_reported(self):
        ann = complete_annotation()
        ann = AnnotationSet(
            target=ann.target,
            author=ann.author,
            study_labels={"quality": "excellent"},
            series_labels=ann.series_labels,
            masks=ann.masks,
        )
        report = validate_annotation(ann, chest_template())
        assert ("quality", "out_of_vocabulary") in {(v.field_id, v.reason) for v in report.violations}

    def test_unknown_field_reported_not_dropped(self):
        ann = complete_annotation()
        ann = AnnotationSet(
            target=ann.target,
            author=ann.author,
            study_labels={**ann.study_labels, "mystery": "diagnostic"},
            series_labels=ann.series_labels,
            masks=ann.masks,
        )
        report = validate_annotation(ann, chest_template())
        assert ("mystery", "unknown_field") in {(v.field_id, v.reason) for v in report.violations}

    def test_region_label_outside_vocabulary(self):
        ann = complete_annotation()
        bad_mask = ann.masks[0].with_label("tumor")
        ann = AnnotationSet(
            target=ann.target,
            author=ann.author,
            study_labels=ann.study_labels,
            series_labels=ann.series_labels,
            masks=(bad_mask,),
        )
        report = validate_annotation(ann, chest_template())
        reasons = {(v.field_id, v.reason) for v in report.violations}
        assert ("<region>", "out_of_vocabulary") in reasons
        assert ("finding", "missing") in reasons

    def test_required_slice_field_demands_full_coverage(self):
        tpl = AnnotationTemplate(
            "t",
            (TemplateField("slice_ok", "slice", ("yes", "no"), required=True),),
        )
        ann = AnnotationSet(
            target=("st", "se"),
            author="u",
            slice_labels={"slice_ok": {0: "yes", 1: "yes"}},
        )
        assert validate_annotation(ann, tpl, n_slices=2).empty
        report = validate_annotation(ann, tpl, n_slices=3)
        assert not report.empty and report.violations[0].field_id == "slice_ok"

    def test_fuzzed_reports_match_set_difference_oracle(self, rng):
        vocab_pool = ["a", "b", "c", "d"]
        for _ in range(300):
            fields = []
            n_fields = int(rng.integers(1, 6))
            for i in range(n_fields):
                level = ["study", "series", "slice", "region"][int(rng.integers(0, 4))]
                vocab = tuple(rng.choice(vocab_pool, size=int(rng.integers(1, 4)), replace=False))
                fields.append(TemplateField(f"f{i}", level, vocab, required=bool(rng.integers(0, 2))))
            tpl = AnnotationTemplate("t", tuple(fields))

            study, series, slices = {}, {}, {}
            region_labels = []
            for f in fields:
                if rng.random() < 0.3:
                    continue  # leave it out
                value = str(rng.choice(vocab_pool + ["zz"]))
                if f.level == "study":
                    study[f.field_id] = value
                elif f.level == "series":
                    series[f.field_id] = value
                elif f.level == "slice":
                    slices[f.field_id] = {0: value}
                else:
                    region_labels.append(value)
            if rng.random() < 0.2:
                study["ghost"] = "a"

            masks = tuple(
                VoxelMask((2, 2, 2), [(0, 1)], label=lbl) for lbl in region_labels
            )
            ann = AnnotationSet(
                target=("st", "se"),
                author="u",
                study_labels=study,
                series_labels=series,
                slice_labels=slices,
                masks=masks,
            )
            report = validate_annotation(ann, tpl)
            got = {(v.field_id, v.reason) for v in report.violations}
            expected = oracle_completeness(
                {"study": study, "series": series, "slice": slices},
                region_labels,
                [(f.field_id, f.level, set(f.vocabulary), f.required) for f in fields],
            )
            assert got == expected

    def test_annotation_json_roundtrip(self):
        ann = complete_annotation()
        boxed = AnnotationSet(
            target=ann.target,
            author=ann.author,
            study_labels=ann.study_labels,
            series_labels=ann.series_labels,
            slice_labels={"slice_ok": {0: "yes", 3: "no"}},
            boxes=(BoundingBox((0, 2), 1, 1, 5, 5, "nodule"),),
            masks=ann.masks,
            version=4,
            signed_off=False,
            machine_proposed=True,
            model_version=7,
        )
        again = AnnotationSet.from_json_dict(boxed.to_json_dict())
        assert again == boxed
