"""Domain types and pure computation: volumes, masks, annotations, QA metrics.

Everything in this package is immutable after construction and free of I/O,
so values can be shared across worker threads without coordination.
"""

from radstack.core.volume import VolumeTensor, ShapeError, AXIAL_ORIENTATION
from radstack.core.mask import (
    VoxelMask,
    OverlapMetrics,
    apply_range_mask,
    paint,
    morph,
    overlap_metrics,
    encode_rle,
    decode_rle,
    CorruptMaskError,
)
from radstack.core.annotation import (
    AnnotationTemplate,
    TemplateField,
    AnnotationSet,
    BoundingBox,
    CompletenessReport,
    Violation,
    validate_annotation,
    TemplateError,
)
from radstack.core.metadata import MetadataRecord

__all__ = [
    "VolumeTensor",
    "ShapeError",
    "AXIAL_ORIENTATION",
    "VoxelMask",
    "OverlapMetrics",
    "apply_range_mask",
    "paint",
    "morph",
    "overlap_metrics",
    "encode_rle",
    "decode_rle",
    "CorruptMaskError",
    "AnnotationTemplate",
    "TemplateField",
    "AnnotationSet",
    "BoundingBox",
    "CompletenessReport",
    "Violation",
    "validate_annotation",
    "TemplateError",
    "MetadataRecord",
]
