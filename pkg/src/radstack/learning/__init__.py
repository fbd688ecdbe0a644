from radstack.learning.drift import DriftMonitor, DriftResult, chi_square_sf
from radstack.learning.loop import (
    LoopConfig,
    MaturityPolicy,
    ProposalResult,
    TrainingLoop,
    is_validation_series,
    propose_annotation,
)
from radstack.learning.metrics import METRICS, mask_dice, mask_iou
from radstack.learning.snapshots import SnapshotStore
from radstack.learning.trainer import Prediction, ThresholdSegmenter, TrainingExample

__all__ = [
    "DriftMonitor",
    "DriftResult",
    "chi_square_sf",
    "TrainingLoop",
    "LoopConfig",
    "MaturityPolicy",
    "ProposalResult",
    "propose_annotation",
    "is_validation_series",
    "SnapshotStore",
    "ThresholdSegmenter",
    "TrainingExample",
    "Prediction",
    "METRICS",
    "mask_dice",
    "mask_iou",
]
