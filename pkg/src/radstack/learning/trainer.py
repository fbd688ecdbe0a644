"""Pluggable trainer contract plus the dependency-free reference segmenter.

A trainer is four pure functions over an opaque state: init, fit_increment,
predict, and serialize/deserialize. Given the same inputs a trainer must
produce the same state and predictions, which is what makes snapshots
reproducible and proposals auditable.

The reference trainer segments by a single intensity threshold fitted with
an exhaustive sweep that maximizes mean training dice. It is deterministic,
fast enough for CI, and its sufficient statistics (per-example cumulative
voxel counts over a fixed threshold grid) make incremental fitting exact.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from radstack.core.mask import VoxelMask


@dataclass(frozen=True)
class TrainingExample:
    series_id: str
    volume: object  # VolumeTensor
    mask: object  # VoxelMask ground truth
    labels: tuple = ()


@dataclass(frozen=True)
class Prediction:
    masks: tuple  # VoxelMask list
    labels: dict
    confidence: float


class ThresholdSegmenter:
    """Single-parameter segmenter: voxel >= threshold -> in mask."""

    name = "threshold-segmenter"

    def __init__(self, grid_lo=-1024, grid_hi=3072, grid_step=4):
        self.grid = np.arange(grid_lo, grid_hi + 1, grid_step, dtype=np.int64)

    def init(self, config=None):
        config = config or {}
        return {
            "threshold": None,
            "train_dice": 0.0,
            "examples": [],  # per-example sufficient statistics
            "label_counts": {},
        }

    def _example_stats(self, example):
        vox = example.volume.voxels.ravel()
        in_mask = example.mask.to_dense().ravel()
        inside = vox[in_mask]
        outside = vox[~in_mask]
        # tp(t) = |inside >= t| via reversed cumulative histogram on the grid
        edges = np.concatenate([self.grid, [np.iinfo(np.int64).max]])
        tp = np.histogram(inside, bins=edges)[0][::-1].cumsum()[::-1]
        fp = np.histogram(outside, bins=edges)[0][::-1].cumsum()[::-1]
        return {"tp": tp.tolist(), "fp": fp.tolist(), "n_in": int(in_mask.sum())}

    def fit_increment(self, state, batch):
        """Add a batch and re-sweep the threshold grid exactly."""
        examples = list(state["examples"])
        label_counts = Counter(state["label_counts"])
        for ex in batch:
            examples.append(self._example_stats(ex))
            label_counts.update(ex.labels)
            if ex.mask.label:
                label_counts.update([ex.mask.label])
        if not examples:
            return dict(state)

        dice_sum = np.zeros(len(self.grid))
        for st in examples:
            tp = np.asarray(st["tp"], dtype=np.float64)
            fp = np.asarray(st["fp"], dtype=np.float64)
            denom = tp + fp + st["n_in"]
            with np.errstate(invalid="ignore", divide="ignore"):
                dice = np.where(denom > 0, 2.0 * tp / denom, 1.0)
            dice_sum += dice
        mean_dice = dice_sum / len(examples)
        best_idx = int(np.argmax(mean_dice))  # ties resolve to the lowest threshold
        return {
            "threshold": int(self.grid[best_idx]),
            "train_dice": float(mean_dice[best_idx]),
            "examples": examples,
            "label_counts": dict(label_counts),
        }

    def predict(self, state, volume):
        if state["threshold"] is None:
            return Prediction(masks=(), labels={}, confidence=0.0)
        dense = volume.voxels >= state["threshold"]
        label = ""
        if state["label_counts"]:
            label = max(sorted(state["label_counts"]), key=lambda k: state["label_counts"][k])
        mask = VoxelMask.from_dense(dense, label)
        return Prediction(masks=(mask,), labels={}, confidence=float(state["train_dice"]))

    def serialize(self, state):
        return json.dumps(state, sort_keys=True).encode("utf-8")

    def deserialize(self, data):
        return json.loads(data.decode("utf-8"))
