"""Joint building/floor accuracy reporting.

The headline metric is the joint hit: building AND floor both correct.
A test record whose (building, floor) pair never appeared in training
cannot be predicted correctly by construction; such records count as
errors in every accuracy and are tallied in ``unmapped`` (the confusion
matrix covers only mappable records).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ClassMap


@dataclass(frozen=True)
class EvalReport:
    joint_accuracy: float
    building_accuracy: float
    floor_accuracy_given_building: float
    confusion: np.ndarray  # (C, C) int64, rows = true class, cols = predicted
    n: int
    unmapped: int
    per_class_counts: np.ndarray  # (C,) int64 true-class record counts

    def to_dict(self) -> dict:
        return {
            "joint_accuracy": self.joint_accuracy,
            "building_accuracy": self.building_accuracy,
            "floor_accuracy_given_building": self.floor_accuracy_given_building,
            "confusion": self.confusion.tolist(),
            "n": self.n,
            "unmapped": self.unmapped,
            "per_class_counts": self.per_class_counts.tolist(),
        }


def report_from_predictions(true_pairs, predicted_classes, class_map: ClassMap) -> EvalReport:
    """Build an EvalReport from per-record truth and predicted class indices.

    ``true_pairs`` is (n, 2) int (building_id, floor); predictions are
    class indices into ``class_map``.
    """
    pairs = np.asarray(true_pairs, dtype=np.int64)
    preds = np.asarray(predicted_classes, dtype=np.int64)
    n = pairs.shape[0]
    if n == 0:
        raise ValueError("cannot evaluate an empty dataset")
    if preds.shape != (n,):
        raise ValueError("one prediction per record required")
    c = len(class_map)
    if preds.min() < 0 or preds.max() >= c:
        raise ValueError("predicted class index outside the class map")

    true_idx = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        pair = (int(pairs[i, 0]), int(pairs[i, 1]))
        if pair in class_map:
            true_idx[i] = class_map.index_of(*pair)
    mapped = true_idx >= 0

    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (true_idx[mapped], preds[mapped]), 1)

    pred_pairs = np.array([class_map.pair_at(int(p)) for p in preds], dtype=np.int64)
    building_hits = pred_pairs[:, 0] == pairs[:, 0]
    joint = float(np.trace(confusion)) / n
    building_acc = float(building_hits.sum()) / n
    if building_hits.any():
        floor_given = float(
            (pred_pairs[building_hits, 1] == pairs[building_hits, 1]).sum()
        ) / int(building_hits.sum())
    else:
        floor_given = 0.0

    return EvalReport(
        joint_accuracy=joint,
        building_accuracy=building_acc,
        floor_accuracy_given_building=floor_given,
        confusion=confusion,
        n=n,
        unmapped=int(n - mapped.sum()),
        per_class_counts=confusion.sum(axis=1),
    )
