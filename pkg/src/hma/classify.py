"""Nearest-neighbour labels for style vectors, and pose/recognition metrics."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import EmptySupport, LengthMismatch
from .manifold import angular_error


@dataclass(frozen=True, eq=False)
class LabeledStyleSet:
    styles: np.ndarray  # (n, d_s), one row per support style
    instance_ids: tuple
    category_ids: tuple

    def __post_init__(self):
        styles = np.array(self.styles, dtype=float, ndmin=2)
        object.__setattr__(self, "styles", styles)
        object.__setattr__(self, "instance_ids", tuple(str(i) for i in self.instance_ids))
        object.__setattr__(self, "category_ids", tuple(str(c) for c in self.category_ids))
        if not (styles.shape[0] == len(self.instance_ids) == len(self.category_ids)):
            raise LengthMismatch("styles, instance ids and category ids differ in length")

    def __len__(self):
        return self.styles.shape[0]

    def labels(self, target: str) -> tuple:
        if target == "instance":
            return self.instance_ids
        if target == "category":
            return self.category_ids
        raise ValueError(f"target must be 'instance' or 'category', got {target!r}")


def knn_classify(support: LabeledStyleSet, query, k: int = 1, target: str = "instance") -> str:
    """Majority label among the k nearest support styles.

    Vote ties go to the label whose voters are closer on average, then to
    the lexicographically smaller label. Neighbours are ranked by
    (distance, label) so the result does not depend on support order.
    """
    if len(support) == 0:
        raise EmptySupport("no support styles")
    if not 1 <= k <= len(support):
        raise ValueError(f"k must be in [1, {len(support)}]")
    labels = support.labels(target)
    q = np.asarray(query, dtype=float)
    dist = np.linalg.norm(support.styles - q, axis=1)
    order = sorted(range(len(labels)), key=lambda i: (dist[i], labels[i]))[:k]
    votes = defaultdict(list)
    for i in order:
        votes[labels[i]].append(dist[i])
    return min(votes, key=lambda lab: (-len(votes[lab]), float(np.mean(votes[lab])), lab))


@dataclass
class Prediction:
    yaw: float  # radians
    category: Optional[str] = None
    instance: Optional[str] = None


@dataclass
class EvalReport:
    n: int
    mae_degrees: float
    pct_ae_under_22_5: float
    pct_ae_under_45: float
    category_accuracy: float
    instance_accuracy: float
    # pose accuracy (AE below the threshold) counting misclassified samples as failures
    pose_accuracy_zeroed: float
    # pose accuracy and MAE over correctly categorized samples only
    pose_accuracy_given_correct_category: float
    mae_given_correct_category: float
    pose_threshold_deg: float = 45.0
    synthesis_mse: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


def _pct(mask) -> float:
    return 100.0 * float(np.mean(mask)) if len(mask) else 0.0


def evaluate(predictions, ground_truth, threshold_deg: float = 45.0, synthesis_mse=None) -> EvalReport:
    """Pose and recognition metrics over paired predictions / ground truths.

    Both lists hold :class:`Prediction` (or ``(yaw, category, instance)``
    tuples). Pose errors use the yaw angle with circular wraparound.
    """
    if len(predictions) != len(ground_truth):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(ground_truth)} ground truths")
    if not predictions:
        raise LengthMismatch("nothing to evaluate")
    preds = [p if isinstance(p, Prediction) else Prediction(*p) for p in predictions]
    truth = [t if isinstance(t, Prediction) else Prediction(*t) for t in ground_truth]

    ae = np.degrees(angular_error([p.yaw for p in preds], [t.yaw for t in truth]))
    ae = np.atleast_1d(ae)
    cat_ok = np.array([p.category == t.category for p, t in zip(preds, truth)])
    inst_ok = np.array([p.instance == t.instance for p, t in zip(preds, truth)])
    pose_ok = ae < threshold_deg

    return EvalReport(
        n=len(preds),
        mae_degrees=float(np.mean(ae)),
        pct_ae_under_22_5=_pct(ae < 22.5),
        pct_ae_under_45=_pct(ae < 45.0),
        category_accuracy=_pct(cat_ok),
        instance_accuracy=_pct(inst_ok),
        pose_accuracy_zeroed=_pct(pose_ok & cat_ok),
        pose_accuracy_given_correct_category=_pct(pose_ok[cat_ok]),
        mae_given_correct_category=float(np.mean(ae[cat_ok])) if cat_ok.any() else math.nan,
        pose_threshold_deg=threshold_deg,
        synthesis_mse=synthesis_mse,
    )
