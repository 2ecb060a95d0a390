"""Detector evaluation: confusion counts, ROC curve, AUROC, FPR at target TPR.

ID is the positive class. All inputs are canonical scores (higher = more OOD),
all outputs are fractions in [0, 1]; percent formatting belongs to the report
layer. AUROC uses the tie-corrected rank statistic; the trapezoidal area under
roc_curve() is kept as an independent cross-check, not the primary path.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .detectors import order_statistic_threshold
from .errors import DataError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def n_id(self):
        return self.tp + self.fn

    @property
    def n_ood(self):
        return self.fp + self.tn


RocPoint = namedtuple("RocPoint", ["fpr", "tpr", "threshold"])


@dataclass(frozen=True)
class RocCurve:
    """Staircase swept over every distinct pooled score, plus a (0,0) sentinel.

    The final point is always (1,1): the largest pooled score accepts
    everything.
    """

    points: tuple

    @property
    def fpr(self):
        return np.array([p.fpr for p in self.points])

    @property
    def tpr(self):
        return np.array([p.tpr for p in self.points])

    def area(self):
        return float(np.trapezoid(self.tpr, self.fpr))


@dataclass(frozen=True)
class EvalResult:
    auroc: float
    fpr_at_target: float
    target_tpr: float
    n_id: int
    n_ood: int


def _scores(values, side):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError(f"{side} scores: need a nonempty 1-d array")
    if not np.isfinite(arr).all():
        raise DataError(f"{side} scores: non-finite value")
    return arr


def confusion_at_threshold(id_scores, ood_scores, threshold) -> ConfusionCounts:
    """Counts under the decision rule "ID iff score <= threshold"."""
    id_arr = _scores(id_scores, "id")
    ood_arr = _scores(ood_scores, "ood")
    tp = int((id_arr <= threshold).sum())
    fp = int((ood_arr <= threshold).sum())
    return ConfusionCounts(tp=tp, tn=ood_arr.size - fp, fp=fp, fn=id_arr.size - tp)


def auroc(id_scores, ood_scores) -> float:
    """P(random OOD score > random ID score), ties counted half.

    Midrank formulation: with R the rank sum of the OOD side in the pooled
    ordering, AUROC = (R - n_ood(n_ood+1)/2) / (n_id * n_ood). Exact under
    ties; O(n log n).
    """
    id_arr = _scores(id_scores, "id")
    ood_arr = _scores(ood_scores, "ood")
    ranks = rankdata(np.concatenate([id_arr, ood_arr]))
    n_ood = ood_arr.size
    rank_sum = ranks[id_arr.size:].sum()
    return float((rank_sum - n_ood * (n_ood + 1) / 2) / (id_arr.size * n_ood))


def roc_curve(id_scores, ood_scores) -> RocCurve:
    id_arr = np.sort(_scores(id_scores, "id"))
    ood_arr = np.sort(_scores(ood_scores, "ood"))
    pooled = np.unique(np.concatenate([id_arr, ood_arr]))
    tp = np.searchsorted(id_arr, pooled, side="right")
    fp = np.searchsorted(ood_arr, pooled, side="right")
    points = [RocPoint(0.0, 0.0, -np.inf)]
    points.extend(
        RocPoint(f / ood_arr.size, t / id_arr.size, float(v))
        for v, t, f in zip(pooled, tp, fp))
    return RocCurve(points=tuple(points))


def fpr_at_tpr(id_scores, ood_scores, target_tpr) -> float:
    """OOD fraction accepted as ID at the order-statistic threshold.

    The threshold is the same one calibration would pick for the ID scores;
    no curve interpolation.
    """
    id_arr = _scores(id_scores, "id")
    ood_arr = _scores(ood_scores, "ood")
    theta = order_statistic_threshold(id_arr, target_tpr)
    return float((ood_arr <= theta).sum() / ood_arr.size)


def evaluate(id_scores, ood_scores, target_tpr=0.95) -> EvalResult:
    id_arr = _scores(id_scores, "id")
    ood_arr = _scores(ood_scores, "ood")
    return EvalResult(
        auroc=auroc(id_arr, ood_arr),
        fpr_at_target=fpr_at_tpr(id_arr, ood_arr, target_tpr),
        target_tpr=float(target_tpr),
        n_id=id_arr.size,
        n_ood=ood_arr.size,
    )
