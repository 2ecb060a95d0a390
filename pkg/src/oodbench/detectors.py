"""MSP and KNN detectors behind one canonical score orientation.

Scores are oriented so that higher always means more OOD: the MSP detector
reports the negated maximum softmax probability, the KNN detector reports the
mean cosine distance to the k nearest training embeddings. One orientation
means one calibration and one metrics code path for both detectors; AUROC and
ROC ranks are unchanged by the monotone mapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .errors import ConfigError, DataError
from .knn import KnnIndex, mean_knn_distance, mean_knn_distance_batch

DEFAULT_K = 5
DEFAULT_TARGET_TPR = 0.95


class Detector(str, Enum):
    MSP = "msp"
    KNN = "knn"


class Verdict(str, Enum):
    ID = "id"
    OOD = "ood"


@dataclass(frozen=True)
class OodScore:
    """Canonical per-sample OOD score, higher = more OOD."""

    value: float
    detector: Detector
    sample_id: str = ""

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DataError(f"non-finite score for sample {self.sample_id!r}")


@dataclass(frozen=True)
class Threshold:
    """Score cutoff realizing TPR >= target_tpr on its calibration scores."""

    value: float
    detector: Detector
    target_tpr: float
    calibration_size: int


def _logit_rows(logits):
    arr = np.asarray(logits, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise DataError(f"logits: need at least 2 classes, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise DataError("logits: non-finite value")
    return arr, single


def _softmax_rows(rows):
    # max subtraction so exp never overflows; the row maximum maps to exp(0)
    shifted = rows - rows.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax(logits):
    """Probabilities of one logit vector; positive, summing to 1."""
    rows, single = _logit_rows(logits)
    if not single:
        raise DataError("softmax takes a single logit vector")
    return _softmax_rows(rows)[0]


def msp_score_values(logits):
    """Negated max softmax probability per row of a logit matrix."""
    rows, _ = _logit_rows(logits)
    return -_softmax_rows(rows).max(axis=1)


def msp_score(logits, sample_id="") -> OodScore:
    rows, single = _logit_rows(logits)
    if not single:
        raise DataError("msp_score takes a single logit vector")
    return OodScore(float(msp_score_values(rows)[0]), Detector.MSP, sample_id)


def knn_score_values(index: KnnIndex, embeddings, k=DEFAULT_K):
    """Mean distance to the k nearest training rows, per query row."""
    return mean_knn_distance_batch(index, embeddings, k)


def knn_score(index: KnnIndex, embedding, k=DEFAULT_K, sample_id="") -> OodScore:
    return OodScore(mean_knn_distance(index, embedding, k), Detector.KNN, sample_id)


def order_statistic_threshold(values, target_tpr) -> float:
    """The ceil(target_tpr * n)-th ascending order statistic of values.

    Classifying "ID iff value <= threshold" then accepts at least a
    target_tpr fraction of the calibration values, and no smaller distinct
    order statistic does. target_tpr is read at its decimal value (0.95 means
    19/20 exactly), because the binary float 0.95 * 20 rounds up and would
    shift the rank by one.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise DataError("threshold calibration needs at least one score")
    if not np.isfinite(values).all():
        raise DataError("threshold calibration: non-finite score")
    target = Fraction(str(float(target_tpr)))
    if not 0 < target <= 1:
        raise ConfigError(f"target_tpr must be in (0, 1], got {target_tpr}")
    rank = math.ceil(target * values.size)
    return float(np.sort(values)[rank - 1])


def calibrate_threshold(scores, target_tpr=DEFAULT_TARGET_TPR) -> Threshold:
    """Threshold from ID calibration scores of a single detector."""
    scores = list(scores)
    if not scores:
        raise DataError("calibrate_threshold: empty score list")
    detectors = {s.detector for s in scores}
    if len(detectors) != 1:
        raise ConfigError(f"calibrate_threshold: mixed detectors {sorted(d.value for d in detectors)}")
    value = order_statistic_threshold([s.value for s in scores], target_tpr)
    return Threshold(value, scores[0].detector, float(target_tpr), len(scores))


def classify(score: OodScore, threshold: Threshold) -> Verdict:
    """ID iff score.value <= threshold.value; ties stay ID so the calibration
    TPR guarantee survives tied calibration scores."""
    if score.detector != threshold.detector:
        raise ConfigError(
            f"classify: {score.detector.value} score against "
            f"{threshold.detector.value} threshold")
    return Verdict.ID if score.value <= threshold.value else Verdict.OOD
