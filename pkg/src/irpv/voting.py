"""Anomaly classes, per-plant vote pooling, and classification metrics.

Plants collect one class prediction per surviving patch; pooling them by
majority vote lifts accuracy above the single-patch rate because
independent errors rarely agree on the same wrong class.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .plantgraph import PlantId


class KeyMismatch(ValueError):
    """Truth and prediction maps cover different module sets."""


class AnomalyClass(Enum):
    """Module condition labels. Declaration order defines the ordinal."""

    HEALTHY = "Healthy"
    MH = "Mh"
    MP = "Mp"
    SH = "Sh"
    SP = "Sp"
    PID = "Pid"
    CM_PLUS = "Cm+"
    CS_PLUS = "Cs+"
    C = "C"
    D = "D"
    CHS = "Chs"

    @property
    def ordinal(self) -> int:
        return _ORDINALS[self]


_ORDINALS = {cls: k for k, cls in enumerate(AnomalyClass)}
N_CLASSES = len(AnomalyClass)


@dataclass(frozen=True)
class PatchPrediction:
    """One externally produced class prediction for one patch."""

    plant_id: PlantId
    ordinal: int
    label: AnomalyClass
    confidence: float | None = None

    def __post_init__(self):
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


def read_predictions_csv(path: str | Path) -> list[PatchPrediction]:
    """Parse a `plant_id,ordinal,label,confidence` file (confidence may be blank)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["plant_id", "ordinal", "label", "confidence"]:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}: expected 4 fields, got {len(row)}")
            conf = float(row[3]) if row[3].strip() else None
            out.append(
                PatchPrediction(
                    PlantId.parse(row[0]), int(row[1]), AnomalyClass(row[2]), conf
                )
            )
    return out


def majority_vote(preds: list[PatchPrediction]) -> AnomalyClass:
    """Most voted label; ties fall to summed confidence, then lowest ordinal.

    Missing confidences count as 0.0 in the tie-break.
    """
    if not preds:
        raise ValueError("no predictions")
    counts = [0] * N_CLASSES
    confidence = [0.0] * N_CLASSES
    for pred in preds:
        counts[pred.label.ordinal] += 1
        if pred.confidence is not None:
            confidence[pred.label.ordinal] += pred.confidence
    best = min(range(N_CLASSES), key=lambda k: (-counts[k], -confidence[k], k))
    return list(AnomalyClass)[best]


def pool_predictions(preds: list[PatchPrediction]) -> dict[PlantId, AnomalyClass]:
    """Majority-vote label per plant over all of its patch predictions."""
    by_plant: dict[PlantId, list[PatchPrediction]] = {}
    for pred in preds:
        by_plant.setdefault(pred.plant_id, []).append(pred)
    return {plant: majority_vote(v) for plant, v in sorted(by_plant.items())}


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    """Module-level metrics; confusion rows are truth, columns predictions."""

    accuracy: float
    per_class: dict[AnomalyClass, ClassScores]
    macro_f1: float
    weighted_f1: float
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {
                cls.value: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for cls, s in self.per_class.items()
            },
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "labels": [cls.value for cls in AnomalyClass],
            "confusion": self.confusion.tolist(),
        }


def classification_report(
    truth: dict, predicted: dict
) -> ClassificationReport:
    """Accuracy, per-class precision/recall/F1, macro and weighted F1.

    Both arguments map module keys to AnomalyClass; the key sets must be
    equal. Macro F1 averages over the classes present in truth or
    predictions, weighted F1 weights each class by its truth support.
    """
    if set(truth) != set(predicted):
        missing = sorted(str(k) for k in set(truth) - set(predicted))
        extra = sorted(str(k) for k in set(predicted) - set(truth))
        raise KeyMismatch(f"missing predictions: {missing}, unknown keys: {extra}")
    if not truth:
        raise KeyMismatch("empty maps")

    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for key, t in truth.items():
        cm[t.ordinal, predicted[key].ordinal] += 1

    tp = np.diag(cm).astype(np.float64)
    col = cm.sum(axis=0).astype(np.float64)
    row = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    recall = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    denom = precision + recall
    f1 = np.divide(
        2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0
    )

    per_class = {
        cls: ClassScores(
            float(precision[k]), float(recall[k]), float(f1[k]), int(row[k])
        )
        for k, cls in enumerate(AnomalyClass)
    }
    present = np.nonzero((row > 0) | (col > 0))[0]
    macro = float(f1[present].mean())
    weighted = float((f1 * row).sum() / row.sum())
    accuracy = float(tp.sum() / cm.sum())
    return ClassificationReport(accuracy, per_class, macro, weighted, cm)


def vote_improvement_experiment(
    module_count: int,
    patches_per_module: int,
    flip_prob: float,
    rng_seed: int,
) -> tuple[float, float]:
    """Simulated (patch_accuracy, module_accuracy) under symmetric label noise.

    True classes are uniform over the 11 labels; each patch prediction is
    flipped with probability flip_prob to a uniformly random other class.
    Votes pool by plain majority, ties to the lowest ordinal (no
    confidences here, so the usual tie chain reduces to that).
    """
    if module_count < 1 or patches_per_module < 1:
        raise ValueError("counts must be >= 1")
    if not 0.0 <= flip_prob < (N_CLASSES - 1) / N_CLASSES:
        raise ValueError(
            f"flip_prob {flip_prob} outside [0, {(N_CLASSES - 1) / N_CLASSES:.4f})"
        )
    rng = np.random.default_rng(rng_seed)
    truth = rng.integers(0, N_CLASSES, size=module_count)
    flipped = rng.random((module_count, patches_per_module)) < flip_prob
    shift = rng.integers(1, N_CLASSES, size=(module_count, patches_per_module))
    preds = np.where(flipped, (truth[:, None] + shift) % N_CLASSES, truth[:, None])

    patch_accuracy = float((preds == truth[:, None]).mean())
    counts = np.zeros((module_count, N_CLASSES), dtype=np.int64)
    rows = np.repeat(np.arange(module_count), patches_per_module)
    np.add.at(counts, (rows, preds.ravel()), 1)
    voted = counts.argmax(axis=1)
    module_accuracy = float((voted == truth).mean())
    return patch_accuracy, module_accuracy
