"""Instance masks of fully visible PV modules, plus detection-quality metrics.

Two mask sources share one output type: a baseline connected-component
thresholding segmenter (good enough for simulator scenes) and a loader for
externally produced masks in a run-length-encoded JSON format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .ingest import TemperatureFrame

MASK_FILE_FORMAT = "masks_{index:06d}.json"

# Components smaller than this many pixels are treated as noise by default.
DEFAULT_MIN_AREA_PX = 25

# Detection quality is scored at these ten IoU thresholds.
IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class ShapeMismatch(Exception):
    """RLE data does not cover the declared raster size exactly."""


class EmptyMask(Exception):
    """A mask entry decodes to zero set pixels."""

    def __init__(self, entry: int):
        super().__init__(f"mask entry {entry} has no pixels")
        self.entry = entry


class MalformedBox(Exception):
    """A bounding box has non-positive extent."""


@dataclass(eq=False)
class ModuleMask:
    """One module instance: tight box, centroid, and the box-cropped pixels.

    Only the crop is stored; `mask` materializes the frame-shaped boolean
    array on demand. The bbox uses exclusive maxima ((x_min, y_min, x_max,
    y_max) with x_max = last column + 1), and the centroid lives in
    continuous pixel coordinates where pixel (r, c) is centered at
    (c + 0.5, r + 0.5).
    """

    frame_index: int
    shape: tuple[int, int]
    bbox: tuple[float, float, float, float]
    center: tuple[float, float]
    crop: np.ndarray

    @classmethod
    def from_pixels(cls, frame_index: int, mask: np.ndarray) -> "ModuleMask":
        mask = np.asarray(mask, dtype=bool)
        rows, cols = np.nonzero(mask)
        if rows.size == 0:
            raise ValueError("empty mask")
        r0, r1 = int(rows.min()), int(rows.max() + 1)
        c0, c1 = int(cols.min()), int(cols.max() + 1)
        return cls(
            frame_index,
            mask.shape,
            (float(c0), float(r0), float(c1), float(r1)),
            (float(cols.mean() + 0.5), float(rows.mean() + 0.5)),
            mask[r0:r1, c0:c1].copy(),
        )

    @classmethod
    def from_crop(
        cls, frame_index: int, shape: tuple[int, int], crop: np.ndarray, x0: int, y0: int
    ) -> "ModuleMask":
        """Build from a tight crop already cut out at (x0, y0)."""
        crop = np.asarray(crop, dtype=bool)
        rows, cols = np.nonzero(crop)
        if rows.size == 0:
            raise ValueError("empty mask")
        bbox = (float(x0), float(y0), float(x0 + crop.shape[1]), float(y0 + crop.shape[0]))
        center = (float(cols.mean() + x0 + 0.5), float(rows.mean() + y0 + 0.5))
        return cls(frame_index, tuple(shape), bbox, center, crop)

    @property
    def mask(self) -> np.ndarray:
        full = np.zeros(self.shape, dtype=bool)
        x0, y0, x1, y1 = (int(v) for v in self.bbox)
        full[y0:y1, x0:x1] = self.crop
        return full

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.crop))

    @property
    def width(self) -> float:
        return self.bbox[2] - self.bbox[0]

    @property
    def height(self) -> float:
        return self.bbox[3] - self.bbox[1]


def segment_threshold(
    tf: TemperatureFrame,
    threshold_celsius: float,
    min_area_px: int = 1,
    max_area_px: int | None = None,
) -> list[ModuleMask]:
    """Segment warm connected components as module instances.

    4-connected components of (celsius >= threshold) whose area lies in
    [min_area_px, max_area_px] become masks; components touching the frame
    border are discarded so only fully visible modules survive.
    """
    binary = tf.celsius >= threshold_celsius
    labels, count = ndimage.label(binary, structure=_CROSS)
    if count == 0:
        return []
    masks: list[ModuleMask] = []
    slices = ndimage.find_objects(labels)
    h, w = binary.shape
    areas = ndimage.sum_labels(binary, labels, index=np.arange(1, count + 1))
    for k, sl in enumerate(slices):
        area = int(areas[k])
        if area < min_area_px or (max_area_px is not None and area > max_area_px):
            continue
        rs, cs = sl
        if rs.start == 0 or cs.start == 0 or rs.stop == h or cs.stop == w:
            continue  # touches the border: module not fully visible
        crop = labels[sl] == (k + 1)
        masks.append(ModuleMask.from_crop(tf.index, binary.shape, crop, cs.start, rs.start))
    return masks


# ---------------------------------------------------------------------------
# RLE mask files


def encode_rle(mask: np.ndarray) -> list[int]:
    """Row-major run lengths alternating background/foreground, background first."""
    flat = np.asarray(mask, dtype=bool).ravel()
    # run boundaries at every value change
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def decode_rle(runs: list[int], width: int, height: int) -> np.ndarray:
    runs = [int(r) for r in runs]
    if any(r < 0 for r in runs):
        raise ShapeMismatch("negative run length")
    total = sum(runs)
    if total != width * height:
        raise ShapeMismatch(f"runs cover {total} px, raster has {width * height}")
    values = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(values, runs)
    return flat.reshape(height, width)


def write_masks(path: str | Path, masks: list[ModuleMask], width: int, height: int) -> None:
    doc = {
        "width": int(width),
        "height": int(height),
        "instances": [{"rle": encode_rle(m.mask)} for m in masks],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_masks(path: str | Path, frame_index: int) -> list[ModuleMask]:
    """Load instance masks from an RLE-JSON file.

    Geometry (bbox, center) is recomputed from the decoded pixels rather than
    trusted from the file.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    width = int(doc["width"])
    height = int(doc["height"])
    masks = []
    for entry, inst in enumerate(doc.get("instances", [])):
        decoded = decode_rle(inst["rle"], width, height)
        if not decoded.any():
            raise EmptyMask(entry)
        masks.append(ModuleMask.from_pixels(frame_index, decoded))
    return masks


# ---------------------------------------------------------------------------
# Detection metrics

Box = tuple[float, float, float, float]


def box_iou(a: Box, b: Box) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


@dataclass(eq=False)
class DetectionEval:
    """Counts and scores at each of the ten IoU thresholds, plus AP."""

    iou_thresholds: tuple[float, ...]
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    ap: float


def _scores(tp: np.ndarray, fp: np.ndarray, fn: np.ndarray):
    tp = tp.astype(np.float64)
    denom_p = tp + fp
    denom_r = tp + fn
    precision = np.divide(tp, denom_p, out=np.zeros_like(tp), where=denom_p > 0)
    recall = np.divide(tp, denom_r, out=np.zeros_like(tp), where=denom_r > 0)
    denom_f = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom_f, out=np.zeros_like(tp), where=denom_f > 0)
    return precision, recall, f1


def _average_precision(precision: np.ndarray, recall: np.ndarray) -> float:
    """Trapezoid area under the recall-sorted PR points.

    When the smallest recall is positive the curve is anchored at
    (0, first precision) so a perfect detector integrates to 1.0.
    """
    order = np.argsort(recall, kind="stable")
    r = recall[order]
    p = precision[order]
    if r[0] > 0:
        r = np.concatenate(([0.0], r))
        p = np.concatenate(([p[0]], p))
    return float(_trapezoid(p, r))


def _validate_boxes(boxes: list[Box]) -> None:
    for b in boxes:
        if len(b) != 4 or not (b[0] < b[2] and b[1] < b[3]):
            raise MalformedBox(f"bad box {b!r}")


def evaluate_detections(predicted: list[Box], truth: list[Box]) -> DetectionEval:
    """Score predicted boxes against ground truth at the ten IoU thresholds.

    Pairs are matched one-to-one greedily in descending IoU order; a matched
    pair counts as TP at every threshold its IoU strictly exceeds. Because
    all pairs above any threshold are processed before any pair below it,
    this single matching is identical to running the greedy matcher per
    threshold.
    """
    _validate_boxes(predicted)
    _validate_boxes(truth)
    pairs = []
    for i, pb in enumerate(predicted):
        for j, tb in enumerate(truth):
            iou = box_iou(pb, tb)
            if iou > 0:
                pairs.append((iou, i, j))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_pred: set[int] = set()
    used_truth: set[int] = set()
    matched_ious: list[float] = []
    for iou, i, j in pairs:
        if i in used_pred or j in used_truth:
            continue
        used_pred.add(i)
        used_truth.add(j)
        matched_ious.append(iou)

    thresholds = np.array(IOU_THRESHOLDS)
    ious = np.array(matched_ious) if matched_ious else np.zeros(0)
    tp = (ious[None, :] > thresholds[:, None]).sum(axis=1) if ious.size else np.zeros(10, dtype=int)
    tp = tp.astype(int)
    fp = len(predicted) - tp
    fn = len(truth) - tp
    precision, recall, f1 = _scores(tp, fp, fn)
    ap = _average_precision(precision, recall)
    return DetectionEval(IOU_THRESHOLDS, tp, fp, fn, precision, recall, f1, ap)


def evaluate_frames(
    per_frame: list[tuple[list[Box], list[Box]]],
    mode: str = "pooled",
) -> DetectionEval:
    """Aggregate detection metrics over frames.

    "pooled" (default) sums TP/FP/FN over frames per threshold and scores the
    pooled counts; "per_frame" averages each frame's precision/recall/F1/AP
    (counts still summed for reference).
    """
    evals = [evaluate_detections(pred, truth) for pred, truth in per_frame]
    if not evals:
        raise ValueError("no frames to evaluate")
    tp = np.sum([e.tp for e in evals], axis=0)
    fp = np.sum([e.fp for e in evals], axis=0)
    fn = np.sum([e.fn for e in evals], axis=0)
    if mode == "pooled":
        precision, recall, f1 = _scores(tp, fp, fn)
        ap = _average_precision(precision, recall)
    elif mode == "per_frame":
        precision = np.mean([e.precision for e in evals], axis=0)
        recall = np.mean([e.recall for e in evals], axis=0)
        f1 = np.mean([e.f1 for e in evals], axis=0)
        ap = float(np.mean([e.ap for e in evals]))
    else:
        raise ValueError(f"bad mode {mode!r}")
    return DetectionEval(IOU_THRESHOLDS, tp, fp, fn, precision, recall, f1, ap)
