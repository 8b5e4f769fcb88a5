"""Center-line fitting over module centroids and front-row selection.

Modules in a frame lie on a small number of near-horizontal lines, one per
visible row of modules. Sequential RANSAC recovers those lines, mutually
intersecting fits are pruned, and the rows nearest the camera (largest
intercept, image bottom) are kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .segmentation import ModuleMask


class NoLinesFound(Exception):
    """Sequential RANSAC produced no line with enough inliers."""


class TooFewLines(Exception):
    """Fewer surviving lines than requested rows."""

    def __init__(self, found: int, needed: int):
        super().__init__(f"found {found} lines, need {needed}")
        self.found = found
        self.needed = needed


@dataclass(eq=False)
class CenterLine:
    """y = slope * x + intercept plus the mask ordinals that voted for it."""

    slope: float
    intercept: float
    inlier_ordinals: tuple[int, ...]

    def y_at(self, x: float) -> float:
        return self.slope * x + self.intercept


def _residuals(slope: float, intercept: float, pts: np.ndarray) -> np.ndarray:
    return np.abs(pts[:, 1] - (slope * pts[:, 0] + intercept))


def fit_center_lines(
    masks: list[ModuleMask],
    rng: np.random.Generator,
    min_inliers: int = 3,
    max_iterations: int = 500,
    tol_factor: float = 0.25,
    tol_fallback: float = 10.0,
    angle_max_deg: float = 20.0,
) -> list[CenterLine]:
    """Fit near-horizontal lines through module centroids, strongest first.

    The inlier tolerance scales with the median mask height so it follows the
    flight altitude. Lines steeper than angle_max_deg are never accepted.
    Consensus inliers are fit once more by total least squares, then removed,
    and the search repeats on the remainder.
    """
    if not masks:
        raise NoLinesFound("no masks")
    centers = np.array([m.center for m in masks], dtype=np.float64)
    heights = np.array([m.height for m in masks], dtype=np.float64)
    tol = tol_factor * float(np.median(heights)) if heights.size else tol_fallback
    if tol <= 0:
        tol = tol_fallback
    slope_max = np.tan(np.deg2rad(angle_max_deg))

    remaining = list(range(len(masks)))
    lines: list[CenterLine] = []
    while len(remaining) >= min_inliers:
        pts = centers[remaining]
        best_count = 0
        best_params: tuple[float, float] | None = None
        best_inliers: np.ndarray | None = None
        for _ in range(max_iterations):
            i, j = rng.choice(len(remaining), size=2, replace=False)
            (x1, y1), (x2, y2) = pts[i], pts[j]
            if x1 == x2:
                continue
            slope = (y2 - y1) / (x2 - x1)
            if abs(slope) > slope_max:
                continue
            intercept = y1 - slope * x1
            inliers = _residuals(slope, intercept, pts) <= tol
            count = int(inliers.sum())
            if count > best_count:
                best_count = count
                best_params = (slope, intercept)
                best_inliers = inliers
        if best_params is None or best_count < min_inliers:
            break

        slope, intercept = best_params
        sel = pts[best_inliers]
        # total least squares via the principal direction of the inliers
        mean = sel.mean(axis=0)
        centered = sel - mean
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        vx, vy = vt[0]
        if vx != 0 and abs(vy / vx) <= slope_max:
            slope = vy / vx
            intercept = mean[1] - slope * mean[0]
        ordinals = tuple(sorted(remaining[k] for k in np.flatnonzero(best_inliers)))
        lines.append(CenterLine(float(slope), float(intercept), ordinals))
        drop = set(ordinals)
        remaining = [k for k in remaining if k not in drop]

    if not lines:
        raise NoLinesFound("no consensus line")
    return lines


def prune_intersecting(
    lines: list[CenterLine],
    masks: list[ModuleMask],
    frame_width: float,
) -> list[CenterLine]:
    """Drop lines until none intersect another inside the frame's x span.

    Repeatedly removes the line crossing the most others within
    [0, frame_width]; ties go against the line with fewer inliers, then the
    larger total residual, then the larger position in the list.
    """
    centers = np.array([m.center for m in masks], dtype=np.float64)
    kept = list(lines)

    def total_residual(line: CenterLine) -> float:
        pts = centers[list(line.inlier_ordinals)]
        return float(_residuals(line.slope, line.intercept, pts).sum())

    while len(kept) > 1:
        counts = [0] * len(kept)
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                dm = kept[i].slope - kept[j].slope
                if dm == 0:
                    continue
                x = (kept[j].intercept - kept[i].intercept) / dm
                if 0.0 <= x <= frame_width:
                    counts[i] += 1
                    counts[j] += 1
        if max(counts) == 0:
            break
        worst = max(
            range(len(kept)),
            key=lambda k: (
                counts[k],
                -len(kept[k].inlier_ordinals),
                total_residual(kept[k]),
                k,
            ),
        )
        kept.pop(worst)
    return kept


def select_front_lines(lines: list[CenterLine], count: int) -> list[CenterLine]:
    """The `count` lines nearest the camera (largest intercept), front first."""
    if len(lines) < count:
        raise TooFewLines(len(lines), count)
    return sorted(lines, key=lambda ln: -ln.intercept)[:count]


def select_front_rows(
    lines: list[CenterLine], rows_per_stack: int
) -> tuple[list[CenterLine], list[int]]:
    """Front lines plus the sorted union of their inlier ordinals."""
    selected = select_front_lines(lines, rows_per_stack)
    ordinals = sorted({k for ln in selected for k in ln.inlier_ordinals})
    return selected, ordinals


def filter_front_row(
    masks: list[ModuleMask],
    rows_per_stack: int,
    frame_width: float,
    rng: np.random.Generator,
    **fit_kwargs,
) -> tuple[list[CenterLine], list[int]]:
    """Full per-frame pass: fit, prune, select, and report surviving ordinals.

    Returns the selected front lines (front first) and the sorted mask
    ordinals belonging to them.
    """
    lines = fit_center_lines(masks, rng, **fit_kwargs)
    pruned = prune_intersecting(lines, masks, frame_width)
    return select_front_rows(pruned, rows_per_stack)


fit_lines = fit_center_lines
