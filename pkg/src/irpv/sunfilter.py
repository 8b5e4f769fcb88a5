"""Reflection screening over a track's rectified patch sequence.

Sun glints move across a module from frame to frame while genuine hot
regions stay put, so the hottest-pixel statistics of a patch sequence split
into a stable reference stretch and outliers that jump in position. Patches
deviating from the reference in both temperature and location are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class PatchThermalStats:
    """Hottest-pixel summary of one rectified patch.

    T is the peak temperature in celsius; (x, y) its pixel-center position
    inside the patch (first occurrence in row-major order on ties); p is the
    radial magnitude hypot(x, y) used for jump detection.
    """

    ordinal: int
    T: float
    x: float
    y: float
    p: float


@dataclass(eq=False)
class ReflectionReference:
    """Median hottest-pixel state over the most stable patch stretch."""

    T: float
    x: float
    y: float
    source_range: tuple[int, int]


def patch_stats(ordinal: int, patch_celsius: np.ndarray) -> PatchThermalStats:
    patch = np.asarray(patch_celsius, dtype=np.float64)
    if patch.ndim != 2 or patch.size == 0:
        raise ValueError("patch must be a nonempty 2-D array")
    flat_idx = int(patch.argmax())
    r, c = divmod(flat_idx, patch.shape[1])
    x = c + 0.5
    y = r + 0.5
    return PatchThermalStats(ordinal, float(patch[r, c]), x, y, float(np.hypot(x, y)))


def _spans(p_values: np.ndarray, jump_px: float) -> list[tuple[int, int]]:
    """Maximal stretches with no position jump, as inclusive (start, end).

    A jump is a change in p larger than jump_px between consecutive entries;
    isolated entries between two jumps form length-1 spans.
    """
    jumps = np.abs(np.diff(p_values)) > jump_px
    spans = []
    start = 0
    for k, is_jump in enumerate(jumps):
        if is_jump:
            spans.append((start, k))
            start = k + 1
    spans.append((start, len(p_values) - 1))
    return spans


def find_reference_span(
    stats: list[PatchThermalStats],
    jump_px: float = 10.0,
    min_run_frac: float = 0.3,
) -> tuple[int, int]:
    """Pick the patch index range the reference is computed from.

    Candidate spans are those longer than min_run_frac of the sequence; when
    none qualifies, the single longest span stands in (earliest on ties).
    Among candidates the one with the smallest population variance of T
    wins, again earliest on ties.
    """
    if not stats:
        raise ValueError("no patch stats")
    p = np.array([s.p for s in stats])
    spans = _spans(p, jump_px)
    candidates = [s for s in spans if (s[1] - s[0] + 1) > min_run_frac * len(stats)]
    if not candidates:
        longest = max(s[1] - s[0] for s in spans)
        return next(s for s in spans if s[1] - s[0] == longest)
    temps = np.array([s.T for s in stats])
    return min(candidates, key=lambda s: (float(np.var(temps[s[0] : s[1] + 1])), s[0]))


def build_reference(
    stats: list[PatchThermalStats], span: tuple[int, int]
) -> ReflectionReference:
    lo, hi = span
    chunk = stats[lo : hi + 1]
    return ReflectionReference(
        float(np.median([s.T for s in chunk])),
        float(np.median([s.x for s in chunk])),
        float(np.median([s.y for s in chunk])),
        (chunk[0].ordinal, chunk[-1].ordinal),
    )


def select_reference(
    stats: list[PatchThermalStats],
    jump_px: float = 10.0,
    min_run_frac: float = 0.3,
) -> ReflectionReference:
    """Reference built over the stretch find_reference_span picks."""
    return build_reference(stats, find_reference_span(stats, jump_px, min_run_frac))


def filter_reflections(
    stats: list[PatchThermalStats],
    ref: ReflectionReference | None = None,
    temp_tol: float = 5.0,
    dist_tol: float = 10.0,
    jump_px: float = 10.0,
    min_run_frac: float = 0.3,
) -> tuple[list[int], list[int], ReflectionReference]:
    """Split patch ordinals into (kept, dropped) against the reference.

    A patch is dropped only when its peak deviates from the reference by
    more than temp_tol kelvin AND its peak position moved more than
    dist_tol pixels; either alone is tolerated. The reference is computed
    from the stats themselves unless one is passed in.
    """
    if ref is None:
        ref = select_reference(stats, jump_px, min_run_frac)
    kept: list[int] = []
    dropped: list[int] = []
    for s in stats:
        hot = abs(s.T - ref.T) > temp_tol
        moved = np.hypot(s.x - ref.x, s.y - ref.y) > dist_tol
        if hot and moved:
            dropped.append(s.ordinal)
        else:
            kept.append(s.ordinal)
    return kept, dropped, ref
