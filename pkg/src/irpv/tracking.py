"""Inter-frame motion estimation and module identity tracking.

Keypoints come from a minimum-eigenvalue corner detector, get binary
intensity-comparison descriptors, and are matched by mutual nearest Hamming
distance. A RANSAC homography over the matches gives per-frame-pair motion;
module masks are then carried across frames by projecting the previous
centroids and matching them to current centroids under a spacing-derived
gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .rectify import DegenerateConfiguration, apply_homography, estimate_homography_dlt
from .segmentation import ModuleMask


class MotionEstimationFailed(Exception):
    """Not enough consistent matches to recover inter-frame motion."""


class AmbiguousDirection(Exception):
    """Horizontal motion too small to tell the scan direction."""


class DuplicateTrack(Exception):
    """A track id was assigned twice in the same frame."""


# Binary descriptor sampling pattern: 256 point pairs inside a radius-15
# patch, fixed at import so descriptors are comparable across processes.
_PATCH_RADIUS = 15
_rng = np.random.default_rng(41201)
_PATTERN = np.clip(
    np.rint(_rng.normal(0.0, _PATCH_RADIUS / 2.5, size=(256, 4))),
    -_PATCH_RADIUS,
    _PATCH_RADIUS,
).astype(np.int64)
del _rng

_POPCOUNT = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)


def detect_and_describe(
    image: np.ndarray,
    max_corners: int = 300,
    min_distance: int = 5,
    quality: float = 1e-5,
) -> tuple[np.ndarray, np.ndarray]:
    """Corner points (N, 2) as (x, y) pixel centers plus (N, 32) descriptors.

    Corner strength is the smaller structure-tensor eigenvalue; candidates
    survive non-maximum suppression over a (2 * min_distance + 1) window and
    a relative quality floor, then the budget of max_corners is spread over
    coarse spatial cells (strongest first, ties broken by position; leftover
    budget goes to the strongest rejects). The floor is near zero on purpose,
    a guard against exactly flat frames only, and the spatial spread matters:
    thermal scenes pair very strong module edges with faint ground texture,
    and either a stricter floor or a plain top-N cut would drop every texture
    corner on module-rich frames, leaving only the periodic module grid,
    which aliases between frames. Descriptors are 256 brighter/darker
    comparisons on a smoothed copy, packed to 32 bytes.
    """
    img = np.asarray(image, dtype=np.float64)
    ix = ndimage.sobel(img, axis=1)
    iy = ndimage.sobel(img, axis=0)
    sxx = ndimage.gaussian_filter(ix * ix, 1.5)
    syy = ndimage.gaussian_filter(iy * iy, 1.5)
    sxy = ndimage.gaussian_filter(ix * iy, 1.5)
    half_trace = (sxx + syy) / 2.0
    response = half_trace - np.sqrt(((sxx - syy) / 2.0) ** 2 + sxy * sxy)

    # the border margin is outside the detection domain, so it must not
    # contribute to the quality floor either
    margin = _PATCH_RADIUS + 1
    if img.shape[0] <= 2 * margin or img.shape[1] <= 2 * margin:
        return np.zeros((0, 2)), np.zeros((0, 32), dtype=np.uint8)
    interior = np.zeros_like(response, dtype=bool)
    interior[margin:-margin, margin:-margin] = True
    window = 2 * min_distance + 1
    peaks = (
        interior
        & (response == ndimage.maximum_filter(response, size=window))
        & (response > quality * response[interior].max())
    )
    rows, cols = np.nonzero(peaks)
    if rows.size == 0:
        return np.zeros((0, 2)), np.zeros((0, 32), dtype=np.uint8)
    order = np.lexsort((cols, rows, -response[rows, cols]))
    rows, cols = rows[order], cols[order]
    if rows.size > max_corners:
        cell = 2 * margin
        n_cx = -(-img.shape[1] // cell)
        n_cy = -(-img.shape[0] // cell)
        quota = -(-max_corners // (n_cx * n_cy))
        cell_of = (rows // cell) * n_cx + (cols // cell)
        taken = np.zeros(n_cx * n_cy, dtype=np.int64)
        keep: list[int] = []
        spill: list[int] = []
        for i in range(rows.size):
            if taken[cell_of[i]] < quota:
                taken[cell_of[i]] += 1
                keep.append(i)
                if len(keep) == max_corners:
                    break
            else:
                spill.append(i)
        keep.extend(spill[: max_corners - len(keep)])
        sel = np.array(sorted(keep), dtype=np.int64)
        rows, cols = rows[sel], cols[sel]

    smooth = ndimage.gaussian_filter(img, 2.0)
    r1 = rows[:, None] + _PATTERN[None, :, 0]
    c1 = cols[:, None] + _PATTERN[None, :, 1]
    r2 = rows[:, None] + _PATTERN[None, :, 2]
    c2 = cols[:, None] + _PATTERN[None, :, 3]
    bits = smooth[r1, c1] < smooth[r2, c2]
    descriptors = np.packbits(bits, axis=1)
    points = np.stack([cols + 0.5, rows + 0.5], axis=1)
    return points, descriptors


def match_descriptors(
    desc_a: np.ndarray,
    desc_b: np.ndarray,
    max_distance: int = 64,
) -> np.ndarray:
    """Mutual nearest-neighbor Hamming matches as an (M, 2) index array."""
    if len(desc_a) == 0 or len(desc_b) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    xor = desc_a[:, None, :] ^ desc_b[None, :, :]
    dist = _POPCOUNT[xor].sum(axis=2, dtype=np.int64)
    fwd = dist.argmin(axis=1)
    bwd = dist.argmin(axis=0)
    idx_a = np.arange(len(desc_a))
    mutual = bwd[fwd] == idx_a
    close = dist[idx_a, fwd] <= max_distance
    keep = mutual & close
    return np.stack([idx_a[keep], fwd[keep]], axis=1)


def _symmetric_transfer_error(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    h_inv = np.linalg.inv(h)
    fwd = np.hypot(*(apply_homography(h, src) - dst).T)
    bwd = np.hypot(*(apply_homography(h_inv, dst) - src).T)
    return np.maximum(fwd, bwd)


def estimate_homography_ransac(
    src: np.ndarray,
    dst: np.ndarray,
    rng: np.random.Generator,
    max_iterations: int = 1000,
    inlier_tol: float = 3.0,
    confidence: float = 0.999,
) -> tuple[np.ndarray, np.ndarray]:
    """RANSAC homography over point correspondences.

    Inliers keep symmetric transfer error (the larger of forward and
    backward) within inlier_tol. Iterations stop early once the running best
    consensus makes a better sample unlikely at the given confidence. The
    final model is a least-squares refit on the best consensus set.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = len(src)
    if n < 4:
        raise MotionEstimationFailed(f"{n} matches")
    best_count = 0
    best_inliers: np.ndarray | None = None
    budget = max_iterations
    it = 0
    while it < budget:
        it += 1
        sample = rng.choice(n, size=4, replace=False)
        try:
            h = estimate_homography_dlt(src[sample], dst[sample])
        except DegenerateConfiguration:
            continue
        err = _symmetric_transfer_error(h, src, dst)
        inliers = err <= inlier_tol
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
            ratio = count / n
            miss = 1.0 - ratio**4
            if miss <= 0:
                budget = it
            else:
                needed = int(np.ceil(np.log(1.0 - confidence) / np.log(miss)))
                budget = min(budget, max(it, needed))
    if best_inliers is None or best_count < 4:
        raise MotionEstimationFailed(f"best consensus {best_count}")
    try:
        h = estimate_homography_dlt(src[best_inliers], dst[best_inliers])
    except DegenerateConfiguration as exc:
        raise MotionEstimationFailed("degenerate consensus set") from exc
    return h, best_inliers


@dataclass(eq=False)
class InterFrameMotion:
    """Homography h maps from_frame pixel coordinates into to_frame."""

    from_frame: int
    to_frame: int
    h: np.ndarray
    inlier_count: int
    mean_horizontal_motion: float


def estimate_motion(
    index_a: int,
    raster_a: np.ndarray,
    index_b: int,
    raster_b: np.ndarray,
    rng: np.random.Generator,
    features_a: tuple[np.ndarray, np.ndarray] | None = None,
    features_b: tuple[np.ndarray, np.ndarray] | None = None,
    **ransac_kwargs,
) -> InterFrameMotion:
    """Estimate frame a -> frame b motion from keypoint matches.

    Precomputed (points, descriptors) for either frame can be passed to avoid
    re-detecting when walking a sequence.
    """
    pa, da = features_a if features_a is not None else detect_and_describe(raster_a)
    pb, db = features_b if features_b is not None else detect_and_describe(raster_b)
    matches = match_descriptors(da, db)
    if len(matches) < 4:
        raise MotionEstimationFailed(f"{len(matches)} matches")
    src = pa[matches[:, 0]]
    dst = pb[matches[:, 1]]
    h, inliers = estimate_homography_ransac(src, dst, rng, **ransac_kwargs)
    mean_dx = float((dst[inliers, 0] - src[inliers, 0]).mean())
    return InterFrameMotion(index_a, index_b, h, int(inliers.sum()), mean_dx)


def estimate_scan_direction(motions: list[InterFrameMotion], min_abs: float = 0.1) -> str:
    """"rightward" or "leftward" from the median horizontal image motion.

    The camera moving right makes static content drift left in the image, so
    a negative median means a rightward scan.
    """
    if not motions:
        raise AmbiguousDirection("no motion samples")
    med = float(np.median([m.mean_horizontal_motion for m in motions]))
    if abs(med) <= min_abs:
        raise AmbiguousDirection(f"median horizontal motion {med:.3f}")
    return "rightward" if med < 0 else "leftward"


def direction_outlier_fraction(motions: list[InterFrameMotion]) -> float:
    """Fraction of pairs whose horizontal motion opposes the median sign."""
    values = np.array([m.mean_horizontal_motion for m in motions])
    med = np.median(values)
    if med == 0 or values.size == 0:
        return 0.0
    return float((values * med < 0).sum() / values.size)


# ---------------------------------------------------------------------------
# Identity assignment

def _nearest_neighbor_gate(centers: np.ndarray, factor: float) -> float:
    if factor <= 0 or len(centers) < 2:
        return np.inf
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    return factor * float(np.median(dist.min(axis=1)))


def associate_masks(
    prev_masks: list[ModuleMask],
    curr_masks: list[ModuleMask],
    prev_tracks: dict[str, int],
    h: np.ndarray,
    rng: np.random.Generator,
    gate_factor: float = 0.7,
) -> dict[str, int]:
    """Carry track ids from the previous frame's masks onto the current ones.

    Previous centroids are projected through h; each previous mask bids for
    its nearest current centroid, bids beyond the gate (gate_factor times the
    median nearest-neighbor spacing of current centroids) are void, and
    conflicting bids go to the smaller distance (then the smaller previous
    ordinal). Leftover current masks start fresh 96-bit hex track ids.
    """
    result: dict[str, int] = {}
    curr_centers = np.array([m.center for m in curr_masks], dtype=np.float64).reshape(-1, 2)
    matched_curr: set[int] = set()
    if prev_tracks and len(curr_masks) > 0:
        gate = _nearest_neighbor_gate(curr_centers, gate_factor)
        items = sorted(prev_tracks.items(), key=lambda kv: kv[1])
        prev_centers = np.array([prev_masks[ordinal].center for _, ordinal in items])
        projected = apply_homography(h, prev_centers)
        bids = []
        for k, (track_id, _) in enumerate(items):
            d = np.hypot(*(curr_centers - projected[k]).T)
            j = int(d.argmin())
            if d[j] <= gate:
                bids.append((float(d[j]), k, j, track_id))
        bids.sort(key=lambda b: (b[0], b[1]))
        used_prev: set[int] = set()
        for dist, k, j, track_id in bids:
            if k in used_prev or j in matched_curr:
                continue
            used_prev.add(k)
            matched_curr.add(j)
            result[track_id] = j
    for j in range(len(curr_masks)):
        if j not in matched_curr:
            result[rng.bytes(12).hex()] = j
    return result


@dataclass(eq=False)
class TrackStore:
    """Per-frame track assignments and per-track life lengths.

    assignments maps frame index to {track id: mask ordinal}; track_lengths
    counts the frames each track appears in. Tracks only ever extend from
    the immediately previous frame, so a track's life is one consecutive
    frame interval.
    """

    assignments: dict[int, dict[str, int]] = field(default_factory=dict)
    track_lengths: dict[str, int] = field(default_factory=dict)

    def record(self, frame_index: int, tracks: dict[str, int]) -> None:
        frame = self.assignments.setdefault(frame_index, {})
        for track_id, ordinal in tracks.items():
            if track_id in frame:
                raise DuplicateTrack(f"{track_id} twice in frame {frame_index}")
            frame[track_id] = ordinal
            self.track_lengths[track_id] = self.track_lengths.get(track_id, 0) + 1

    def frames_of(self, track_id: str) -> list[int]:
        return sorted(f for f, m in self.assignments.items() if track_id in m)

    def consecutive_length(self, track_id: str) -> int:
        frames = self.frames_of(track_id)
        if not frames:
            return 0
        best = run = 1
        for a, b in zip(frames, frames[1:]):
            run = run + 1 if b == a + 1 else 1
            best = max(best, run)
        return best

    def tracks_with_min_length(self, min_frames: int) -> list[str]:
        return sorted(
            t for t in self.track_lengths if self.consecutive_length(t) >= min_frames
        )


associate = associate_masks
