"""Quadrilateral fits for module masks and homography-based patch extraction.

A mask becomes a convex quad (corner lattice coordinates), the quad plus the
frame becomes an upright rectified patch via a direct linear transform
homography and bilinear resampling of the raw 16-bit values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .segmentation import ModuleMask


class DegenerateMask(Exception):
    """Mask has no usable convex outline."""


class DegenerateConfiguration(Exception):
    """Point correspondences do not pin down an invertible homography."""


@dataclass(eq=False)
class Quad:
    """Convex quadrilateral, corners (4, 2) float64 as (x, y).

    Corner order is top-left, top-right, bottom-right, bottom-left in image
    coordinates (y grows downward), starting from the corner minimizing
    (x + y, y, x).
    """

    corners: np.ndarray

    @property
    def perimeter(self) -> float:
        d = np.diff(np.vstack([self.corners, self.corners[:1]]), axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    @property
    def side_lengths(self) -> tuple[float, float, float, float]:
        """(top, right, bottom, left) edge lengths."""
        c = self.corners
        return (
            float(np.hypot(*(c[1] - c[0]))),
            float(np.hypot(*(c[2] - c[1]))),
            float(np.hypot(*(c[3] - c[2]))),
            float(np.hypot(*(c[0] - c[3]))),
        )


def _canonicalize(corners: np.ndarray) -> np.ndarray:
    center = corners.mean(axis=0)
    ang = np.arctan2(corners[:, 1] - center[1], corners[:, 0] - center[0])
    corners = corners[np.argsort(ang, kind="stable")]
    keys = [(c[0] + c[1], c[1], c[0]) for c in corners]
    start = min(range(len(corners)), key=lambda k: keys[k])
    return np.roll(corners, -start, axis=0)


def quad_from_bbox(bbox: tuple[float, float, float, float]) -> Quad:
    x0, y0, x1, y1 = bbox
    return Quad(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64))


def _boundary_corner_points(mask: np.ndarray) -> np.ndarray:
    """Pixel-corner lattice points of the mask's 8-boundary pixels.

    Interior pixels cannot be extreme in any direction, so the convex hull of
    these corners equals the hull of all pixel corners.
    """
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise DegenerateMask("empty mask")
    r0, r1 = rows.min(), rows.max() + 1
    c0, c1 = cols.min(), cols.max() + 1
    crop = np.zeros((r1 - r0 + 2, c1 - c0 + 2), dtype=bool)
    crop[1:-1, 1:-1] = mask[r0:r1, c0:c1]
    interior = ndimage.binary_erosion(crop, structure=np.ones((3, 3), dtype=bool))
    br, bc = np.nonzero(crop & ~interior)
    # back to frame coordinates, then fan out each pixel's 4 corners
    y = br - 1 + r0
    x = bc - 1 + c0
    pts = np.concatenate(
        [
            np.stack([x, y], axis=1),
            np.stack([x + 1, y], axis=1),
            np.stack([x, y + 1], axis=1),
            np.stack([x + 1, y + 1], axis=1),
        ]
    )
    return np.unique(pts, axis=0).astype(np.float64)


def _cross(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _remove_edge(poly: np.ndarray, i: int, center: np.ndarray, max_dist: float):
    """Drop edge i by extending its neighbors to their intersection.

    Returns (new_poly, perimeter_delta) or None when the neighbor edges are
    parallel, the intersection falls on the wrong side, or it lands
    unreasonably far from the polygon.
    """
    n = len(poly)
    a, b, c, d = poly[(i - 1) % n], poly[i], poly[(i + 1) % n], poly[(i + 2) % n]
    d1 = b - a
    d2 = d - c
    denom = _cross(d1, d2)
    if abs(denom) < 1e-12:
        return None
    rhs = c - a
    s = _cross(rhs, d2) / denom
    t = _cross(rhs, d1) / denom
    # p must extend edge (i-1) beyond b and precede c on edge (i+1)
    if s < 1.0 - 1e-9 or t > 1e-9:
        return None
    p = a + s * d1
    if np.hypot(*(p - center)) > max_dist:
        return None
    old = np.hypot(*(b - a)) + np.hypot(*(c - b)) + np.hypot(*(d - c))
    new = np.hypot(*(p - a)) + np.hypot(*(d - p))
    # vertex i becomes p, vertex i+1 disappears, cyclic order preserved
    out = []
    for k in range(n):
        if k == i:
            out.append(p)
        elif k == (i + 1) % n:
            continue
        else:
            out.append(poly[k])
    return np.array(out), float(new - old)


def reduce_to_quad(hull: np.ndarray) -> np.ndarray | None:
    """Greedy minimum-growth edge removal from a convex polygon down to 4 edges.

    Each round removes the edge whose deletion (extending both neighbor edges
    to their intersection) adds the least perimeter. Returns None when no
    edge can be removed validly before reaching 4 vertices.
    """
    poly = hull.astype(np.float64)
    x0, y0 = poly.min(axis=0)
    x1, y1 = poly.max(axis=0)
    center = np.array([(x0 + x1) / 2, (y0 + y1) / 2])
    max_dist = 1.5 * np.hypot(x1 - x0, y1 - y0)
    while len(poly) > 4:
        best = None
        for i in range(len(poly)):
            res = _remove_edge(poly, i, center, max_dist)
            if res is None:
                continue
            if best is None or res[1] < best[1]:
                best = res
        if best is None:
            return None
        poly = best[0]
    return poly


def fit_quad(mask: np.ndarray) -> Quad:
    """Fit a minimal-perimeter convex quad around a module mask.

    Hull of the mask's boundary pixel corners, reduced to four edges by
    greedy edge removal; the axis-aligned bounding box competes as a
    candidate so the result never exceeds the bbox perimeter.
    """
    pts = _boundary_corner_points(np.asarray(mask, dtype=bool))
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateMask(str(exc)) from exc
    poly = pts[hull.vertices]

    rows, cols = np.nonzero(mask)
    bbox = (float(cols.min()), float(rows.min()), float(cols.max() + 1), float(rows.max() + 1))
    candidates = [quad_from_bbox(bbox).corners]
    if len(poly) == 4:
        candidates.append(poly)
    elif len(poly) > 4:
        reduced = reduce_to_quad(poly)
        if reduced is not None:
            candidates.append(reduced)

    quads = [Quad(_canonicalize(c)) for c in candidates]
    best = min(quads, key=lambda q: q.perimeter)
    return best


def fit_min_perimeter_quad(mask: ModuleMask) -> Quad:
    """fit_quad on a ModuleMask, in frame coordinates, clipped to the frame.

    The fit runs on the stored crop and is shifted back by the bbox origin;
    corners are then clamped to the frame bounds, since greedy edge removal
    may extend an intersection slightly past the border.
    """
    local = fit_quad(mask.crop)
    corners = local.corners + np.array([mask.bbox[0], mask.bbox[1]])
    height, width = mask.shape
    corners[:, 0] = np.clip(corners[:, 0], 0.0, float(width))
    corners[:, 1] = np.clip(corners[:, 1], 0.0, float(height))
    return Quad(corners)


def iou_quad_mask(mask: ModuleMask, quad: Quad) -> float:
    """Pixel-raster IoU between a mask and a quad in frame coordinates.

    The quad is rasterized by testing pixel centers against its edges
    (boundary centers count as covered). A well-fit quad hugs its mask; a
    low value means the mask was not module-shaped to begin with.
    """
    corners = np.asarray(quad.corners, dtype=np.float64)
    mx0, my0, mx1, my1 = (int(v) for v in mask.bbox)
    x0 = min(int(np.floor(corners[:, 0].min())), mx0)
    y0 = min(int(np.floor(corners[:, 1].min())), my0)
    x1 = max(int(np.ceil(corners[:, 0].max())), mx1)
    y1 = max(int(np.ceil(corners[:, 1].max())), my1)
    px, py = np.meshgrid(np.arange(x0, x1) + 0.5, np.arange(y0, y1) + 0.5)

    area2 = 0.0
    for k in range(4):
        ax, ay = corners[k]
        bx, by = corners[(k + 1) % 4]
        area2 += ax * by - bx * ay
    sign = 1.0 if area2 >= 0 else -1.0
    inside = np.ones(px.shape, dtype=bool)
    for k in range(4):
        ax, ay = corners[k]
        bx, by = corners[(k + 1) % 4]
        inside &= sign * ((bx - ax) * (py - ay) - (by - ay) * (px - ax)) >= 0

    covered = np.zeros(px.shape, dtype=bool)
    covered[my0 - y0 : my1 - y0, mx0 - x0 : mx1 - x0] = mask.crop
    union = np.count_nonzero(inside | covered)
    if union == 0:
        return 0.0
    return np.count_nonzero(inside & covered) / union


# ---------------------------------------------------------------------------
# Homography estimation

def _hartley_normalization(pts: np.ndarray) -> np.ndarray:
    centroid = pts.mean(axis=0)
    dist = np.hypot(*(pts - centroid).T).mean()
    scale = np.sqrt(2.0) / dist if dist > 0 else 1.0
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def _any_three_collinear(pts: np.ndarray, tol: float = 1e-9) -> bool:
    n = len(pts)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                u = pts[j] - pts[i]
                v = pts[k] - pts[i]
                limit = tol * max(1.0, np.hypot(*u) * np.hypot(*v))
                if abs(_cross(u, v)) <= limit:
                    return True
    return False


def estimate_homography_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 homography mapping src points onto dst points (DLT, normalized).

    Needs at least 4 correspondences; with exactly 4 any collinear triple in
    either set raises DegenerateConfiguration. The result has h22 = 1.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) != len(dst) or len(src) < 4:
        raise DegenerateConfiguration("need at least 4 point pairs")
    if len(src) == 4 and (_any_three_collinear(src) or _any_three_collinear(dst)):
        raise DegenerateConfiguration("collinear points in minimal set")

    t_src = _hartley_normalization(src)
    t_dst = _hartley_normalization(dst)
    s = (src @ t_src[:2, :2].T) + t_src[:2, 2]
    d = (dst @ t_dst[:2, :2].T) + t_dst[:2, 2]

    n = len(s)
    a = np.zeros((2 * n, 9))
    a[0::2, 0] = -s[:, 0]
    a[0::2, 1] = -s[:, 1]
    a[0::2, 2] = -1.0
    a[0::2, 6] = d[:, 0] * s[:, 0]
    a[0::2, 7] = d[:, 0] * s[:, 1]
    a[0::2, 8] = d[:, 0]
    a[1::2, 3] = -s[:, 0]
    a[1::2, 4] = -s[:, 1]
    a[1::2, 5] = -1.0
    a[1::2, 6] = d[:, 1] * s[:, 0]
    a[1::2, 7] = d[:, 1] * s[:, 1]
    a[1::2, 8] = d[:, 1]

    _, _, vt = np.linalg.svd(a)
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h @ t_src
    if abs(np.linalg.det(h)) <= 1e-12:
        raise DegenerateConfiguration("singular homography")
    if abs(h[2, 2]) <= 1e-12:
        raise DegenerateConfiguration("homography has h22 = 0")
    return h / h[2, 2]


dlt_homography = estimate_homography_dlt


def apply_homography(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    q = np.hstack([pts, np.ones((len(pts), 1))]) @ np.asarray(h).T
    return q[:, :2] / q[:, 2:3]


# ---------------------------------------------------------------------------
# Patch extraction

def patch_size(quad: Quad) -> tuple[int, int]:
    """(width, height) of the rectified patch, each max side rounded half-up."""
    top, right, bottom, left = quad.side_lengths
    w = max(1, int(np.floor(max(top, bottom) + 0.5)))
    h = max(1, int(np.floor(max(left, right) + 0.5)))
    return w, h


def warp_patch(raster: np.ndarray, quad: Quad) -> np.ndarray:
    """Rectify the quad region of a raw 16-bit raster into an upright patch.

    Destination size comes from patch_size; each destination pixel center is
    mapped through the rectangle-to-quad homography and sampled bilinearly
    with edge clamping. Values round to the nearest uint16.
    """
    raster = np.asarray(raster)
    w, h = patch_size(quad)
    dst_corners = np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=np.float64)
    hom = estimate_homography_dlt(dst_corners, quad.corners)

    us, vs = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    pts = np.stack([us.ravel(), vs.ravel()], axis=1)
    mapped = apply_homography(hom, pts)
    # continuous pixel-center coordinates back to array index space
    xf = mapped[:, 0].reshape(h, w) - 0.5
    yf = mapped[:, 1].reshape(h, w) - 0.5

    x0 = np.floor(xf).astype(np.int64)
    y0 = np.floor(yf).astype(np.int64)
    fx = xf - x0
    fy = yf - y0
    rows, cols = raster.shape
    x0c = np.clip(x0, 0, cols - 1)
    x1c = np.clip(x0 + 1, 0, cols - 1)
    y0c = np.clip(y0, 0, rows - 1)
    y1c = np.clip(y0 + 1, 0, rows - 1)

    img = raster.astype(np.float64)
    val = (1 - fy) * ((1 - fx) * img[y0c, x0c] + fx * img[y0c, x1c]) + fy * (
        (1 - fx) * img[y1c, x0c] + fx * img[y1c, x1c]
    )
    return np.clip(np.rint(val), 0, 65535).astype(np.uint16)
