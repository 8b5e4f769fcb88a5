"""End-to-end extraction: scan-row frames in, per-plant patch folders out.

run_row drives one scan row through the full chain (temperature conversion,
module segmentation, front-row filtering, inter-frame motion, identity
tracking, track-to-plant graph matching, patch rectification, reflection
filtering) and writes that row's dataset subtree. run_plant fans rows out
over worker processes and writes the shared mapping/summary files; the
output tree is byte-identical for any worker count.

A row that cannot be processed is not an error: it lands in one of five
failure buckets (UAVTrajectory, SegmentationError, IrregularLayout,
RowFilterError, TrackGraphError) recorded in the run summary.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .ingest import (
    DEFAULT_TEMP_OFFSET,
    DEFAULT_TEMP_SCALE,
    Frame,
    RowSpec,
    load_frame_range,
    normalize_orientation,
    parse_gps_csv,
    raw_to_celsius,
    write_pgm,
)
from .plantgraph import (
    EmptyGraph,
    Grid,
    LayoutMismatch,
    PlantId,
    RowUnmatchable,
    SeedNotFound,
    UnknownRow,
    build_track_graph,
    find_seed,
    grid_for_row,
    grid_graph,
    load_plant_file,
    make_id_mapping,
    match_graphs,
)
from .rectify import (
    DegenerateConfiguration,
    DegenerateMask,
    apply_homography,
    fit_min_perimeter_quad,
    iou_quad_mask,
    warp_patch,
)
from .rowfilter import NoLinesFound, TooFewLines, filter_front_row
from .segmentation import (
    DEFAULT_MIN_AREA_PX,
    MASK_FILE_FORMAT,
    ModuleMask,
    load_masks,
    segment_threshold,
)
from .sunfilter import ReflectionReference, filter_reflections, patch_stats
from .tracking import (
    AmbiguousDirection,
    InterFrameMotion,
    MotionEstimationFailed,
    TrackStore,
    associate_masks,
    detect_and_describe,
    direction_outlier_fraction,
    estimate_motion,
    estimate_scan_direction,
)

UAV_TRAJECTORY = "UAVTrajectory"
SEGMENTATION_ERROR = "SegmentationError"
IRREGULAR_LAYOUT = "IrregularLayout"
ROW_FILTER_ERROR = "RowFilterError"
TRACK_GRAPH_ERROR = "TrackGraphError"


@dataclass
class RunConfig:
    """Everything one extraction run needs, JSON round-trippable."""

    frames_dir: str
    plant_file: str
    rows_file: str
    out_dir: str
    gps_csv: str | None = None
    predictions_csv: str | None = None
    temp_scale: float = DEFAULT_TEMP_SCALE
    temp_offset: float = DEFAULT_TEMP_OFFSET
    temp_threshold_c: float = 30.0
    min_area_px: int = DEFAULT_MIN_AREA_PX
    max_area_px: int | None = None
    masks_source: str = "threshold"  # or "files"
    masks_dir: str | None = None
    motion_source: str = "keypoints"  # or "truth"
    truth_dir: str | None = None
    max_corners: int = 300
    ransac_max_iterations: int = 1000
    ransac_inlier_tol: float = 3.0
    ransac_confidence: float = 0.999
    direction_min_abs: float = 0.1
    trajectory_outlier_frac: float = 0.10
    line_min_inliers: int = 3
    line_max_iterations: int = 500
    line_tol_factor: float = 0.25
    line_tol_fallback: float = 10.0
    angle_max_deg: float = 20.0
    gate_factor: float = 0.7
    track_min_frames: int = 5
    dilation_frac: float = 0.10
    overlap_min_px: int = 20
    ray_search: bool = True
    ray_reach_frac: float = 3.0
    iou_min: float = 0.9
    sun_temp_tol: float = 5.0
    sun_dist_tol: float = 10.0
    sun_jump_px: float = 10.0
    sun_run_frac: float = 0.3
    rng_seed: int = 0
    workers: int = 1
    orientation_rotation: str = "ccw"

    def __post_init__(self):
        if self.masks_source not in ("threshold", "files"):
            raise ValueError(f"bad masks_source {self.masks_source!r}")
        if self.masks_source == "files" and not self.masks_dir:
            raise ValueError("masks_source 'files' requires masks_dir")
        if self.motion_source not in ("keypoints", "truth"):
            raise ValueError(f"bad motion_source {self.motion_source!r}")
        if self.motion_source == "truth" and not self.truth_dir:
            raise ValueError("motion_source 'truth' requires truth_dir")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


@dataclass
class RowResult:
    """Outcome of one scan row, ok or bucketed failure."""

    row_id: str
    status: str  # "ok" | "failed"
    reason: str | None = None
    detail: str = ""
    scan_direction: str | None = None
    n_frames: int = 0
    tracks_total: int = 0
    modules_extracted: int = 0
    plants_total: int = 0
    patches_extracted: int = 0
    patches_dropped_sun: int = 0
    patches_dropped_degenerate: int = 0
    patches_dropped_quad_iou: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PatchRecord:
    """One patch slot of one matched track, written or dropped."""

    track_id: str
    plant_id: str
    ordinal: int
    frame_index: int
    file: str | None
    dropped: bool
    reason: str | None
    T: float | None
    x: float | None
    y: float | None
    p: float | None


@dataclass
class RowArtifacts:
    """run_row return value: result plus everything tests want to inspect."""

    result: RowResult
    pairs: dict[str, str] = field(default_factory=dict)  # track id -> plant id
    unmatched_tracks: tuple[str, ...] = ()
    missing_plant_ids: tuple[str, ...] = ()
    track_boxes: dict[str, dict[int, tuple[float, float, float, float]]] = field(
        default_factory=dict
    )
    patch_records: list[PatchRecord] = field(default_factory=list)
    references: dict[str, ReflectionReference | None] = field(default_factory=dict)


class _RowFailure(Exception):
    def __init__(self, reason: str, detail: str):
        super().__init__(f"{reason}: {detail}")
        self.reason = reason
        self.detail = detail


def _row_rngs(config: RunConfig, row_id: str) -> tuple[np.random.Generator, ...]:
    """Independent per-row streams, stable across worker counts."""
    digest = hashlib.sha256(row_id.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "big")
    ss = np.random.SeedSequence((config.rng_seed, key))
    return tuple(np.random.default_rng(child) for child in ss.spawn(3))


def _load_row_masks(config: RunConfig, frames: list[Frame]) -> list[list[ModuleMask]]:
    masks_all: list[list[ModuleMask]] = []
    for frame in frames:
        if config.masks_source == "files":
            path = Path(config.masks_dir) / MASK_FILE_FORMAT.format(index=frame.index)
            masks_all.append(load_masks(path, frame.index))
        else:
            tf = raw_to_celsius(frame, config.temp_scale, config.temp_offset)
            masks_all.append(
                segment_threshold(
                    tf, config.temp_threshold_c, config.min_area_px, config.max_area_px
                )
            )
    return masks_all


def _truth_pair_homographies(config: RunConfig, frames: list[Frame]) -> list[InterFrameMotion]:
    from .simulate import load_scene_truth

    truth = load_scene_truth(config.truth_dir)
    h_img, w_img = frames[0].raster.shape
    probes = np.array(
        [
            [w_img * 0.25, h_img * 0.5],
            [w_img * 0.5, h_img * 0.5],
            [w_img * 0.75, h_img * 0.5],
            [w_img * 0.5, h_img * 0.25],
            [w_img * 0.5, h_img * 0.75],
        ]
    )
    motions = []
    for a, b in zip(frames, frames[1:]):
        h = truth.pair_homography(a.index, b.index)
        dx = float((apply_homography(h, probes)[:, 0] - probes[:, 0]).mean())
        motions.append(InterFrameMotion(a.index, b.index, h, len(probes), dx))
    return motions


def _estimate_motions(
    config: RunConfig, frames: list[Frame], rng: np.random.Generator
) -> list[InterFrameMotion]:
    if config.motion_source == "truth":
        return _truth_pair_homographies(config, frames)
    motions = []
    prev_feats = detect_and_describe(frames[0].raster, max_corners=config.max_corners)
    for a, b in zip(frames, frames[1:]):
        curr_feats = detect_and_describe(b.raster, max_corners=config.max_corners)
        motions.append(
            estimate_motion(
                a.index,
                a.raster,
                b.index,
                b.raster,
                rng,
                features_a=prev_feats,
                features_b=curr_feats,
                max_iterations=config.ransac_max_iterations,
                inlier_tol=config.ransac_inlier_tol,
                confidence=config.ransac_confidence,
            )
        )
        prev_feats = curr_feats
    return motions


def run_row(config: RunConfig, spec: RowSpec, grids: dict[str, Grid]) -> RowArtifacts:
    """Process one scan row and write its dataset subtree under out_dir."""
    result = RowResult(spec.row_id, "ok")
    try:
        return _run_row_inner(config, spec, grids, result)
    except _RowFailure as failure:
        result.status = "failed"
        result.reason = failure.reason
        result.detail = failure.detail
        return RowArtifacts(result)


def _run_row_inner(
    config: RunConfig, spec: RowSpec, grids: dict[str, Grid], result: RowResult
) -> RowArtifacts:
    line_rng, ransac_rng, assoc_rng = _row_rngs(config, spec.row_id)

    frames = [
        normalize_orientation(f, spec, config.orientation_rotation)
        for f in load_frame_range(config.frames_dir, spec.first_frame, spec.last_frame)
    ]
    result.n_frames = len(frames)
    frame_w = frames[0].raster.shape[1]

    # 1. module masks; a row where nothing ever segments is unusable
    masks_all = _load_row_masks(config, frames)
    if sum(len(m) for m in masks_all) == 0:
        raise _RowFailure(SEGMENTATION_ERROR, "no modules segmented in any frame")

    # 2. inter-frame motion and trajectory sanity
    motions: list[InterFrameMotion] = []
    if len(frames) > 1:
        try:
            motions = _estimate_motions(config, frames, ransac_rng)
            result.scan_direction = estimate_scan_direction(motions, config.direction_min_abs)
        except (MotionEstimationFailed, AmbiguousDirection) as exc:
            raise _RowFailure(UAV_TRAJECTORY, str(exc)) from exc
        outlier_frac = direction_outlier_fraction(motions)
        if outlier_frac > config.trajectory_outlier_frac:
            raise _RowFailure(
                UAV_TRAJECTORY, f"{outlier_frac:.2f} of pairs move against the scan"
            )

    # 3. plant layout
    try:
        grid = grid_for_row(grids, spec.row_id)
        plant_adj = grid_graph(grid, rows_per_stack=spec.rows_per_stack)
        seed_plant = PlantId.parse(spec.bottom_left)
        top_right = PlantId.parse(spec.top_right)
    except (UnknownRow, LayoutMismatch, ValueError) as exc:
        raise _RowFailure(IRREGULAR_LAYOUT, str(exc)) from exc
    if seed_plant not in plant_adj or top_right not in plant_adj:
        raise _RowFailure(
            IRREGULAR_LAYOUT, "anchor plant ids missing from the row's grid"
        )
    result.plants_total = len(plant_adj)

    # 4. per-frame front-row filtering; frames that cannot be filtered
    # (too few masks to anchor a line) contribute nothing
    front_ordinals: dict[int, list[int]] = {}
    front_line0: dict[int, set[int]] = {}
    for frame, masks in zip(frames, masks_all):
        if not masks:
            continue
        try:
            selected, ordinals = filter_front_row(
                masks,
                spec.rows_per_stack,
                frame_w,
                line_rng,
                min_inliers=config.line_min_inliers,
                max_iterations=config.line_max_iterations,
                tol_factor=config.line_tol_factor,
                tol_fallback=config.line_tol_fallback,
                angle_max_deg=config.angle_max_deg,
            )
        except (NoLinesFound, TooFewLines):
            continue
        front_ordinals[frame.index] = ordinals
        front_line0[frame.index] = set(selected[0].inlier_ordinals)
    if not front_ordinals:
        raise _RowFailure(ROW_FILTER_ERROR, "no frame yields usable center lines")

    # 5. identity tracking over the filtered masks
    store = TrackStore()
    masks_by_frame: dict[int, dict[int, ModuleMask]] = {}
    motion_by_pair = {(m.from_frame, m.to_frame): m.h for m in motions}
    prev_subset: list[ModuleMask] = []
    prev_tracks_subset: dict[str, int] = {}
    prev_index: int | None = None
    for frame, masks in zip(frames, masks_all):
        ordinals = front_ordinals.get(frame.index, [])
        subset = [masks[o] for o in ordinals]
        if not subset:
            prev_subset, prev_tracks_subset, prev_index = [], {}, frame.index
            continue
        if prev_tracks_subset and prev_index is not None:
            h = motion_by_pair[(prev_index, frame.index)]
        else:
            h = np.eye(3)
        assigned = associate_masks(
            prev_subset, subset, prev_tracks_subset, h, assoc_rng, config.gate_factor
        )
        store.record(frame.index, {t: ordinals[pos] for t, pos in assigned.items()})
        masks_by_frame[frame.index] = {o: masks[o] for o in ordinals}
        prev_subset, prev_tracks_subset, prev_index = subset, assigned, frame.index

    # 6. track adjacency graph
    min_frames = 1 if len(frames) == 1 else config.track_min_frames
    try:
        track_adj = build_track_graph(
            store,
            masks_by_frame,
            min_track_frames=min_frames,
            dilation_frac=config.dilation_frac,
            overlap_min_px=config.overlap_min_px,
            ray_search=config.ray_search,
            ray_reach_frac=config.ray_reach_frac,
            prune_degree_one=spec.rows_per_stack > 1,
        )
    except EmptyGraph as exc:
        raise _RowFailure(TRACK_GRAPH_ERROR, str(exc)) from exc
    result.tracks_total = len(track_adj)

    # 7. seed track: the bottom-left module, read off the frame at the scan
    # edge (earliest usable frame on a rightward pass, latest on a leftward)
    front_by_frame: dict[int, list[tuple[ModuleMask, str, int]]] = {}
    for fi, assigned_frame in store.assignments.items():
        line0 = front_line0[fi]
        front_by_frame[fi] = [
            (masks_by_frame[fi][o], t, 0 if o in line0 else 1)
            for t, o in sorted(assigned_frame.items(), key=lambda kv: kv[1])
        ]
    try:
        seed_track = find_seed(front_by_frame, result.scan_direction or "rightward")
    except SeedNotFound as exc:
        raise _RowFailure(TRACK_GRAPH_ERROR, str(exc)) from exc

    seed_line_tracks = {
        t
        for t in track_adj
        if store.assignments[store.frames_of(t)[0]][t]
        in front_line0.get(store.frames_of(t)[0], set())
    }

    # 8. graph matching
    try:
        pairs = match_graphs(track_adj, plant_adj, seed_track, seed_plant, seed_line_tracks)
    except (SeedNotFound, RowUnmatchable) as exc:
        raise _RowFailure(TRACK_GRAPH_ERROR, str(exc)) from exc
    mapping = make_id_mapping(pairs, set(track_adj), set(plant_adj))
    result.modules_extracted = len(mapping.pairs)

    # 9. rectified patches per matched track, reflection-filtered
    frames_by_index = {f.index: f for f in frames}
    row_dir = Path(config.out_dir) / "dataset" / spec.row_id
    records: list[PatchRecord] = []
    references: dict[str, ReflectionReference | None] = {}
    track_boxes: dict[str, dict[int, tuple[float, float, float, float]]] = {}
    for track_id in sorted(track_adj):
        track_boxes[track_id] = {
            fi: masks_by_frame[fi][store.assignments[fi][track_id]].bbox
            for fi in store.frames_of(track_id)
        }

    for track_id, plant in sorted(mapping.pairs.items(), key=lambda kv: kv[1]):
        plant_dir = row_dir / str(plant)
        plant_dir.mkdir(parents=True, exist_ok=True)
        track_frames = store.frames_of(track_id)
        stats = []
        per_ordinal: dict[int, tuple[int, np.ndarray | None, str | None, list | None]] = {}
        for ordinal, fi in enumerate(track_frames):
            mask = masks_by_frame[fi][store.assignments[fi][track_id]]
            try:
                quad = fit_min_perimeter_quad(mask)
                corners = quad.corners.tolist()
                if iou_quad_mask(mask, quad) < config.iou_min:
                    per_ordinal[ordinal] = (fi, None, "quad_iou", corners)
                    continue
                patch_raw = warp_patch(frames_by_index[fi].raster, quad)
            except (DegenerateMask, DegenerateConfiguration):
                per_ordinal[ordinal] = (fi, None, "degenerate", None)
                continue
            per_ordinal[ordinal] = (fi, patch_raw, None, corners)
            patch_c = patch_raw.astype(np.float64) * config.temp_scale + config.temp_offset
            stats.append(patch_stats(ordinal, patch_c))

        if stats:
            kept, dropped, ref = filter_reflections(
                stats,
                temp_tol=config.sun_temp_tol,
                dist_tol=config.sun_dist_tol,
                jump_px=config.sun_jump_px,
                min_run_frac=config.sun_run_frac,
            )
        else:
            kept, dropped, ref = [], [], None
        references[str(plant)] = ref
        kept_set = set(kept)
        stats_by_ordinal = {s.ordinal: s for s in stats}

        meta_patches = []
        for ordinal in sorted(per_ordinal):
            fi, patch_raw, fit_reason, corners = per_ordinal[ordinal]
            s = stats_by_ordinal.get(ordinal)
            if patch_raw is None:
                file_name, drop_reason = None, fit_reason
                if fit_reason == "quad_iou":
                    result.patches_dropped_quad_iou += 1
                else:
                    result.patches_dropped_degenerate += 1
            elif ordinal in kept_set:
                file_name = f"patch_{ordinal:04d}.pgm"
                write_pgm(plant_dir / file_name, patch_raw)
                drop_reason = None
                result.patches_extracted += 1
            else:
                file_name, drop_reason = None, "sun_reflection"
                result.patches_dropped_sun += 1
            records.append(
                PatchRecord(
                    track_id,
                    str(plant),
                    ordinal,
                    fi,
                    file_name,
                    drop_reason is not None,
                    drop_reason,
                    s.T if s else None,
                    s.x if s else None,
                    s.y if s else None,
                    s.p if s else None,
                )
            )
            meta_patches.append(
                {
                    "ordinal": ordinal,
                    "frame_index": fi,
                    "file": file_name,
                    "quad": corners,
                    "dropped": drop_reason is not None,
                    "reason": drop_reason,
                    "T": s.T if s else None,
                    "x": s.x if s else None,
                    "y": s.y if s else None,
                    "p": s.p if s else None,
                }
            )
        meta = {
            "plant_id": str(plant),
            "row_id": spec.row_id,
            "track_id": track_id,
            "reference": None
            if ref is None
            else {"T": ref.T, "x": ref.x, "y": ref.y, "source_range": list(ref.source_range)},
            "patches": meta_patches,
        }
        (plant_dir / "meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    return RowArtifacts(
        result,
        {t: str(p) for t, p in mapping.pairs.items()},
        mapping.unmatched_tracks,
        tuple(str(p) for p in mapping.missing_plant_ids),
        track_boxes,
        records,
        references,
    )


def _row_worker(args: tuple[RunConfig, RowSpec, dict[str, Grid]]) -> RowArtifacts:
    return run_row(*args)


@dataclass(eq=False)
class PlantRunResult:
    out_dir: Path
    summary: dict
    artifacts: list[RowArtifacts]


def run_plant(config: RunConfig) -> PlantRunResult:
    """Run every row in the rows file and write the shared output files."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "dataset").mkdir(exist_ok=True)
    (out / "mappings").mkdir(exist_ok=True)
    (out / "drops").mkdir(exist_ok=True)

    specs = [
        RowSpec.from_dict(d)
        for d in json.loads(Path(config.rows_file).read_text(encoding="utf-8"))
    ]
    grids = load_plant_file(config.plant_file)
    if config.gps_csv:
        parse_gps_csv(config.gps_csv)  # validation only

    jobs = [(config, spec, grids) for spec in specs]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            artifacts = list(pool.map(_row_worker, jobs))
    else:
        artifacts = [_row_worker(job) for job in jobs]

    merged_rows = []
    for art in artifacts:
        if art.result.status != "ok":
            continue
        row_id = art.result.row_id
        with open(out / "mappings" / f"{row_id}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["track_id", "plant_id"])
            for track_id in sorted(set(art.pairs) | set(art.unmatched_tracks)):
                w.writerow([track_id, art.pairs.get(track_id, "")])
        with open(out / "drops" / f"{row_id}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["plant_id", "ordinal", "reason"])
            dropped = [r for r in art.patch_records if r.dropped]
            for r in sorted(dropped, key=lambda r: (r.plant_id, r.ordinal)):
                w.writerow([r.plant_id, r.ordinal, r.reason])
        for track_id, plant in sorted(art.pairs.items()):
            merged_rows.append([row_id, track_id, plant])

    with open(out / "mapping.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_id", "track_id", "plant_id"])
        w.writerows(merged_rows)

    results = [a.result for a in artifacts]
    n_modules = sum(r.modules_extracted for r in results)
    n_patches = sum(r.patches_extracted for r in results)
    summary = {
        "config": asdict(config),
        "rows": [r.to_dict() for r in results],
        "totals": {
            "rows_ok": sum(r.status == "ok" for r in results),
            "rows_failed": sum(r.status != "ok" for r in results),
            "success_rate": (
                sum(r.status == "ok" for r in results) / len(results) if results else 0.0
            ),
            "patches_per_module_mean": n_patches / n_modules if n_modules else 0.0,
            "modules_extracted": sum(r.modules_extracted for r in results),
            "patches_extracted": sum(r.patches_extracted for r in results),
            "patches_dropped_sun": sum(r.patches_dropped_sun for r in results),
            "patches_dropped_degenerate": sum(
                r.patches_dropped_degenerate for r in results
            ),
            "patches_dropped_quad_iou": sum(
                r.patches_dropped_quad_iou for r in results
            ),
        },
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return PlantRunResult(out, summary, artifacts)
