"""Synthetic aerial thermal scan rows with pixel-exact ground truth.

A planar world (z = 0) holds contiguous grids of PV modules, each with a
warm inset region on cooler textured ground. A pitched pinhole camera sweeps
along the row; every frame is rendered by mapping pixel centers through the
inverse world-to-image homography, so the true instance masks, the true
inter-frame homographies, and the plant layout are all known exactly and are
written next to the frames. Scenes can also plant hazards for the extraction
pipeline: a second module row in the background, a diagonal decoy line of
warm blobs, a detached module group, a backtracking camera segment, and
drifting sun reflections.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .ingest import (
    Frame,
    GpsFix,
    RowSpec,
    load_frame_sequence,
    parse_gps_csv,
    write_gps_csv,
    write_pgm,
)
from .rectify import apply_homography
from .segmentation import DEFAULT_MIN_AREA_PX, encode_rle


class InvalidConfig(ValueError):
    """Scene configuration that cannot be rendered."""


class OutOfRange(Exception):
    """Frame index outside the scene's frame range."""


MODULE_PITCH = (1.0, 0.6)  # world-unit footprint of one module, x by y
WARM_INSET = (0.10, 0.025)  # warm region inset per side, x and y
ROW_SPACING = 10.0  # world y between successive scan rows
BACKGROUND_GAP = 1.0  # world y gap between a stack and its background stack
REFLECTION_DELTA = 25.0  # reflected peak above the module base temperature
ANOMALY_DELTAS = {
    "Mh": 8.0,
    "Mp": 14.0,
    "Sh": 10.0,
    "Sp": 5.0,
    "Pid": 7.0,
    "Cm+": 12.0,
    "Cs+": 12.0,
    "C": 4.0,
    "D": 9.0,
    "Chs": 18.0,
}
CELL_GRID = (6, 10)  # anomaly cell grid inside the warm region, rows x cols

DEFAULT_SCENE = {
    "seed": 0,
    "frame_width": 640,
    "frame_height": 512,
    "px_per_unit": 80.0,
    "altitude": 10.0,
    "pitch_deg": 12.0,
    "velocity_units": 0.3,  # world units per frame; pixels = this * px_per_unit
    "jitter_sigma_px": 0.0,  # cross-track wobble, keeps the sweep monotone in x
    "module_temp_c": 42.0,
    "ground_temp_c": 18.0,
    "texture_amp_c": 1.5,
    "temp_scale": 0.01,
    "temp_offset": -273.15,
    "origin_lat": -33.86,
    "origin_lon": 151.21,
    "gps_deg_per_unit": 1e-5,
}

DEFAULT_ROW = {
    "rows_per_stack": 2,
    "cols": 6,
    "nulls": [],
    "anomalies": {},
    "reflections": [],
    "background_row": False,
    "decoy_diagonal": False,
    "detached_cols": 0,
    "detached_gap_units": 3.5,
    "reverse_frames": None,
    "poses": None,  # explicit per-frame camera poses instead of the sweep
}


@dataclass(eq=False)
class SceneTruth:
    """Everything the renderer knew, for verifying pipeline output."""

    out_dir: Path
    width: int
    height: int
    temp_scale: float
    temp_offset: float
    homographies: dict[int, np.ndarray]  # frame -> world-to-image 3x3
    frame_rows: dict[int, str]
    row_specs: list[RowSpec]
    plants: dict[str, dict]  # instance key -> rect, kind, anomaly, ...

    def pair_homography(self, from_frame: int, to_frame: int) -> np.ndarray:
        """Image-to-image homography between two frames of the same row."""
        h = self.homographies[to_frame] @ np.linalg.inv(self.homographies[from_frame])
        return h / h[2, 2]

    def masks_path(self, frame_index: int) -> Path:
        return self.out_dir / "truth" / f"masks_{frame_index:06d}.json"

    def frame_instances(self, frame_index: int) -> list[dict]:
        doc = json.loads(self.masks_path(frame_index).read_text(encoding="utf-8"))
        return doc["instances"]


def _camera_matrix(f: float, width: int, height: int) -> np.ndarray:
    return np.array([[f, 0.0, width / 2.0], [0.0, f, height / 2.0], [0.0, 0.0, 1.0]])


def _world_to_image(
    f: float,
    width: int,
    height: int,
    pitch_rad: float,
    camera: np.ndarray,
    yaw_rad: float = 0.0,
) -> np.ndarray:
    """Homography for the plane z = 0 seen by a pitched nadir camera.

    Yaw spins the camera about its optical axis and applies before the
    pitch, which then tips the view off nadir about the camera x axis.
    """
    base = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
    cy, sy = np.cos(yaw_rad), np.sin(yaw_rad)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    cp, sp = np.cos(pitch_rad), np.sin(pitch_rad)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    r = rx @ rz @ base
    t = -r @ camera
    h = _camera_matrix(f, width, height) @ np.column_stack([r[:, 0], r[:, 1], t])
    return h / h[2, 2]


def _sample_wrapped(noise: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = noise.shape[0]
    xi = np.floor(x).astype(np.int64)
    yi = np.floor(y).astype(np.int64)
    fx = x - xi
    fy = y - yi
    x0, x1 = xi % n, (xi + 1) % n
    y0, y1 = yi % n, (yi + 1) % n
    return (1 - fy) * ((1 - fx) * noise[y0, x0] + fx * noise[y0, x1]) + fy * (
        (1 - fx) * noise[y1, x0] + fx * noise[y1, x1]
    )


def _anomaly_extras(cls_name: str, rng: np.random.Generator) -> dict:
    """Per-plant placement choices for cell and spot type anomalies."""
    rows, cols = CELL_GRID
    if cls_name == "Cm+":
        picks = rng.choice(rows * cols, size=3, replace=False)
        return {"cells": [[int(p) // cols, int(p) % cols] for p in picks]}
    if cls_name in ("Cs+", "C"):
        p = int(rng.integers(0, rows * cols))
        return {"cells": [[p // cols, p % cols]]}
    if cls_name == "Chs":
        return {"spot": [float(rng.uniform(0.25, 0.75)), float(rng.uniform(0.25, 0.75))]}
    return {}


def _anomaly_delta(cls_name: str, extras: dict, qu: np.ndarray, qv: np.ndarray,
                   warm_w_px: float, warm_h_px: float,
                   amount: float | None = None) -> np.ndarray:
    """Temperature offsets over warm-region fractional coordinates."""
    delta = np.zeros_like(qu)
    if amount is None:
        amount = ANOMALY_DELTAS[cls_name]
    if cls_name in ("Mh", "Mp"):
        delta += amount
    elif cls_name in ("Sh", "Sp"):
        delta[qv < 1.0 / 3.0] = amount
    elif cls_name == "D":
        delta[qv >= 2.0 / 3.0] = amount
    elif cls_name == "Pid":
        delta[(qu < 1.0 / 6.0) | (qu >= 5.0 / 6.0)] = amount
    elif cls_name in ("Cm+", "Cs+", "C"):
        rows, cols = CELL_GRID
        cr = np.clip((qv * rows).astype(np.int64), 0, rows - 1)
        cc = np.clip((qu * cols).astype(np.int64), 0, cols - 1)
        for r, c in extras["cells"]:
            delta[(cr == r) & (cc == c)] = amount
    elif cls_name == "Chs":
        qc, rc = extras["spot"]
        dist = np.hypot((qu - qc) * warm_w_px, (qv - rc) * warm_h_px)
        delta[dist <= 1.5] = amount
    return delta


@dataclass(eq=False)
class _Group:
    """One contiguous grid of modules in the world."""

    origin: tuple[float, float]  # world x, y of the grid's top-left corner
    n_rows: int
    n_cols: int
    keys: list[list[str | None]]  # instance key per cell, None for gaps
    kind: str  # "plant" | "background" | "detached"

    def module_rect(self, g: int, c: int) -> tuple[float, float, float, float]:
        """Warm inset rect of cell (g, c) in world coordinates."""
        px, py = MODULE_PITCH
        ix, iy = WARM_INSET
        x0 = self.origin[0] + c * px + ix
        y0 = self.origin[1] + g * py + iy
        return (x0, y0, x0 + px - 2 * ix, y0 + py - 2 * iy)


def _merge(defaults: dict, overrides: dict) -> dict:
    out = dict(defaults)
    out.update(overrides or {})
    return out


def _instance_fully_visible(mask: np.ndarray, min_area: int) -> bool:
    if not mask.any():
        return False
    rows, cols = np.nonzero(mask)
    h, w = mask.shape
    if rows.min() == 0 or cols.min() == 0 or rows.max() == h - 1 or cols.max() == w - 1:
        return False
    return rows.size >= min_area


def simulate_scene(config: dict, out_dir: str | Path) -> SceneTruth:
    """Render a scene to out_dir and return its ground truth.

    Layout written: frames/frame_NNNNNN.pgm, gps.csv, plants.json,
    rows.json, truth/scene.json, truth/masks_NNNNNN.json.
    """
    unknown = set(config) - set(DEFAULT_SCENE) - {"rows", "out_dir", "velocity_px"}
    if unknown:
        raise InvalidConfig(f"unknown scene keys: {sorted(unknown)}")
    if "velocity_px" in config and "velocity_units" in config:
        raise InvalidConfig("give velocity_px or velocity_units, not both")
    for rc in config.get("rows", []):
        bad = set(rc) - set(DEFAULT_ROW) - {"row_id"}
        if bad:
            raise InvalidConfig(f"unknown row keys: {sorted(bad)}")
    cfg = _merge(DEFAULT_SCENE, {k: v for k, v in config.items() if k != "rows"})
    row_cfgs = [_merge(DEFAULT_ROW, rc) for rc in config.get("rows", [{}])]
    width = int(cfg["frame_width"])
    height = int(cfg["frame_height"])
    if width < 2 or height < 2:
        raise InvalidConfig(f"frame size {width}x{height} too small")
    ppu = float(cfg["px_per_unit"])
    alt = float(cfg["altitude"])
    if ppu <= 0 or alt <= 0:
        raise InvalidConfig("px_per_unit and altitude must be positive")
    pitch = np.deg2rad(float(cfg["pitch_deg"]))
    f = ppu * alt
    scale = float(cfg["temp_scale"])
    offset = float(cfg["temp_offset"])
    seed = int(cfg["seed"])
    velocity = (
        float(cfg["velocity_px"]) / ppu
        if "velocity_px" in cfg
        else float(cfg["velocity_units"])
    )
    jitter_sigma = float(cfg["jitter_sigma_px"]) / ppu

    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)

    noise_rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA0)))
    noise = ndimage.gaussian_filter(noise_rng.standard_normal((256, 256)), 2.0)
    noise /= noise.std()

    # pixel-center grid reused by every frame
    us, vs = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5)
    pix = np.stack([us.ravel(), vs.ravel()], axis=1)

    px_pitch, py_pitch = MODULE_PITCH
    ix, iy = WARM_INSET
    warm_w_px = (px_pitch - 2 * ix) * ppu
    warm_h_px = (py_pitch - 2 * iy) * ppu

    homographies: dict[int, np.ndarray] = {}
    frame_rows: dict[int, str] = {}
    row_specs: list[RowSpec] = []
    plants: dict[str, dict] = {}
    fixes: list[GpsFix] = []
    frame_offset = 0
    plant_row_base = 0

    for ri, rc in enumerate(row_cfgs):
        row_id = rc.get("row_id", f"R{ri + 1:02d}")
        n_rows = int(rc["rows_per_stack"])
        n_cols = int(rc["cols"])
        nulls = {(int(g), int(c)) for g, c in rc["nulls"]}
        y0 = ri * ROW_SPACING

        def names_for(base: int) -> list[list[str | None]]:
            return [
                [
                    None if (g, c) in nulls else f"{base + g + 1}.{c + 1}"
                    for c in range(n_cols)
                ]
                for g in range(n_rows)
            ]

        main = _Group((0.0, y0), n_rows, n_cols, names_for(plant_row_base), "plant")
        if main.keys[n_rows - 1][0] is None or main.keys[0][n_cols - 1] is None:
            raise InvalidConfig("grid corners used as anchors must not be null")
        groups = [main]
        if rc["background_row"]:
            bg_y0 = y0 - BACKGROUND_GAP - n_rows * py_pitch
            bg_keys = [
                [f"background:{g + 1}.{c + 1}" for c in range(n_cols)]
                for g in range(n_rows)
            ]
            groups.append(_Group((0.0, bg_y0), n_rows, n_cols, bg_keys, "background"))
        if rc["detached_cols"]:
            dx0 = n_cols * px_pitch + float(rc["detached_gap_units"])
            d_cols = int(rc["detached_cols"])
            d_keys = [
                [f"detached:{g + 1}.{c + 1}" for c in range(d_cols)]
                for g in range(n_rows)
            ]
            groups.append(_Group((dx0, y0), n_rows, d_cols, d_keys, "detached"))

        decoys: list[tuple[float, float, float, float]] = []
        if rc["decoy_diagonal"]:
            # centers climb at atan(0.245 / 0.35) = 35 degrees
            for k in range(4):
                cx = 1.0 + 0.35 * k
                cy_d = y0 - 0.75 - 0.245 * k
                decoys.append((cx - 0.15, cy_d - 0.10, cx + 0.15, cy_d + 0.10))

        # per-plant anomaly assignments and placement extras; values are a
        # class name or {"class": name, "delta_c": override}
        anomalies: dict[str, tuple[str, float, dict]] = {}
        for plant, spec_val in sorted(rc["anomalies"].items()):
            if isinstance(spec_val, dict):
                cls_name = spec_val.get("class")
                delta_c = float(spec_val.get("delta_c", ANOMALY_DELTAS.get(cls_name, 0.0)))
            else:
                cls_name = spec_val
                delta_c = ANOMALY_DELTAS.get(cls_name, 0.0)
            if cls_name not in ANOMALY_DELTAS:
                raise InvalidConfig(f"unknown anomaly class {cls_name!r}")
            prng = np.random.default_rng(np.random.SeedSequence((seed, ri, 0xC0, len(anomalies))))
            anomalies[plant] = (cls_name, delta_c, _anomaly_extras(cls_name, prng))

        # world y extent of everything warm, to center the camera on it
        y_lo = min(g.origin[1] for g in groups)
        y_hi = max(g.origin[1] + g.n_rows * py_pitch for g in groups)
        if decoys:
            y_lo = min(y_lo, min(d[1] for d in decoys))
        cy = (y_lo + y_hi) / 2.0 - alt * np.tan(pitch)

        # camera path: an explicit pose list, or a sweep along x with an
        # optional reversed segment and cross-track jitter
        if rc["poses"] is not None:
            if rc["reverse_frames"] is not None:
                raise InvalidConfig("poses and reverse_frames are exclusive")
            poses = []
            for p in rc["poses"]:
                if "x" not in p:
                    raise InvalidConfig("each pose needs at least x")
                poses.append(
                    (
                        float(p["x"]),
                        float(p.get("y", cy)),
                        float(p.get("altitude", alt)),
                        np.deg2rad(float(p.get("yaw_deg", 0.0))),
                    )
                )
            if not poses:
                raise InvalidConfig("poses must be non-empty")
        else:
            view_half = (width / 2.0) / ppu
            x_max_world = max(g.origin[0] + g.n_cols * px_pitch for g in groups)
            x_start = -view_half - 0.6
            x_end = x_max_world + view_half + 0.6
            reverse = rc["reverse_frames"]
            positions = [x_start]
            t = 0
            while len(positions) < 5000:
                v = velocity
                if reverse is not None and reverse[0] <= t <= reverse[1]:
                    v = -velocity
                nxt = positions[-1] + v
                positions.append(nxt)
                t += 1
                if nxt >= x_end and (reverse is None or t > reverse[1]):
                    break
            if jitter_sigma > 0.0:
                jrng = np.random.default_rng(
                    np.random.SeedSequence((seed, ri, 0xB7))
                )
                y_jit = jrng.normal(0.0, jitter_sigma, size=len(positions))
            else:
                y_jit = np.zeros(len(positions))
            poses = [
                (x, cy + float(y_jit[k]), alt, 0.0) for k, x in enumerate(positions)
            ]
        n_frames = len(poses)

        first_frame = frame_offset
        last_frame = frame_offset + n_frames - 1
        seed_plant = f"{plant_row_base + n_rows}.1"
        top_right = f"{plant_row_base + 1}.{n_cols}"
        row_specs.append(
            RowSpec(row_id, first_frame, last_frame, seed_plant, top_right, n_rows)
        )

        # record plant truth entries
        for group in groups:
            for g in range(group.n_rows):
                for c in range(group.n_cols):
                    key = group.keys[g][c]
                    if key is None:
                        continue
                    entry = {
                        "row_id": row_id,
                        "rect": list(group.module_rect(g, c)),
                        "kind": group.kind,
                        "anomaly": None,
                        "reflected_frames": [],
                    }
                    if group.kind == "plant" and key in anomalies:
                        entry["anomaly"] = anomalies[key][0]
                    plants[key] = entry
        for k, rect in enumerate(decoys):
            plants[f"decoy:{row_id}.{k}"] = {
                "row_id": row_id,
                "rect": list(rect),
                "kind": "decoy",
                "anomaly": None,
                "reflected_frames": [],
            }

        # precompute homographies for the whole sweep
        hs = []
        for px_cam, py_cam, alt_cam, yaw_cam in poses:
            cam = np.array([px_cam, py_cam, alt_cam])
            hs.append(_world_to_image(f, width, height, pitch, cam, yaw_cam))

        # analytic visibility windows (for placing reflections only)
        def visible_run(rect) -> list[int]:
            corners = np.array(
                [[rect[0], rect[1]], [rect[2], rect[1]], [rect[2], rect[3]], [rect[0], rect[3]]]
            )
            run: list[int] = []
            best: list[int] = []
            for k in range(n_frames):
                img = apply_homography(hs[k], corners)
                inside = bool(
                    (img[:, 0] > 2).all()
                    and (img[:, 0] < width - 2).all()
                    and (img[:, 1] > 2).all()
                    and (img[:, 1] < height - 2).all()
                )
                if inside:
                    run.append(k)
                else:
                    if len(run) > len(best):
                        best = run
                    run = []
            return best if len(best) >= len(run) else run

        reflections: dict[str, dict] = {}
        for j, refl in enumerate(rc["reflections"]):
            plant = refl["plant"]
            if plant not in plants or plants[plant]["kind"] != "plant":
                raise InvalidConfig(f"reflection target {plant!r} is not a plant")
            rect = plants[plant]["rect"]
            if "frames" in refl:
                local = [int(v) for v in refl["frames"]]
            else:
                run = visible_run(rect)
                count = int(refl.get("count", 1))
                picks = [len(run) - 3, len(run) - 6][:count]
                local = sorted(run[p] for p in picks if 2 <= p < len(run))
            rrng = np.random.default_rng(np.random.SeedSequence((seed, ri, 0xE0, j)))
            reflections[plant] = {
                "frames": set(local),
                "phase": float(rrng.uniform(0, 2 * np.pi)),
                "center": ((rect[0] + rect[2]) / 2.0, (rect[1] + rect[3]) / 2.0),
                "delta": float(refl.get("delta_c", REFLECTION_DELTA)),
                "drift": float(refl.get("drift_px", 10.0)) / ppu,
            }
            plants[plant]["reflected_frames"] = sorted(
                frame_offset + fr for fr in local
            )

        # render the sweep
        for k in range(n_frames):
            frame_index = frame_offset + k
            h_wi = hs[k]
            homographies[frame_index] = h_wi
            frame_rows[frame_index] = row_id
            world = apply_homography(np.linalg.inv(h_wi), pix)
            xw = world[:, 0].reshape(height, width)
            yw = world[:, 1].reshape(height, width)

            temp = float(cfg["ground_temp_c"]) + float(cfg["texture_amp_c"]) * _sample_wrapped(
                noise, xw * 8.0, yw * 8.0
            )
            instances: list[dict] = []

            for group in groups:
                # image window of the whole group, padded; skip when offscreen
                gx0, gy0 = group.origin
                gx1 = gx0 + group.n_cols * px_pitch
                gy1 = gy0 + group.n_rows * py_pitch
                corners = np.array([[gx0, gy0], [gx1, gy0], [gx1, gy1], [gx0, gy1]])
                img = apply_homography(h_wi, corners)
                wx0 = max(0, int(np.floor(img[:, 0].min())) - 2)
                wx1 = min(width, int(np.ceil(img[:, 0].max())) + 2)
                wy0 = max(0, int(np.floor(img[:, 1].min())) - 2)
                wy1 = min(height, int(np.ceil(img[:, 1].max())) + 2)
                if wx0 >= wx1 or wy0 >= wy1:
                    continue
                sl = (slice(wy0, wy1), slice(wx0, wx1))
                u = xw[sl] - gx0
                v = yw[sl] - gy0
                col = np.floor(u / px_pitch).astype(np.int64)
                row = np.floor(v / py_pitch).astype(np.int64)
                fu = u - col * px_pitch
                fv = v - row * py_pitch
                valid = (col >= 0) & (col < group.n_cols) & (row >= 0) & (row < group.n_rows)
                warm = (
                    valid
                    & (fu >= ix)
                    & (fu < px_pitch - ix)
                    & (fv >= iy)
                    & (fv < py_pitch - iy)
                )
                temp_sl = temp[sl]
                for g in range(group.n_rows):
                    for c in range(group.n_cols):
                        key = group.keys[g][c]
                        if key is None:
                            continue
                        mod = warm & (row == g) & (col == c)
                        if not mod.any():
                            continue
                        temp_sl[mod] = float(cfg["module_temp_c"])
                        if group.kind == "plant" and key in anomalies:
                            cls_name, delta_c, extras = anomalies[key]
                            qu = (fu[mod] - ix) / (px_pitch - 2 * ix)
                            qv = (fv[mod] - iy) / (py_pitch - 2 * iy)
                            temp_sl[mod] += _anomaly_delta(
                                cls_name, extras, qu, qv, warm_w_px, warm_h_px, delta_c
                            )
                        refl = reflections.get(key)
                        if refl is not None and k in refl["frames"]:
                            ang = refl["phase"] + 2.4 * k
                            sx = refl["center"][0] + refl["drift"] * np.cos(ang)
                            sy = refl["center"][1] + refl["drift"] * np.sin(ang)
                            spot = mod & (
                                np.hypot(xw[sl] - sx, yw[sl] - sy) <= 0.08
                            )
                            temp_sl[spot] = float(cfg["module_temp_c"]) + refl["delta"]
                        full = np.zeros((height, width), dtype=bool)
                        full[sl] = mod
                        instances.append({"key": key, "mask": full})
                temp[sl] = temp_sl

            for k_d, rect in enumerate(decoys):
                inside = (
                    (xw >= rect[0]) & (xw < rect[2]) & (yw >= rect[1]) & (yw < rect[3])
                )
                if not inside.any():
                    continue
                temp[inside] = float(cfg["module_temp_c"])
                instances.append({"key": f"decoy:{row_id}.{k_d}", "mask": inside})

            raw = np.clip(np.rint((temp - offset) / scale), 0, 65535).astype(np.uint16)
            write_pgm(out / "frames" / f"frame_{frame_index:06d}.pgm", raw)

            doc = {
                "width": width,
                "height": height,
                "instances": [
                    {
                        "plant": inst["key"],
                        "kind": plants[inst["key"]]["kind"],
                        "fully_visible": _instance_fully_visible(
                            inst["mask"], DEFAULT_MIN_AREA_PX
                        ),
                        "rle": encode_rle(inst["mask"]),
                    }
                    for inst in instances
                ],
            }
            (out / "truth" / f"masks_{frame_index:06d}.json").write_text(
                json.dumps(doc, sort_keys=True), encoding="utf-8"
            )

            fixes.append(
                GpsFix(
                    frame_index,
                    float(cfg["origin_lat"]) - poses[k][1] * float(cfg["gps_deg_per_unit"]),
                    float(cfg["origin_lon"]) + poses[k][0] * float(cfg["gps_deg_per_unit"]),
                    poses[k][2],
                )
            )

        frame_offset += n_frames
        plant_row_base += n_rows

    write_gps_csv(out / "gps.csv", fixes)

    plant_doc = {
        "rows": [
            {
                "row_id": spec.row_id,
                "grid": _grid_names(plants, spec.row_id),
            }
            for spec in row_specs
        ]
    }
    (out / "plants.json").write_text(json.dumps(plant_doc, sort_keys=True), encoding="utf-8")
    (out / "rows.json").write_text(
        json.dumps([s.to_dict() for s in row_specs], sort_keys=True), encoding="utf-8"
    )

    scene_doc = {
        "width": width,
        "height": height,
        "temp_scale": scale,
        "temp_offset": offset,
        "frames": {
            str(i): {"h": homographies[i].tolist(), "row_id": frame_rows[i]}
            for i in homographies
        },
        "rows": [s.to_dict() for s in row_specs],
        "plants": plants,
    }
    (out / "truth" / "scene.json").write_text(
        json.dumps(scene_doc, sort_keys=True), encoding="utf-8"
    )

    return SceneTruth(
        out, width, height, scale, offset, homographies, frame_rows, row_specs, plants
    )


def _grid_names(plants: dict[str, dict], row_id: str) -> list[list[str | None]]:
    """Reassemble the plant-file grid for one row from the truth entries."""
    cells: dict[tuple[int, int], str] = {}
    for key, entry in plants.items():
        if entry["row_id"] != row_id or entry["kind"] != "plant":
            continue
        r, c = key.split(".")
        cells[(int(r), int(c))] = key
    rows = sorted({r for r, _ in cells})
    cols = sorted({c for _, c in cells})
    row_span = range(min(rows), max(rows) + 1)
    col_span = range(min(cols), max(cols) + 1)
    return [[cells.get((r, c)) for c in col_span] for r in row_span]


def load_scene_truth(out_dir: str | Path) -> SceneTruth:
    out = Path(out_dir)
    doc = json.loads((out / "truth" / "scene.json").read_text(encoding="utf-8"))
    homographies = {int(i): np.array(v["h"]) for i, v in doc["frames"].items()}
    frame_rows = {int(i): v["row_id"] for i, v in doc["frames"].items()}
    specs = [RowSpec.from_dict(d) for d in doc["rows"]]
    return SceneTruth(
        out,
        int(doc["width"]),
        int(doc["height"]),
        float(doc["temp_scale"]),
        float(doc["temp_offset"]),
        homographies,
        frame_rows,
        specs,
        doc["plants"],
    )


def generate_scene(
    config: dict, out_dir: str | Path | None = None
) -> tuple[list[Frame], list[GpsFix], SceneTruth]:
    """Render a scene and hand back its frames, GPS fixes, and ground truth.

    The destination comes from config["out_dir"] unless given explicitly;
    everything is written there in the formats the reader side consumes
    (frames/*.pgm, gps.csv, plants.json, rows.json, truth/) and the frames
    and fixes are read back from those files, so what this returns is
    byte-for-byte what a pipeline run would load.
    """
    cfg = dict(config)
    dest = cfg.pop("out_dir", None) if out_dir is None else out_dir
    if dest is None:
        raise InvalidConfig("config needs out_dir, or pass one explicitly")
    truth = simulate_scene(cfg, dest)
    frames = load_frame_sequence(Path(dest) / "frames")
    fixes = parse_gps_csv(Path(dest) / "gps.csv")
    return frames, fixes, truth


def truth_homography(truth: SceneTruth, t: int) -> np.ndarray:
    """Exact homography taking frame t-1 coordinates onto frame t."""
    n = len(truth.homographies)
    if not 1 <= t < n:
        raise OutOfRange(f"t must be in [1, {n - 1}], got {t}")
    return truth.pair_homography(t - 1, t)
