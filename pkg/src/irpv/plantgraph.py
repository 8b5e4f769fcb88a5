"""Plant layout graphs, track neighborhood graphs, and their matching.

The plant file pins each scan row to a grid of plant ids (nulls mark skipped
positions). Tracked modules form a second graph from image-space adjacency.
Matching the two graphs, anchored at a seed, names every track with a plant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .segmentation import ModuleMask
from .tracking import TrackStore


class MalformedPlantFile(Exception):
    """Plant file violates the expected JSON shape or uniqueness rules."""


class UnknownRow(Exception):
    """Row id absent from the plant file."""

    def __init__(self, row_id: str):
        super().__init__(row_id)
        self.row_id = row_id


class LayoutMismatch(Exception):
    """Grid height disagrees with the declared rows per stack."""


class EmptyGraph(Exception):
    """No tracks survive to form a graph."""


class SeedNotFound(Exception):
    """The anchor track is not a node of the track graph."""


class RowUnmatchable(Exception):
    """No edge-preserving assignment of tracks to plants exists."""


@dataclass(frozen=True, order=True)
class PlantId:
    """Plant position rendered as "row.column", both 1-based."""

    row: int
    col: int

    def __post_init__(self):
        if self.row < 1 or self.col < 1:
            raise ValueError(f"plant id parts must be positive: {self.row}.{self.col}")

    def __str__(self) -> str:
        return f"{self.row}.{self.col}"

    @classmethod
    def parse(cls, text: str) -> "PlantId":
        parts = text.split(".")
        if len(parts) != 2:
            raise ValueError(f"bad plant id {text!r}")
        try:
            return cls(int(parts[0]), int(parts[1]))
        except ValueError as exc:
            raise ValueError(f"bad plant id {text!r}") from exc


Grid = list[list[PlantId | None]]


def load_plant_file(path: str | Path) -> dict[str, Grid]:
    """Parse a plant file into {row_id: grid}; plant ids are file-unique."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedPlantFile(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("rows"), list):
        raise MalformedPlantFile("top level must be an object with a 'rows' list")
    grids: dict[str, Grid] = {}
    seen: set[PlantId] = set()
    for entry in doc["rows"]:
        if not isinstance(entry, dict) or "row_id" not in entry or "grid" not in entry:
            raise MalformedPlantFile("each row needs 'row_id' and 'grid'")
        row_id = entry["row_id"]
        if row_id in grids:
            raise MalformedPlantFile(f"duplicate row id {row_id!r}")
        raw = entry["grid"]
        if not isinstance(raw, list) or not raw or not all(isinstance(r, list) for r in raw):
            raise MalformedPlantFile(f"row {row_id!r}: grid must be a list of lists")
        width = len(raw[0])
        if width == 0 or any(len(r) != width for r in raw):
            raise MalformedPlantFile(f"row {row_id!r}: ragged or empty grid")
        grid: Grid = []
        for cells in raw:
            parsed_row: list[PlantId | None] = []
            for cell in cells:
                if cell is None:
                    parsed_row.append(None)
                    continue
                try:
                    pid = PlantId.parse(cell)
                except (ValueError, TypeError) as exc:
                    raise MalformedPlantFile(f"row {row_id!r}: {exc}") from exc
                if pid in seen:
                    raise MalformedPlantFile(f"plant id {pid} appears twice")
                seen.add(pid)
                parsed_row.append(pid)
            grid.append(parsed_row)
        grids[row_id] = grid
    return grids


def grid_for_row(grids: dict[str, Grid], row_id: str) -> Grid:
    if row_id not in grids:
        raise UnknownRow(row_id)
    return grids[row_id]


def grid_graph(
    grid: Grid,
    rows_per_stack: int | None = None,
    bridge_gaps: bool = True,
) -> dict[PlantId, set[PlantId]]:
    """4-adjacency graph over grid plants.

    With bridge_gaps, consecutive plants in the same grid row connect across
    any run of nulls between them; vertical nulls are never bridged.
    """
    if rows_per_stack is not None and len(grid) != rows_per_stack:
        raise LayoutMismatch(f"grid has {len(grid)} rows, expected {rows_per_stack}")
    adj: dict[PlantId, set[PlantId]] = {}
    for cells in grid:
        for cell in cells:
            if cell is not None:
                adj[cell] = set()
    for cells in grid:
        present = [(c, cell) for c, cell in enumerate(cells) if cell is not None]
        for (c1, p1), (c2, p2) in zip(present, present[1:]):
            if c2 - c1 == 1 or bridge_gaps:
                adj[p1].add(p2)
                adj[p2].add(p1)
    for r in range(len(grid) - 1):
        for c, cell in enumerate(grid[r]):
            below = grid[r + 1][c]
            if cell is not None and below is not None:
                adj[cell].add(below)
                adj[below].add(cell)
    return adj


def build_plant_graph(
    grids: dict[str, Grid],
    rows_per_stack: int | None,
    row_id: str,
) -> dict[PlantId, set[PlantId]]:
    """Adjacency graph for one named row of the plant file."""
    return grid_graph(grid_for_row(grids, row_id), rows_per_stack)


# ---------------------------------------------------------------------------
# Track graph

def _dilated_window(mask: ModuleMask, radius: int):
    """(dilated window, x0, y0) covering the mask's bbox padded by radius."""
    h, w = mask.shape
    bx0, by0, bx1, by1 = (int(v) for v in mask.bbox)
    x0 = max(0, bx0 - radius)
    y0 = max(0, by0 - radius)
    x1 = min(w, bx1 + radius)
    y1 = min(h, by1 + radius)
    window = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    window[by0 - y0 : by1 - y0, bx0 - x0 : bx1 - x0] = mask.crop
    if radius > 0:
        window = ndimage.maximum_filter(window, size=2 * radius + 1, mode="constant")
    return window, x0, y0


def build_track_graph(
    store: TrackStore,
    masks_by_frame: dict[int, dict[int, ModuleMask]],
    min_track_frames: int = 5,
    dilation_frac: float = 0.10,
    overlap_min_px: int = 20,
    ray_search: bool = True,
    ray_reach_frac: float = 3.0,
    prune_degree_one: bool = True,
) -> dict[str, set[str]]:
    """Image-space adjacency over tracks seen long enough to trust.

    Nodes are tracks covering at least min_track_frames consecutive frames.
    Per frame, two masks connect when their square dilations (radius =
    dilation_frac of the frame's median mask width) overlap by more than
    overlap_min_px pixels; ray search additionally walks left and right from
    each mask along its center row (up to ray_reach_frac medians) and
    connects to the first different mask hit, bridging wider gaps. The
    largest connected component is kept (size ties favor the component with
    the smallest node id), then degree-1 nodes are dropped in a single pass.
    """
    eligible = set(store.tracks_with_min_length(min_track_frames))
    if not eligible:
        raise EmptyGraph("no tracks with required length")
    adj: dict[str, set[str]] = {t: set() for t in eligible}

    for frame_index in sorted(masks_by_frame):
        masks = masks_by_frame[frame_index]
        assigned = store.assignments.get(frame_index, {})
        present = [(t, o) for t, o in sorted(assigned.items()) if t in eligible]
        if len(present) < 2 or not masks:
            continue
        widths = np.array([masks[o].width for _, o in present])
        median_w = float(np.median(widths))
        radius = int(round(dilation_frac * median_w))

        windows = [_dilated_window(masks[o], radius) for _, o in present]
        for i in range(len(present)):
            ci, xi, yi = windows[i]
            for j in range(i + 1, len(present)):
                cj, xj, yj = windows[j]
                ox0 = max(xi, xj)
                oy0 = max(yi, yj)
                ox1 = min(xi + ci.shape[1], xj + cj.shape[1])
                oy1 = min(yi + ci.shape[0], yj + cj.shape[0])
                if ox0 >= ox1 or oy0 >= oy1:
                    continue
                a = ci[oy0 - yi : oy1 - yi, ox0 - xi : ox1 - xi]
                b = cj[oy0 - yj : oy1 - yj, ox0 - xj : ox1 - xj]
                if int(np.count_nonzero(a & b)) > overlap_min_px:
                    adj[present[i][0]].add(present[j][0])
                    adj[present[j][0]].add(present[i][0])

        if ray_search:
            shape = masks[present[0][1]].shape
            label_map = np.zeros(shape, dtype=np.int32)
            for k, (_, o) in enumerate(present):
                m = masks[o]
                x0, y0, x1, y1 = (int(v) for v in m.bbox)
                label_map[y0:y1, x0:x1][m.crop] = k + 1
            reach = int(round(ray_reach_frac * median_w))
            for k, (track_id, o) in enumerate(present):
                bbox = masks[o].bbox
                row = int((bbox[1] + bbox[3]) // 2)
                if not (0 <= row < shape[0]):
                    continue
                line = label_map[row]
                for xs in (
                    range(int(bbox[2]), min(shape[1], int(bbox[2]) + reach)),
                    range(int(bbox[0]) - 1, max(-1, int(bbox[0]) - 1 - reach), -1),
                ):
                    for x in xs:
                        lab = line[x]
                        if lab and lab != k + 1:
                            other = present[lab - 1][0]
                            adj[track_id].add(other)
                            adj[other].add(track_id)
                            break

    components: list[list[str]] = []
    unvisited = set(adj)
    while unvisited:
        start = min(unvisited)
        stack = [start]
        comp = set()
        while stack:
            node = stack.pop()
            if node in comp:
                continue
            comp.add(node)
            stack.extend(adj[node] - comp)
        unvisited -= comp
        components.append(sorted(comp))
    components.sort(key=lambda c: (-len(c), c))
    keep = set(components[0])

    if prune_degree_one:
        degrees = {t: len(adj[t] & keep) for t in keep}
        keep = {t for t in keep if degrees[t] != 1}
    if not keep:
        raise EmptyGraph("graph empty after pruning")
    return {t: adj[t] & keep for t in sorted(keep)}


def find_seed(
    front_by_frame: dict[int, list[tuple[ModuleMask, str, int]]],
    scan_direction: str,
) -> str:
    """Track id of the row's bottom-left module.

    front_by_frame maps frame index to that frame's surviving front masks as
    (mask, track_id, line_ordinal), line 0 being the largest-intercept
    (bottom) line. A rightward scan covers the row's left end first, so the
    bottom-left module sits on the bottom line of the earliest usable frame;
    a leftward scan reaches it in the latest. Leftmost center wins, ties by
    track id.
    """
    if not front_by_frame:
        raise SeedNotFound("no frames with surviving lines")
    idx = min(front_by_frame) if scan_direction == "rightward" else max(front_by_frame)
    entries = [(m.center[0], t) for m, t, line in front_by_frame[idx] if line == 0]
    if not entries:
        raise SeedNotFound(f"no bottom-line masks in frame {idx}")
    return min(entries)[1]


# ---------------------------------------------------------------------------
# Graph matching

@dataclass(eq=False)
class IdMapping:
    """Track-to-plant naming outcome for one scan row."""

    pairs: dict[str, PlantId]
    unmatched_tracks: tuple[str, ...]
    missing_plant_ids: tuple[PlantId, ...]


def _search_order(adj: dict[str, set[str]], seed: str) -> list[str]:
    """Seed first, then always the node with most already-ordered neighbors."""
    order = [seed]
    placed = {seed}
    while len(order) < len(adj):
        rest = [n for n in adj if n not in placed]
        nxt = min(rest, key=lambda n: (-len(adj[n] & placed), n))
        order.append(nxt)
        placed.add(nxt)
    return order


def match_graphs(
    track_adj: dict[str, set[str]],
    plant_adj: dict[PlantId, set[PlantId]],
    seed_track: str,
    seed_plant: PlantId,
    seed_line_tracks: set[str] | None = None,
) -> dict[str, PlantId]:
    """Assign each track node a plant id, preserving adjacency.

    When node and edge counts agree the assignment is a full isomorphism;
    otherwise the tracks embed into the plant graph (missing plants allowed,
    extra tracks are not). seed_track must land on seed_plant, and any track
    sharing the seed's center line may only land on the seed plant's grid
    row, which pins the grid orientation. Deterministic: candidates are
    tried in plant id order.
    """
    if seed_track not in track_adj:
        raise SeedNotFound(seed_track)
    if seed_plant not in plant_adj:
        raise RowUnmatchable(f"seed plant {seed_plant} not in layout")
    n_tracks = len(track_adj)
    n_plants = len(plant_adj)
    if n_tracks > n_plants:
        raise RowUnmatchable(f"{n_tracks} tracks for {n_plants} plants")

    same_line = (seed_line_tracks or set()) & set(track_adj)
    deg_t = {t: len(v) for t, v in track_adj.items()}
    deg_p = {p: len(v) for p, v in plant_adj.items()}
    order = _search_order(track_adj, seed_track)
    mapping: dict[str, PlantId] = {}
    used: set[PlantId] = set()

    def candidates(t: str) -> list[PlantId]:
        if t == seed_track:
            pool = [seed_plant]
        else:
            pool = sorted(plant_adj)
        out = []
        for p in pool:
            if p in used or deg_p[p] < deg_t[t]:
                continue
            if t in same_line and p.row != seed_plant.row:
                continue
            ok = True
            for t2 in track_adj[t]:
                if t2 in mapping and mapping[t2] not in plant_adj[p]:
                    ok = False
                    break
            if ok:
                out.append(p)
        return out

    def backtrack(k: int) -> bool:
        if k == len(order):
            return True
        t = order[k]
        for p in candidates(t):
            mapping[t] = p
            used.add(p)
            if backtrack(k + 1):
                return True
            del mapping[t]
            used.remove(p)
        return False

    if not backtrack(0):
        raise RowUnmatchable("no edge-preserving assignment")
    return dict(mapping)


def make_id_mapping(
    pairs: dict[str, PlantId],
    all_tracks: set[str],
    all_plants: set[PlantId],
) -> IdMapping:
    unmatched = tuple(sorted(all_tracks - set(pairs)))
    missing = tuple(sorted(all_plants - set(pairs.values())))
    return IdMapping(dict(sorted(pairs.items())), unmatched, missing)
