"""Show how broken inputs land in distinct failure buckets.

Three sabotaged scenes: a flight that doubles back mid-row, a plant too
cold to segment, and a layout whose modules sit so far apart the track
graph falls into pieces. Each row fails on its own and the summary names
the cause; nothing crashes.
"""

import json
import tempfile
from pathlib import Path

from irpv.cli import main

work = Path(tempfile.mkdtemp(prefix="irpv_demo_"))

scenes = {
    "doubles back": {
        "seed": 9,
        "frame_width": 240,
        "frame_height": 200,
        "velocity_units": 0.45,
        "rows": [{"rows_per_stack": 1, "cols": 4, "reverse_frames": [6, 12]}],
    },
    "too cold": {
        "seed": 5,
        "frame_width": 240,
        "frame_height": 200,
        "velocity_units": 0.5,
        "module_temp_c": 25.0,
        "rows": [{"rows_per_stack": 1, "cols": 4}],
    },
    "split layout": {
        "seed": 77,
        "frame_width": 480,
        "frame_height": 300,
        "velocity_units": 0.3,
        "rows": [
            {
                "rows_per_stack": 1,
                "cols": 3,
                "detached_cols": 5,
                "detached_gap_units": 4.0,
            }
        ],
    },
}

for label, cfg in scenes.items():
    d = work / label.replace(" ", "_")
    d.mkdir()
    (d / "scene.json").write_text(json.dumps(cfg))
    main(["simulate", "--scene", str(d / "scene.json"), "--out", str(d)])
    (d / "run.json").write_text(
        json.dumps(
            {
                "frames_dir": str(d / "frames"),
                "plant_file": str(d / "plants.json"),
                "rows_file": str(d / "rows.json"),
                "out_dir": str(d / "out"),
            }
        )
    )
    main(["extract", "--config", str(d / "run.json")])
    row = json.loads((d / "out" / "summary.json").read_text())["rows"][0]
    print(f"{label:>12}: {row['reason']} ({row['detail']})\n")
