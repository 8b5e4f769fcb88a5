"""Drive the HTTP API the way the row-grouping UI does.

Starts the server on an ephemeral port against a fresh synthetic scene,
lists GPS fixes, fetches a frame preview, replaces the row grouping, and
reads it back. The server is the single source of truth for rows; the
browser tool is just a client of these six endpoints.
"""

import json
import tempfile
import threading
import urllib.request
from pathlib import Path

from irpv.pipeline import RunConfig
from irpv.server import make_server
from irpv.simulate import simulate_scene

work = Path(tempfile.mkdtemp(prefix="irpv_demo_"))
scene_dir = work / "scene"
simulate_scene(
    {
        "seed": 4,
        "frame_width": 320,
        "frame_height": 240,
        "velocity_units": 0.4,
        "rows": [{"rows_per_stack": 2, "cols": 4}],
    },
    scene_dir,
)

config = RunConfig(
    frames_dir=str(scene_dir / "frames"),
    plant_file=str(scene_dir / "plants.json"),
    rows_file=str(scene_dir / "rows.json"),
    gps_csv=str(scene_dir / "gps.csv"),
    out_dir=str(work / "out"),
)
server = make_server(config, 0)
port = server.server_address[1]
threading.Thread(target=server.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{port}"

with urllib.request.urlopen(f"{base}/api/gps") as resp:
    fixes = json.load(resp)["fixes"]
print(f"{len(fixes)} gps fixes, first at ({fixes[0]['latitude']}, {fixes[0]['longitude']})")

with urllib.request.urlopen(f"{base}/api/frames/0/preview") as resp:
    png = resp.read()
print(f"frame 0 preview: {len(png)} bytes of {resp.headers['Content-Type']}")

draft = {
    "row_id": "R01",
    "first_frame": 2,
    "last_frame": len(fixes) - 3,
    "bottom_left": "2.1",
    "top_right": "1.4",
    "rows_per_stack": 2,
}
req = urllib.request.Request(
    f"{base}/api/rows",
    data=json.dumps(draft).encode(),
    headers={"Content-Type": "application/json"},
    method="POST",
)
with urllib.request.urlopen(req) as resp:
    print(f"POST /api/rows -> {resp.status}")

with urllib.request.urlopen(f"{base}/api/rows") as resp:
    rows = json.load(resp)["rows"]
print(f"rows now on disk: {[r['row_id'] for r in rows]}, "
      f"frames {rows[0]['first_frame']}..{rows[0]['last_frame']}")

server.shutdown()
server.server_close()
