"""HTTP API for inspecting a run's inputs and editing row groupings.

Serves GPS fixes, normalized frame previews, the plant layout file, and a
small CRUD surface over the rows file so an operator UI can group frame
ranges into scan rows. Row updates are validated before anything is written
and the rows file is replaced atomically under a lock.
"""

from __future__ import annotations

import errno
import io
import json
import os
import re
import tempfile
import threading
from dataclasses import asdict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from PIL import Image

from .ingest import (
    Frame,
    RowSpec,
    frame_path,
    normalize_to_u8,
    parse_gps_csv,
    raw_to_celsius,
    read_pgm,
)
from .pipeline import RunConfig
from .plantgraph import PlantId

_PREVIEW_RE = re.compile(r"^/api/frames/(\d+)/preview$")
_ROW_RE = re.compile(r"^/api/rows/([^/]+)$")


class PortInUse(Exception):
    """The requested TCP port is already bound."""

    def __init__(self, port: int):
        super().__init__(f"port {port} already in use")
        self.port = port


class AppState:
    """Shared state behind the request handlers."""

    def __init__(self, config: RunConfig, static_dir: str | Path | None = None):
        self.config = config
        self.static_dir = Path(static_dir) if static_dir else None
        self.lock = threading.Lock()
        self._previews: dict[int, bytes] = {}

    # rows file ------------------------------------------------------------

    def read_rows(self) -> list[dict]:
        path = Path(self.config.rows_file)
        if not path.exists():
            return []
        return json.loads(path.read_text(encoding="utf-8"))

    def write_rows(self, rows: list[dict]) -> None:
        path = Path(self.config.rows_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".rows-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(rows, indent=2, sort_keys=True) + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def validate_row(self, doc: dict) -> RowSpec:
        spec = RowSpec.from_dict(doc)  # KeyError / ValueError on bad fields
        PlantId.parse(spec.bottom_left)
        PlantId.parse(spec.top_right)
        for index in (spec.first_frame, spec.last_frame):
            if not frame_path(self.config.frames_dir, index).exists():
                raise ValueError(f"frame {index} not found in frames_dir")
        return spec

    def upsert_row(self, doc: dict) -> dict:
        spec = self.validate_row(doc)
        with self.lock:
            rows = self.read_rows()
            replaced = False
            for k, existing in enumerate(rows):
                if existing.get("row_id") == spec.row_id:
                    rows[k] = spec.to_dict()
                    replaced = True
                    break
            if not replaced:
                rows.append(spec.to_dict())
            self.write_rows(rows)
        return spec.to_dict()

    def delete_row(self, row_id: str) -> bool:
        with self.lock:
            rows = self.read_rows()
            kept = [r for r in rows if r.get("row_id") != row_id]
            if len(kept) == len(rows):
                return False
            self.write_rows(kept)
        return True

    # previews -------------------------------------------------------------

    def preview_png(self, index: int) -> bytes | None:
        with self.lock:
            cached = self._previews.get(index)
        if cached is not None:
            return cached
        path = frame_path(self.config.frames_dir, index)
        if not path.exists():
            return None
        raster = read_pgm(path)
        tf = raw_to_celsius(
            Frame(index, raster), self.config.temp_scale, self.config.temp_offset
        )
        u8 = normalize_to_u8(tf)
        buf = io.BytesIO()
        Image.fromarray(u8, mode="L").save(buf, format="PNG")
        png = buf.getvalue()
        with self.lock:
            self._previews[index] = png
        return png


class _Handler(BaseHTTPRequestHandler):
    state: AppState  # set on the server class

    # quiet by default; BaseHTTPRequestHandler logs to stderr per request
    def log_message(self, fmt, *args):
        pass

    def _send(self, code: int, body: bytes, content_type: str) -> None:
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _json(self, code: int, doc) -> None:
        self._send(code, json.dumps(doc).encode("utf-8"), "application/json")

    def _error(self, code: int, message: str) -> None:
        self._json(code, {"error": message})

    def _read_body(self) -> dict | None:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return None
        return doc if isinstance(doc, dict) else None

    def do_GET(self):  # noqa: N802 (stdlib handler naming)
        state = self.state
        if self.path == "/api/gps":
            if not state.config.gps_csv or not Path(state.config.gps_csv).exists():
                self._json(200, {"fixes": []})
                return
            fixes = parse_gps_csv(state.config.gps_csv)
            self._json(200, {"fixes": [asdict(f) for f in fixes]})
            return
        if self.path == "/api/rows":
            self._json(200, {"rows": state.read_rows()})
            return
        if self.path == "/api/plantfile":
            path = Path(state.config.plant_file)
            if not path.exists():
                self._error(404, "plant file not found")
                return
            self._send(200, path.read_bytes(), "application/json")
            return
        m = _PREVIEW_RE.match(self.path)
        if m:
            png = state.preview_png(int(m.group(1)))
            if png is None:
                self._error(404, "frame not found")
                return
            self._send(200, png, "image/png")
            return
        self._static()

    def do_POST(self):  # noqa: N802
        if self.path != "/api/rows":
            self._error(404, "not found")
            return
        doc = self._read_body()
        if doc is None:
            self._error(400, "body must be a JSON object")
            return
        try:
            stored = self.state.upsert_row(doc)
        except KeyError as exc:
            self._error(400, f"missing field {exc.args[0]!r}")
            return
        except ValueError as exc:
            self._error(400, str(exc))
            return
        self._json(200, {"row": stored})

    def do_DELETE(self):  # noqa: N802
        m = _ROW_RE.match(self.path)
        if not m:
            self._error(404, "not found")
            return
        if self.state.delete_row(m.group(1)):
            self._json(200, {"deleted": m.group(1)})
        else:
            self._error(404, "row not found")

    def _static(self):
        root = self.state.static_dir
        if root is None:
            self._error(404, "not found")
            return
        rel = self.path.split("?", 1)[0].lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._error(404, "not found")
            return
        types = {
            ".html": "text/html; charset=utf-8",
            ".js": "text/javascript; charset=utf-8",
            ".css": "text/css; charset=utf-8",
            ".json": "application/json",
            ".png": "image/png",
            ".svg": "image/svg+xml",
        }
        ctype = types.get(target.suffix, "application/octet-stream")
        self._send(200, target.read_bytes(), ctype)


def make_server(
    config: RunConfig,
    port: int,
    static_dir: str | Path | None = None,
    host: str = "127.0.0.1",
) -> ThreadingHTTPServer:
    """Build the HTTP server; raises PortInUse when the port is taken."""
    state = AppState(config, static_dir)

    class Handler(_Handler):
        pass

    Handler.state = state
    try:
        return ThreadingHTTPServer((host, port), Handler)
    except OSError as exc:
        if exc.errno == errno.EADDRINUSE:
            raise PortInUse(port) from exc
        raise


def serve(config: RunConfig, port: int, static_dir=None, host: str = "127.0.0.1") -> None:
    server = make_server(config, port, static_dir, host)
    try:
        server.serve_forever()
    finally:
        server.server_close()


serve_api = serve
