/** In-memory stand-in for the pipeline server, driven through FetchLike. */

import type { FetchLike, GpsFix, RowSpec } from "../src/api.js";

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

export interface MockServer {
  fetch: FetchLike;
  calls: RecordedCall[];
  rows: Map<string, RowSpec>;
  fixes: GpsFix[];
  /** When set, the next request gets this error response, then it clears. */
  failNext: { status: number; error: string } | null;
  /** When true every request rejects as if the server were unreachable. */
  down: boolean;
}

export function sampleFixes(n = 12): GpsFix[] {
  const fixes: GpsFix[] = [];
  for (let i = 0; i < n; i++) {
    fixes.push({
      frame_index: i,
      latitude: 48.1 + i * 1e-5,
      longitude: 11.5 + i * 2e-5,
      altitude: i % 3 === 0 ? null : 30.0,
    });
  }
  return fixes;
}

function jsonResponse(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function mockServer(fixes: GpsFix[] = sampleFixes()): MockServer {
  const server: MockServer = {
    calls: [],
    rows: new Map(),
    fixes,
    failNext: null,
    down: false,
    fetch: async (url, init) => {
      const method = init?.method ?? "GET";
      const body = typeof init?.body === "string" ? JSON.parse(init.body) : null;
      server.calls.push({ url, method, body });
      if (server.down) throw new TypeError("fetch failed");
      if (server.failNext) {
        const { status, error } = server.failNext;
        server.failNext = null;
        return jsonResponse({ error }, status);
      }
      if (url === "/api/gps") return jsonResponse({ fixes: server.fixes });
      if (url === "/api/rows" && method === "GET") {
        return jsonResponse({ rows: [...server.rows.values()] });
      }
      if (url === "/api/rows" && method === "POST") {
        const spec = { orientation: "horizontal", ...(body as object) } as RowSpec;
        server.rows.set(spec.row_id, spec);
        return jsonResponse({ row: spec }); // the server wraps the echo
      }
      const del = /^\/api\/rows\/(.+)$/.exec(url);
      if (del && method === "DELETE") {
        const rowId = decodeURIComponent(del[1]);
        if (!server.rows.delete(rowId)) {
          return jsonResponse({ error: `no row ${rowId}` }, 404);
        }
        return jsonResponse({ deleted: rowId });
      }
      const prev = /^\/api\/frames\/(\d+)\/preview$/.exec(url);
      if (prev) {
        return new Response(new Uint8Array([137, 80, 78, 71, Number(prev[1])]), {
          status: 200,
          headers: { "Content-Type": "image/png" },
        });
      }
      return jsonResponse({ error: `unhandled ${method} ${url}` }, 404);
    },
  };
  return server;
}

export function validDraft() {
  return {
    row_id: "R01",
    first_frame: 2,
    last_frame: 30,
    bottom_left: "2.1",
    top_right: "1.8",
    rows_per_stack: 2,
  };
}

/** Let queued promise callbacks run. */
export async function flush(): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, 0));
}
