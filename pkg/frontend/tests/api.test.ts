import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { mockServer } from "./helpers.js";

describe("ApiClient", () => {
  it("unwraps the gps fix list", async () => {
    const server = mockServer();
    const api = new ApiClient("", server.fetch);
    const fixes = await api.gps();
    expect(fixes).toHaveLength(12);
    expect(fixes[0].frame_index).toBe(0);
    expect(server.calls[0]).toMatchObject({ url: "/api/gps", method: "GET" });
  });

  it("posts a row as JSON and returns the server echo", async () => {
    const server = mockServer();
    const api = new ApiClient("", server.fetch);
    const saved = await api.putRow({
      row_id: "R07",
      first_frame: 1,
      last_frame: 9,
      bottom_left: "2.1",
      top_right: "1.4",
      rows_per_stack: 2,
    });
    expect(saved.orientation).toBe("horizontal");
    expect(server.calls[0].method).toBe("POST");
    expect(server.calls[0].body).toMatchObject({ row_id: "R07", last_frame: 9 });
    expect(server.rows.get("R07")?.first_frame).toBe(1);
  });

  it("url-encodes row ids on delete", async () => {
    const server = mockServer();
    const api = new ApiClient("", server.fetch);
    server.rows.set("r/1 a", {
      row_id: "r/1 a",
      first_frame: 0,
      last_frame: 1,
      bottom_left: "1.1",
      top_right: "1.2",
      rows_per_stack: 1,
      orientation: "horizontal",
    });
    await api.deleteRow("r/1 a");
    expect(server.calls[0].url).toBe("/api/rows/r%2F1%20a");
    expect(server.rows.size).toBe(0);
  });

  it("maps error documents onto ApiError", async () => {
    const server = mockServer();
    const api = new ApiClient("", server.fetch);
    server.failNext = { status: 400, error: "bottom_left not in plant file" };
    const err = await api
      .putRow({
        row_id: "R01",
        first_frame: 0,
        last_frame: 3,
        bottom_left: "9.9",
        top_right: "1.1",
        rows_per_stack: 1,
      })
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(400);
    expect(err.message).toBe("bottom_left not in plant file");
  });

  it("keeps a generic message for non-JSON error bodies", async () => {
    const fetchFn = async () => new Response("boom", { status: 500 });
    const api = new ApiClient("", fetchFn);
    const err = await api.rows().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.message).toBe("request failed (500)");
  });

  it("builds preview urls from frame numbers", () => {
    const api = new ApiClient();
    expect(api.previewUrl(41)).toBe("/api/frames/41/preview");
  });

  it("fetches previews as blobs", async () => {
    const server = mockServer();
    const api = new ApiClient("", server.fetch);
    const blob = await api.fetchPreview(3);
    expect(blob.size).toBe(5);
    expect(server.calls[0].url).toBe("/api/frames/3/preview");
  });
});
