/** Typed client for the pipeline's HTTP API; the UI's only way in. */

export interface GpsFix {
  frame_index: number;
  latitude: number;
  longitude: number;
  altitude: number | null;
}

export interface RowSpec {
  row_id: string;
  first_frame: number;
  last_frame: number;
  bottom_left: string;
  top_right: string;
  rows_per_stack: number;
  orientation: string;
}

/** What the form edits before a RowSpec exists server-side. */
export interface RowDraft {
  row_id: string;
  first_frame: number | null;
  last_frame: number | null;
  bottom_left: string;
  top_right: string;
  rows_per_stack: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function errorOf(resp: Response): Promise<ApiError> {
  let message = `request failed (${resp.status})`;
  try {
    const doc = await resp.json();
    if (doc && typeof doc.error === "string") message = doc.error;
  } catch {
    // non-JSON error body, keep the generic message
  }
  return new ApiError(resp.status, message);
}

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(
    private readonly base = "",
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) throw await errorOf(resp);
    return (await resp.json()) as T;
  }

  async gps(): Promise<GpsFix[]> {
    const doc = await this.json<{ fixes: GpsFix[] }>("/api/gps");
    return doc.fixes;
  }

  async rows(): Promise<RowSpec[]> {
    const doc = await this.json<{ rows: RowSpec[] }>("/api/rows");
    return doc.rows;
  }

  /** Insert or replace one row; the server echoes the stored spec. */
  async putRow(row: Omit<RowSpec, "orientation"> & { orientation?: string }): Promise<RowSpec> {
    const doc = await this.json<{ row: RowSpec }>("/api/rows", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(row),
    });
    return doc.row;
  }

  async deleteRow(rowId: string): Promise<void> {
    const resp = await this.fetchFn(`${this.base}/api/rows/${encodeURIComponent(rowId)}`, {
      method: "DELETE",
    });
    if (!resp.ok) throw await errorOf(resp);
  }

  async plantfile(): Promise<string> {
    const resp = await this.fetchFn(`${this.base}/api/plantfile`);
    if (!resp.ok) throw await errorOf(resp);
    return await resp.text();
  }

  previewUrl(frameIndex: number): string {
    return `${this.base}/api/frames/${frameIndex}/preview`;
  }

  async fetchPreview(frameIndex: number): Promise<Blob> {
    const resp = await this.fetchFn(this.previewUrl(frameIndex));
    if (!resp.ok) throw await errorOf(resp);
    return await resp.blob();
  }
}
