/** Application state: rows, the draft under edit, previews, and errors.
 *
 * The server owns the row list; this store applies optimistic updates and
 * rolls them back when a request fails, keeping the draft intact so the
 * operator never loses typed input. Invalid drafts are rejected locally
 * and no request is made.
 */

import { ApiClient, ApiError, RowDraft, RowSpec } from "./api.js";
import { emptyDraft, validateDraft, DraftCheck } from "./validate.js";

export type Listener = () => void;

export class AppStore {
  rows: RowSpec[] = [];
  draft: RowDraft = emptyDraft();
  banner: string | null = null;
  selectedFrame: number | null = null;
  frameCount = 0;

  private readonly previews = new Map<number, Promise<Blob>>();
  private readonly listeners = new Set<Listener>();

  constructor(readonly api: ApiClient) {}

  subscribe(fn: Listener): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  async load(): Promise<void> {
    this.rows = await this.api.rows();
    this.banner = null;
    this.notify();
  }

  check(): DraftCheck {
    return validateDraft(this.draft);
  }

  setDraft(patch: Partial<RowDraft>): void {
    this.draft = { ...this.draft, ...patch };
    this.notify();
  }

  selectFrame(index: number): void {
    this.selectedFrame = index;
    this.notify();
  }

  warn(message: string): void {
    this.banner = message;
    this.notify();
  }

  markFirst(): void {
    if (this.selectedFrame !== null) this.setDraft({ first_frame: this.selectedFrame });
  }

  markLast(): void {
    if (this.selectedFrame !== null) this.setDraft({ last_frame: this.selectedFrame });
  }

  /** Validate, optimistically insert, POST, reconcile. False = not sent or failed. */
  async submit(): Promise<boolean> {
    const check = this.check();
    if (!check.ok) {
      this.banner = Object.values(check.errors)[0] ?? "draft is invalid";
      this.notify();
      return false;
    }
    const d = this.draft;
    const optimistic: RowSpec = {
      row_id: d.row_id.trim(),
      first_frame: d.first_frame as number,
      last_frame: d.last_frame as number,
      bottom_left: d.bottom_left.trim(),
      top_right: d.top_right.trim(),
      rows_per_stack: d.rows_per_stack,
      orientation: "horizontal",
    };
    const before = this.rows;
    const at = before.findIndex((r) => r.row_id === optimistic.row_id);
    this.rows =
      at >= 0
        ? before.map((r, i) => (i === at ? optimistic : r))
        : [...before, optimistic];
    this.banner = null;
    this.notify();
    try {
      const saved = await this.api.putRow({
        row_id: optimistic.row_id,
        first_frame: optimistic.first_frame,
        last_frame: optimistic.last_frame,
        bottom_left: optimistic.bottom_left,
        top_right: optimistic.top_right,
        rows_per_stack: optimistic.rows_per_stack,
      });
      this.rows = this.rows.map((r) => (r.row_id === saved.row_id ? saved : r));
      this.draft = emptyDraft();
      this.notify();
      return true;
    } catch (e) {
      this.rows = before; // rollback, draft stays as typed
      this.banner = e instanceof ApiError ? e.message : "server unreachable, row not saved";
      this.notify();
      return false;
    }
  }

  async remove(rowId: string): Promise<void> {
    const before = this.rows;
    this.rows = before.filter((r) => r.row_id !== rowId);
    this.notify();
    try {
      await this.api.deleteRow(rowId);
    } catch (e) {
      this.rows = before;
      this.banner = e instanceof ApiError ? e.message : "server unreachable, row not deleted";
      this.notify();
    }
  }

  /** Edit an existing row by copying it into the draft. */
  editRow(rowId: string): void {
    const row = this.rows.find((r) => r.row_id === rowId);
    if (!row) return;
    this.setDraft({
      row_id: row.row_id,
      first_frame: row.first_frame,
      last_frame: row.last_frame,
      bottom_left: row.bottom_left,
      top_right: row.top_right,
      rows_per_stack: row.rows_per_stack,
    });
  }

  /** Previews are fetched once and cached; repeat views are free. */
  preview(frameIndex: number): Promise<Blob> {
    let hit = this.previews.get(frameIndex);
    if (!hit) {
      hit = this.api.fetchPreview(frameIndex);
      hit.catch(() => this.previews.delete(frameIndex));
      this.previews.set(frameIndex, hit);
    }
    return hit;
  }

  previewCacheSize(): number {
    return this.previews.size;
  }
}
