/** Client-side draft validation, mirroring the server's rules.
 *
 * Anything failing here is blocked before a request goes out; the server
 * still re-validates, this is just the fast path the form reacts to.
 */

import type { RowDraft } from "./api.js";

export interface PlantId {
  row: number;
  col: number;
}

/** Strict "row.column" with both parts positive integers, else null. */
export function parsePlantId(text: string): PlantId | null {
  const m = /^(\d+)\.(\d+)$/.exec(text.trim());
  if (!m) return null;
  const row = parseInt(m[1], 10);
  const col = parseInt(m[2], 10);
  if (row < 1 || col < 1) return null;
  return { row, col };
}

export type DraftErrors = Partial<Record<keyof RowDraft, string>>;

export interface DraftCheck {
  ok: boolean;
  errors: DraftErrors;
}

export function validateDraft(d: RowDraft): DraftCheck {
  const errors: DraftErrors = {};
  if (!d.row_id.trim()) errors.row_id = "row id is required";
  if (d.first_frame === null || !Number.isInteger(d.first_frame) || d.first_frame < 0) {
    errors.first_frame = "pick a first frame";
  }
  if (d.last_frame === null || !Number.isInteger(d.last_frame) || d.last_frame < 0) {
    errors.last_frame = "pick a last frame";
  }
  if (
    d.first_frame !== null &&
    d.last_frame !== null &&
    !(errors.first_frame || errors.last_frame) &&
    d.first_frame > d.last_frame
  ) {
    errors.last_frame = "first frame is after last frame";
  }
  if (!parsePlantId(d.bottom_left)) errors.bottom_left = "plant id must look like 2.1";
  if (!parsePlantId(d.top_right)) errors.top_right = "plant id must look like 1.8";
  if (!Number.isInteger(d.rows_per_stack) || d.rows_per_stack < 1) {
    errors.rows_per_stack = "stack height must be a positive integer";
  }
  return { ok: Object.keys(errors).length === 0, errors };
}

export function emptyDraft(): RowDraft {
  return {
    row_id: "",
    first_frame: null,
    last_frame: null,
    bottom_left: "",
    top_right: "",
    rows_per_stack: 1,
  };
}
