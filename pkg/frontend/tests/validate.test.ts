import { describe, expect, it } from "vitest";

import { emptyDraft, parsePlantId, validateDraft } from "../src/validate.js";
import { validDraft } from "./helpers.js";

describe("parsePlantId", () => {
  it("accepts row.column with positive integers", () => {
    expect(parsePlantId("2.13")).toEqual({ row: 2, col: 13 });
    expect(parsePlantId("1.1")).toEqual({ row: 1, col: 1 });
    expect(parsePlantId("  3.4  ")).toEqual({ row: 3, col: 4 });
  });

  it("rejects everything else", () => {
    for (const bad of ["", "zz", "1", "1.", ".2", "0.2", "2.0", "1.2.3", "-1.2", "1,2", "a.b"]) {
      expect(parsePlantId(bad)).toBeNull();
    }
  });
});

describe("validateDraft", () => {
  it("passes a complete draft", () => {
    const check = validateDraft(validDraft());
    expect(check.ok).toBe(true);
    expect(check.errors).toEqual({});
  });

  it("flags first frame after last frame", () => {
    const check = validateDraft({ ...validDraft(), first_frame: 30, last_frame: 2 });
    expect(check.ok).toBe(false);
    expect(check.errors.last_frame).toBe("first frame is after last frame");
  });

  it("allows first frame equal to last frame", () => {
    const check = validateDraft({ ...validDraft(), first_frame: 7, last_frame: 7 });
    expect(check.ok).toBe(true);
  });

  it("requires both frames to be set", () => {
    const check = validateDraft({ ...validDraft(), first_frame: null, last_frame: null });
    expect(check.ok).toBe(false);
    expect(check.errors.first_frame).toBeTruthy();
    expect(check.errors.last_frame).toBeTruthy();
  });

  it("rejects malformed plant ids and empty row id", () => {
    const check = validateDraft({
      ...validDraft(),
      row_id: "   ",
      bottom_left: "x1",
      top_right: "0.9",
    });
    expect(check.ok).toBe(false);
    expect(check.errors.row_id).toBeTruthy();
    expect(check.errors.bottom_left).toBeTruthy();
    expect(check.errors.top_right).toBeTruthy();
  });

  it("rejects a non-positive stack height", () => {
    expect(validateDraft({ ...validDraft(), rows_per_stack: 0 }).ok).toBe(false);
    expect(validateDraft({ ...validDraft(), rows_per_stack: 1.5 }).ok).toBe(false);
  });

  it("empty draft starts invalid", () => {
    expect(validateDraft(emptyDraft()).ok).toBe(false);
  });
});
