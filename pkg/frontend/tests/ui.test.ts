// @vitest-environment jsdom
import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { fitViewport, projectTrack, toScreen } from "../src/geo.js";
import { AppStore } from "../src/state.js";
import { mountApp } from "../src/ui.js";
import { flush, mockServer, sampleFixes } from "./helpers.js";

// jsdom has no 2d context; the plot guards on null so drawing is a no-op
beforeEach(() => {
  document.body.textContent = "";
  vi.spyOn(HTMLCanvasElement.prototype, "getContext").mockReturnValue(null);
});

function mounted(server = mockServer()) {
  const store = new AppStore(new ApiClient("", server.fetch));
  const root = document.createElement("div");
  document.body.append(root);
  const app = mountApp(root, store, server.fixes);
  return { server, store, root, app };
}

function typeInto(root: HTMLElement, name: string, value: string): void {
  const input = root.querySelector<HTMLInputElement>(`input[name="${name}"]`)!;
  input.value = value;
  input.dispatchEvent(new Event("input", { bubbles: true }));
}

function submitForm(root: HTMLElement): void {
  root
    .querySelector("form")!
    .dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
}

function clickFix(root: HTMLElement, index: number, fixes = sampleFixes()): void {
  const canvas = root.querySelector<HTMLCanvasElement>("#track")!;
  const projected = projectTrack(fixes);
  const v = fitViewport(projected.points, canvas.width, canvas.height);
  const s = toScreen(projected.points[index], v);
  canvas.dispatchEvent(new MouseEvent("click", { clientX: s.x, clientY: s.y }));
}

describe("mountApp", () => {
  it("renders the form, plot and an empty row list", () => {
    const { root } = mounted();
    expect(root.querySelector("#track")).toBeTruthy();
    expect(root.querySelector('input[name="row_id"]')).toBeTruthy();
    expect(root.querySelectorAll("#row-list li")).toHaveLength(0);
    expect(root.querySelector<HTMLElement>("#banner")!.hidden).toBe(true);
  });

  it("selects frames from clicks on the track and marks the range", async () => {
    const { root, store, server } = mounted();
    clickFix(root, 4);
    expect(store.selectedFrame).toBe(4);
    expect(root.querySelector("#frame-label")!.textContent).toBe("frame 4");
    await flush(); // the click also pulls that frame's preview, lazily
    expect(server.calls.some((c) => c.url === "/api/frames/4/preview")).toBe(true);

    (root.querySelector("#mark-first") as HTMLButtonElement).click();
    clickFix(root, 9);
    (root.querySelector("#mark-last") as HTMLButtonElement).click();
    expect(store.draft.first_frame).toBe(4);
    expect(store.draft.last_frame).toBe(9);
    expect(root.querySelector("#frame-range")!.textContent).toBe("frames: 4 .. 9");
  });

  it("handles a long track, clicking point 42 of 100 loads preview 42", async () => {
    const fixes = sampleFixes(100);
    const { root, store, server } = mounted(mockServer(fixes));
    clickFix(root, 42, fixes);
    await flush();
    expect(store.selectedFrame).toBe(42);
    expect(server.calls.some((c) => c.url === "/api/frames/42/preview")).toBe(true);
  });

  it("saves a valid row through the form and lists it", async () => {
    const { root, server, store } = mounted();
    typeInto(root, "row_id", "R01");
    typeInto(root, "bottom_left", "2.1");
    typeInto(root, "top_right", "1.8");
    typeInto(root, "rows_per_stack", "2");
    clickFix(root, 2);
    (root.querySelector("#mark-first") as HTMLButtonElement).click();
    clickFix(root, 9);
    (root.querySelector("#mark-last") as HTMLButtonElement).click();

    submitForm(root);
    await flush();

    expect(server.calls.filter((c) => c.method === "POST")).toHaveLength(1);
    expect(server.rows.get("R01")).toMatchObject({ first_frame: 2, last_frame: 9 });
    const items = root.querySelectorAll("#row-list li");
    expect(items).toHaveLength(1);
    expect(items[0].textContent).toContain("R01: frames 2..9, 2.1 to 1.8, stack 2");
    expect(root.querySelector<HTMLElement>("#banner")!.hidden).toBe(true);
    expect(store.draft.row_id).toBe(""); // form reset for the next row

    // a page reload rebuilds the same list from GET /api/rows alone
    const reloadRoot = document.createElement("div");
    document.body.append(reloadRoot);
    const reloadStore = new AppStore(new ApiClient("", server.fetch));
    mountApp(reloadRoot, reloadStore, server.fixes);
    await reloadStore.load();
    const after = reloadRoot.querySelectorAll("#row-list li");
    expect(after).toHaveLength(1);
    expect(after[0].textContent).toContain("R01: frames 2..9, 2.1 to 1.8, stack 2");
  });

  it("blocks first > last in the browser and sends nothing", async () => {
    const { root, server, store } = mounted();
    typeInto(root, "row_id", "R02");
    typeInto(root, "bottom_left", "2.1");
    typeInto(root, "top_right", "1.8");
    typeInto(root, "rows_per_stack", "2");
    clickFix(root, 9);
    (root.querySelector("#mark-first") as HTMLButtonElement).click();
    clickFix(root, 2);
    (root.querySelector("#mark-last") as HTMLButtonElement).click();

    submitForm(root);
    await flush();

    // no submission left the client, only the preview fetches from the clicks
    expect(server.calls.filter((c) => c.method !== "GET")).toHaveLength(0);
    expect(server.calls.every((c) => /\/api\/frames\/\d+\/preview$/.test(c.url))).toBe(true);
    const banner = root.querySelector<HTMLElement>("#banner")!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toBe("first frame is after last frame");
    // the typed draft survives for correction
    expect(store.draft.row_id).toBe("R02");
    expect(
      root.querySelector<HTMLInputElement>('input[name="row_id"]')!.value,
    ).toBe("R02");
  });

  it("keeps the form populated when the server rejects the row", async () => {
    const { root, server, store } = mounted();
    typeInto(root, "row_id", "R03");
    typeInto(root, "bottom_left", "9.1");
    typeInto(root, "top_right", "1.8");
    typeInto(root, "rows_per_stack", "2");
    clickFix(root, 2);
    (root.querySelector("#mark-first") as HTMLButtonElement).click();
    clickFix(root, 9);
    (root.querySelector("#mark-last") as HTMLButtonElement).click();

    server.failNext = { status: 400, error: "bottom_left not in plant file" };
    submitForm(root);
    await flush();

    const banner = root.querySelector<HTMLElement>("#banner")!;
    expect(banner.hidden).toBe(false);
    expect(banner.textContent).toBe("bottom_left not in plant file");
    expect(root.querySelectorAll("#row-list li")).toHaveLength(0); // rolled back
    expect(store.draft.bottom_left).toBe("9.1");
  });

  it("edits a listed row back into the form and deletes rows", async () => {
    const { root, store, server } = mounted();
    store.setDraft({
      row_id: "R04",
      first_frame: 1,
      last_frame: 8,
      bottom_left: "2.2",
      top_right: "1.5",
      rows_per_stack: 3,
    });
    await store.submit();

    (root.querySelector("#row-list .edit") as HTMLButtonElement).click();
    expect(root.querySelector<HTMLInputElement>('input[name="row_id"]')!.value).toBe("R04");
    expect(root.querySelector("#frame-range")!.textContent).toBe("frames: 1 .. 8");

    (root.querySelector("#row-list .delete") as HTMLButtonElement).click();
    await flush();
    expect(root.querySelectorAll("#row-list li")).toHaveLength(0);
    expect(server.rows.size).toBe(0);
  });
});
