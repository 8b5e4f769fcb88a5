/** DOM wiring: one call builds the whole page against a store. */

import type { GpsFix } from "./api.js";
import { createTrackPlot } from "./plot.js";
import { AppStore } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

const FIELDS = [
  ["row_id", "row id", "R01"],
  ["bottom_left", "bottom left plant id", "2.1"],
  ["top_right", "top right plant id", "1.8"],
  ["rows_per_stack", "modules per stack", "2"],
] as const;

export interface App {
  refresh(): void;
  root: HTMLElement;
}

export function mountApp(root: HTMLElement, store: AppStore, fixes: GpsFix[]): App {
  root.textContent = "";
  const banner = el("div", { class: "banner", id: "banner", hidden: "" });
  const layout = el("div", { class: "layout" });
  const left = el("div", { class: "panel" });
  const right = el("div", { class: "panel" });
  root.append(banner, layout);
  layout.append(left, right);

  // track plot and frame preview
  const canvas = el("canvas", { id: "track", width: "520", height: "340" });
  const hoverLabel = el("div", { class: "hint" }, "hover the track to see frame numbers");
  const preview = el("img", { id: "preview", alt: "frame preview" });
  const frameLabel = el("div", { id: "frame-label" }, "no frame selected");
  const markFirst = el("button", { id: "mark-first", type: "button" }, "set as first frame");
  const markLast = el("button", { id: "mark-last", type: "button" }, "set as last frame");
  const markRow = el("div", { class: "marks" });
  markRow.append(markFirst, markLast);
  left.append(canvas, hoverLabel, frameLabel, markRow, preview);

  const plot = fixes.length > 0 ? createTrackPlot(canvas, fixes) : null;

  canvas.addEventListener("mousemove", (ev) => {
    if (!plot) return;
    const rect = canvas.getBoundingClientRect();
    const i = plot.pick(ev.clientX - rect.left, ev.clientY - rect.top);
    hoverLabel.textContent = i === null ? "hover the track to see frame numbers" : `frame ${i}`;
  });

  canvas.addEventListener("click", (ev) => {
    if (!plot) return;
    const rect = canvas.getBoundingClientRect();
    const i = plot.pick(ev.clientX - rect.left, ev.clientY - rect.top);
    if (i === null) return;
    store.selectFrame(plot.fixes[i].frame_index);
    void showPreview(plot.fixes[i].frame_index);
  });

  async function showPreview(frameIndex: number): Promise<void> {
    try {
      const blob = await store.preview(frameIndex);
      if (typeof URL !== "undefined" && typeof URL.createObjectURL === "function") {
        preview.src = URL.createObjectURL(blob);
      }
    } catch {
      store.warn("preview failed to load");
    }
  }

  // row form
  const form = el("form", { id: "row-form" });
  const inputs = new Map<string, HTMLInputElement>();
  for (const [name, label, placeholder] of FIELDS) {
    const wrap = el("label", { class: "field" }, label);
    const input = el("input", { name, placeholder, autocomplete: "off" });
    input.addEventListener("input", () => {
      if (name === "rows_per_stack") {
        const n = parseInt(input.value, 10);
        store.setDraft({ rows_per_stack: Number.isNaN(n) ? 0 : n });
      } else {
        store.setDraft({ [name]: input.value });
      }
    });
    inputs.set(name, input);
    wrap.append(input);
    form.append(wrap);
  }
  const frameSpan = el("div", { id: "frame-range" }, "frames: not set");
  const submit = el("button", { id: "submit", type: "submit" }, "save row");
  form.append(frameSpan, submit);
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    void store.submit();
  });

  const listTitle = el("h2", {}, "rows");
  const list = el("ul", { id: "row-list" });
  right.append(form, listTitle, list);

  markFirst.addEventListener("click", () => store.markFirst());
  markLast.addEventListener("click", () => store.markLast());

  function refresh(): void {
    banner.hidden = store.banner === null;
    banner.textContent = store.banner ?? "";

    frameLabel.textContent =
      store.selectedFrame === null ? "no frame selected" : `frame ${store.selectedFrame}`;
    const d = store.draft;
    frameSpan.textContent = `frames: ${d.first_frame ?? "?"} .. ${d.last_frame ?? "?"}`;
    for (const [name, input] of inputs) {
      const want =
        name === "rows_per_stack"
          ? String(d.rows_per_stack)
          : String(d[name as "row_id" | "bottom_left" | "top_right"]);
      if (input.value !== want && document.activeElement !== input) input.value = want;
    }

    list.textContent = "";
    for (const row of store.rows) {
      const item = el("li", { class: "row-item" });
      item.append(
        el(
          "span",
          {},
          `${row.row_id}: frames ${row.first_frame}..${row.last_frame}, ` +
            `${row.bottom_left} to ${row.top_right}, stack ${row.rows_per_stack}`,
        ),
      );
      const edit = el("button", { type: "button", class: "edit" }, "edit");
      edit.addEventListener("click", () => store.editRow(row.row_id));
      const del = el("button", { type: "button", class: "delete" }, "delete");
      del.addEventListener("click", () => void store.remove(row.row_id));
      item.append(edit, del);
      list.append(item);
    }

    plot?.draw(
      store.selectedFrame,
      store.draft.first_frame,
      store.draft.last_frame,
    );
  }

  store.subscribe(refresh);
  refresh();
  return { refresh, root };
}
