/** Entry point: fetch the GPS track, mount the page, load rows. */

import { ApiClient, GpsFix } from "./api.js";
import { AppStore } from "./state.js";
import { mountApp } from "./ui.js";

async function boot(): Promise<void> {
  const api = new ApiClient();
  const store = new AppStore(api);
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");

  let fixes: GpsFix[] = [];
  try {
    fixes = await api.gps();
  } catch {
    // no track, the row form still works
  }
  mountApp(root, store, fixes);
  try {
    await store.load();
  } catch {
    store.warn("could not load rows from the server");
  }
}

void boot();
