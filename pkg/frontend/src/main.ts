import { ArenaApi } from "./api.js";
import { createApp } from "./app.js";

function annotatorId(): string {
  const key = "arena-annotator";
  let id = localStorage.getItem(key);
  if (!id) {
    id = `ann-${Math.random().toString(36).slice(2, 10)}`;
    localStorage.setItem(key, id);
  }
  return id;
}

function baseUrl(): string {
  const meta = document.querySelector('meta[name="arena-base"]');
  return meta?.getAttribute("content") ?? "";
}

document.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const app = createApp(root, new ArenaApi(baseUrl()), { annotator: annotatorId() });
  void app.start();
});
