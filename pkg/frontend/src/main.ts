/** Bootstrap: annotator id from ?annotator=... or a stored/prompted token. */

import { ApiClient } from "./api.js";
import { AnnotatorApp } from "./app.js";

function annotatorId(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("annotator");
  if (fromQuery) {
    localStorage.setItem("annotator_id", fromQuery);
    return fromQuery;
  }
  const stored = localStorage.getItem("annotator_id");
  if (stored) {
    return stored;
  }
  const token = window.prompt("Enter your annotator token:") ?? "";
  localStorage.setItem("annotator_id", token);
  return token;
}

const root = document.getElementById("app");
if (root) {
  const app = new AnnotatorApp(root, new ApiClient(""), annotatorId());
  void app.fetchAndRenderTask();
}
