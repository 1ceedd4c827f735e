/** Browser bootstrap: wire the session and renderer to the page. */

import { ApiClient } from "./api.js";
import { renderApp } from "./render.js";
import { AnnotationSession } from "./session.js";

function workerIdFromPage(): string {
  // worker identity is a caller-supplied opaque id; nothing is persisted
  const fromQuery = new URLSearchParams(window.location.search).get("worker");
  return fromQuery ?? `worker-${Math.random().toString(36).slice(2, 10)}`;
}

export function boot(root: HTMLElement): AnnotationSession {
  const api = new ApiClient(window.location.origin);
  const session = new AnnotationSession(api, workerIdFromPage());
  renderApp(root, session, api);
  window.addEventListener("online", () => void session.flushQueued());
  void session.start();
  return session;
}

const root = document.getElementById("app");
if (root) boot(root);
