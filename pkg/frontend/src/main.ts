/** Entry point: annotator id form, then the labeling session. */

import { ApiClient, FetchLike } from "./api.js";
import { bindDigitShortcuts } from "./keyboard.js";
import { AnnotatorSession } from "./session.js";
import { render, renderNameForm } from "./ui.js";

const STORAGE_KEY = "redct-annotator-id";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

/** Start the session UI; returns the session for teardown in tests. */
export function startSession(
  root: HTMLElement,
  api: ApiClient,
  annotator: string,
  doc: Document = document,
): AnnotatorSession {
  const session = new AnnotatorSession({ api, annotator });
  const handlers = {
    onSelect: (i: number) => void session.select(i),
    onRetry: () => void session.retryNow(),
  };
  let unbindKeys: (() => void) | null = null;
  session.subscribe((view) => {
    render(root, view, handlers);
    const k = view.schema?.class_names.length ?? 0;
    if (k > 0 && unbindKeys === null) {
      unbindKeys = bindDigitShortcuts(doc, k, handlers.onSelect);
    }
  });
  void session.start();
  return session;
}

/** Show the name form unless an annotator id is already stored. */
export function initApp(
  root: HTMLElement,
  api: ApiClient,
  storage: StorageLike,
  doc: Document = document,
): void {
  const saved = storage.getItem(STORAGE_KEY);
  if (saved) {
    startSession(root, api, saved, doc);
    return;
  }
  renderNameForm(root, (annotator) => {
    storage.setItem(STORAGE_KEY, annotator);
    startSession(root, api, annotator, doc);
  });
}

// Browser bootstrap: tests import the functions above and never add an
// #app element before import, so this stays inert under vitest.
if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root !== null) {
    const fetchImpl: FetchLike = (url, init) => fetch(url, init);
    initApp(root, new ApiClient(fetchImpl), window.localStorage);
  }
}
