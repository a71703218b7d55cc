/** DOM rendering for the annotator session.
 *
 * Pure view layer: rebuilds the app root from a SessionView on every state
 * change and forwards clicks to the session. All text lands via textContent,
 * never innerHTML — documents are untrusted input.
 *
 * The LLM's suggestion is rendered only when the task payload carries one;
 * by default the server omits it so annotators judge the text unanchored.
 */

import { SessionView } from "./session.js";

export interface UiHandlers {
  onSelect(classIndex: number): void;
  onRetry(): void;
}

type Attrs = Record<string, string>;

function el(tag: string, attrs: Attrs = {}, text?: string): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function progressBar(view: SessionView): HTMLElement {
  const wrap = el("div", { class: "progress", "data-role": "progress" });
  const completed = view.progress?.completed ?? 0;
  const total = view.progress?.total ?? 0;
  const pct = total > 0 ? Math.round((100 * completed) / total) : 0;
  const track = el("div", { class: "progress-track" });
  const fill = el("div", { class: "progress-fill", "data-role": "progress-fill" });
  fill.style.width = `${pct}%`;
  track.appendChild(fill);
  wrap.appendChild(track);
  wrap.appendChild(
    el("span", { class: "progress-text" }, `${completed} / ${total} labeled`),
  );
  return wrap;
}

function taskCard(view: SessionView, handlers: UiHandlers): HTMLElement {
  const task = view.task;
  const card = el("section", { class: "card", "data-role": "task" });
  if (task === null) return card;
  if (task.target) {
    card.appendChild(el("div", { class: "target", "data-role": "target" }, `Target: ${task.target}`));
  }
  card.appendChild(el("p", { class: "doc-text", "data-role": "doc-text" }, task.text));
  if (task.llm_suggestion !== undefined) {
    const conf =
      task.llm_confidence !== undefined ? ` (confidence ${task.llm_confidence.toFixed(3)})` : "";
    card.appendChild(
      el(
        "div",
        { class: "suggestion", "data-role": "suggestion" },
        `Model suggestion: ${task.llm_suggestion}${conf}`,
      ),
    );
  }
  const names = view.schema?.class_names ?? task.class_names;
  const buttons = el("div", { class: "choices", "data-role": "choices" });
  names.forEach((name, i) => {
    const button = el(
      "button",
      { class: "choice", "data-class-index": String(i) },
      `${i + 1}. ${name}`,
    ) as HTMLButtonElement;
    button.disabled = view.phase !== "task";
    button.addEventListener("click", () => handlers.onSelect(i));
    buttons.appendChild(button);
  });
  card.appendChild(buttons);
  card.appendChild(
    el("p", { class: "hint" }, "Press 1–" + String(Math.min(names.length, 9)) + " to label from the keyboard."),
  );
  return card;
}

function retryBanner(view: SessionView, handlers: UiHandlers): HTMLElement {
  const banner = el("div", { class: "error", "data-role": "error" });
  banner.appendChild(el("span", {}, view.error ?? "something went wrong"));
  if (view.retryDelayMs !== null) {
    banner.appendChild(
      el("span", { class: "backoff" }, ` (auto-retry in ${(view.retryDelayMs / 1000).toFixed(1)}s)`),
    );
  }
  const retry = el("button", { class: "retry", "data-role": "retry" }, "Retry now") as HTMLButtonElement;
  retry.addEventListener("click", () => handlers.onRetry());
  banner.appendChild(retry);
  return banner;
}

/** Rebuild the root from the current view. */
export function render(root: HTMLElement, view: SessionView, handlers: UiHandlers): void {
  root.textContent = "";
  const header = el("header", { class: "header" });
  header.appendChild(el("h1", {}, view.schema?.task_id ?? "annotation"));
  if (view.schema) header.appendChild(el("p", { class: "description" }, view.schema.description));
  root.appendChild(header);
  root.appendChild(progressBar(view));

  if (view.toast) {
    root.appendChild(el("div", { class: "toast", "data-role": "toast" }, view.toast));
  }
  if (view.phase === "fetch-retry" || view.phase === "submit-retry") {
    root.appendChild(retryBanner(view, handlers));
  }

  switch (view.phase) {
    case "idle":
    case "loading":
      root.appendChild(el("p", { class: "status", "data-role": "loading" }, "Loading…"));
      break;
    case "task":
    case "submitting":
    case "submit-retry":
      root.appendChild(taskCard(view, handlers));
      break;
    case "waiting":
      root.appendChild(
        el(
          "p",
          { class: "status", "data-role": "waiting" },
          "No tasks available right now; the remaining ones are checked out. Waiting…",
        ),
      );
      break;
    case "done": {
      const done = el("section", { class: "done", "data-role": "done" });
      done.appendChild(el("h2", {}, "All tasks are labeled."));
      const total = view.progress?.total ?? 0;
      done.appendChild(
        el("p", {}, `${total} of ${total} documents labeled; you submitted ${view.submittedByMe}. You can close this tab.`),
      );
      root.appendChild(done);
      break;
    }
    case "fetch-retry":
      break;
  }
}

/** First screen: ask for an annotator id before starting the session. */
export function renderNameForm(root: HTMLElement, onStart: (annotator: string) => void): void {
  root.textContent = "";
  const card = el("section", { class: "card name-form", "data-role": "name-form" });
  card.appendChild(el("h1", {}, "Who is annotating?"));
  card.appendChild(el("p", {}, "Submissions are tracked per annotator id."));
  const input = el("input", {
    type: "text",
    placeholder: "your-name",
    "data-role": "annotator-input",
  }) as HTMLInputElement;
  const start = el("button", { "data-role": "annotator-start" }, "Start") as HTMLButtonElement;
  const submit = (): void => {
    const name = input.value.trim();
    if (name.length > 0) onStart(name);
  };
  start.addEventListener("click", submit);
  input.addEventListener("keydown", (e) => {
    if ((e as KeyboardEvent).key === "Enter") submit();
  });
  card.appendChild(input);
  card.appendChild(start);
  root.appendChild(card);
  input.focus();
}
