import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { initApp, StorageLike } from "../src/main.js";
import { makeTasks, ServiceDouble } from "./double.js";
import { waitFor } from "./helpers.js";

function fakeStorage(seed: Record<string, string> = {}): StorageLike & { data: Map<string, string> } {
  const data = new Map(Object.entries(seed));
  return {
    data,
    getItem: (key) => data.get(key) ?? null,
    setItem: (key, value) => void data.set(key, value),
  };
}

let root: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = "<div id='root'></div>";
  root = document.getElementById("root") as HTMLElement;
});

describe("initApp", () => {
  it("asks for a name once, stores it, and starts the session", async () => {
    const double = new ServiceDouble({ classNames: ["For", "Against"], tasks: makeTasks(1, ["For", "Against"]) });
    const storage = fakeStorage();
    initApp(root, new ApiClient(double.fetch), storage, document);

    const input = root.querySelector<HTMLInputElement>("[data-role='annotator-input']");
    expect(input).not.toBeNull();
    input!.value = "carol";
    root
      .querySelector<HTMLButtonElement>("[data-role='annotator-start']")
      ?.dispatchEvent(new MouseEvent("click", { bubbles: true }));

    expect(storage.data.get("redct-annotator-id")).toBe("carol");
    await waitFor(
      () => root.querySelector("[data-role='doc-text']") !== null,
      "first task to render",
    );
    expect(double.requests).toContain("GET /api/tasks/next?annotator=carol");
  });

  it("skips the form when an annotator id is already stored", async () => {
    const double = new ServiceDouble({ classNames: ["For", "Against"], tasks: makeTasks(1, ["For", "Against"]) });
    initApp(root, new ApiClient(double.fetch), fakeStorage({ "redct-annotator-id": "dave" }), document);
    expect(root.querySelector("[data-role='annotator-input']")).toBeNull();
    await waitFor(
      () => root.querySelector("[data-role='doc-text']") !== null,
      "first task to render",
    );
    expect(double.requests).toContain("GET /api/tasks/next?annotator=dave");
  });
});
