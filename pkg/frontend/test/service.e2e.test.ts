/**
 * Full round-trip against the real annotation service: the UI highlights
 * two overlapping spans (through an astral emoji, where UTF-16 units and
 * code points diverge), submits over HTTP, and the offsets the service
 * stored must reproduce the highlighted substrings exactly when applied
 * with code-point slicing (the service side slices Python strings).
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { AnnotatorApp } from "../src/app.js";
import { sliceByCodePoints } from "../src/offsets.js";

const RESPONSE_TEXT =
  "The 🌞 sun boosts panel output in summer, and the café ☕ crowd approves. " +
  "Maintenance is mostly rinsing dust off twice a year.";

const TASK = {
  task_id: "e2e-task-0001",
  query_id: "q1",
  system_id: "sys_x",
  query_text: "how do solar panels perform through the seasons?",
  response_text: RESPONSE_TEXT,
  required_annotators: 3,
  aspects: {
    query_id: "q1",
    provenance: "gold",
    aspects: [
      { id: "1", text: "seasonal output" },
      { id: "2", text: "maintenance effort" },
      { id: "3", text: "installation cost" },
    ],
  },
};

const PORT = 8741 + Math.floor(Math.random() * 200);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let storePath: string;

async function waitForServer(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt += 1) {
    try {
      const response = await fetch(`${BASE}/api/guidelines`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  throw new Error("annotation service did not come up");
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "icat-ui-e2e-"));
  storePath = join(dir, "store.jsonl");
  writeFileSync(join(dir, "tasks.jsonl"), JSON.stringify(TASK) + "\n");
  server = spawn(
    "python3",
    ["-m", "icat.cli", "annotate", "serve", "--tasks", dir,
     "--store", storePath, "--port", String(PORT), "--host", "127.0.0.1"],
    { stdio: "ignore" },
  );
  await waitForServer();
});

afterAll(() => {
  server?.kill();
});

function locate(container: HTMLElement, target: number): [Text, number] {
  const walker = document.createTreeWalker(container, NodeFilter.SHOW_TEXT);
  let seen = 0;
  let node = walker.nextNode() as Text | null;
  while (node) {
    if (target <= seen + node.data.length) return [node, target - seen];
    seen += node.data.length;
    node = walker.nextNode() as Text | null;
  }
  throw new Error(`offset ${target} beyond text`);
}

function rangeOver(root: HTMLElement, needle: string, extend = 0): Range {
  const container = root.querySelector(".response-text") as HTMLElement;
  const text = container.textContent as string;
  const lo = text.indexOf(needle);
  expect(lo).toBeGreaterThanOrEqual(0);
  const [sn, so] = locate(container, lo);
  const [en, eo] = locate(container, lo + needle.length + extend);
  const range = document.createRange();
  range.setStart(sn, so);
  range.setEnd(en, eo);
  return range;
}

describe("UI round-trip against the live service", () => {
  it("stores offsets that reproduce the highlighted substrings exactly", async () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = new AnnotatorApp(root, new ApiClient(BASE), "e2e-annotator");
    await app.fetchAndRenderTask();
    expect(app.task?.task_id).toBe(TASK.task_id);
    expect(root.querySelector(".response-text")?.textContent).toBe(RESPONSE_TEXT);

    // two overlapping selections through the astral emoji; they merge
    app.highlightSelection("1", rangeOver(root, "The 🌞 sun boosts"));
    app.highlightSelection("1", rangeOver(root, "🌞 sun boosts panel output in summer"));
    expect(app.drafts.get("1")?.spans).toHaveLength(1);
    const merged = app.drafts.get("1")!.spans[0]!;
    const expectedFirst = "The 🌞 sun boosts panel output in summer";
    expect(sliceByCodePoints(RESPONSE_TEXT, merged.start, merged.end)).toBe(expectedFirst);
    // the emoji is astral: code-point end must differ from the UTF-16 end
    expect(merged.end).toBe(RESPONSE_TEXT.indexOf(expectedFirst) + expectedFirst.length - 1);

    const maintenance = "Maintenance is mostly rinsing dust off";
    app.highlightSelection("2", rangeOver(root, maintenance));
    app.setPresence("3", false);

    await app.submit();
    // single task, so after a successful submit the annotator is done
    expect(root.querySelector(".banner.done")).not.toBeNull();

    // the service's append-only store now holds the annotation; apply the
    // stored code-point offsets back to the response text
    const events = readFileSync(storePath, "utf-8")
      .split("\n")
      .filter((line) => line.trim())
      .map((line) => JSON.parse(line) as { type: string; annotation?: any });
    const stored = events.find(
      (event) =>
        event.type === "annotation" &&
        event.annotation.annotator_id === "e2e-annotator",
    )?.annotation;
    expect(stored).toBeDefined();
    expect(stored.task_id).toBe(TASK.task_id);

    const spans1 = stored.judgments["1"].evidence as Array<[number, number]>;
    expect(spans1).toHaveLength(1);
    expect(sliceByCodePoints(RESPONSE_TEXT, spans1[0]![0], spans1[0]![1])).toBe(expectedFirst);

    const spans2 = stored.judgments["2"].evidence as Array<[number, number]>;
    expect(spans2).toHaveLength(1);
    expect(sliceByCodePoints(RESPONSE_TEXT, spans2[0]![0], spans2[0]![1])).toBe(maintenance);

    expect(stored.judgments["3"]).toEqual({ present: false, evidence: [] });
  });

  it("blocks present-without-evidence client-side before any request", async () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    const app = new AnnotatorApp(root, new ApiClient(BASE), "second-annotator");
    await app.fetchAndRenderTask();
    app.setPresence("1", true); // no evidence highlighted
    app.setPresence("2", false);
    app.setPresence("3", false);
    await app.submit();
    expect(root.querySelector(".validation-error")?.textContent).toContain(
      "at least one highlighted passage",
    );
    // nothing reached the service for this annotator
    const events = readFileSync(storePath, "utf-8")
      .split("\n")
      .filter((line) => line.trim())
      .map((line) => JSON.parse(line) as { type: string; annotation?: any });
    expect(
      events.some(
        (event) =>
          event.type === "annotation" &&
          event.annotation.annotator_id === "second-annotator",
      ),
    ).toBe(false);
  });

  it("treats a duplicate submission as terminal for the task", async () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    // same annotator id as the first test, same task, different judgments
    const app = new AnnotatorApp(root, new ApiClient(BASE), "e2e-annotator");
    app.task = JSON.parse(JSON.stringify(TASK));
    app.responseText = RESPONSE_TEXT;
    app.drafts = new Map(
      TASK.aspects.aspects.map((aspect) => [
        aspect.id,
        { present: false as boolean | null, spans: [] },
      ]),
    );
    app.render();
    await app.submit();
    expect(root.querySelector(".status")?.textContent).toContain("already submitted");
    expect((root.querySelector(".submit") as HTMLButtonElement).disabled).toBe(true);
  });
});
