/**
 * The annotator's single-page workflow: fetch a task, decide each aspect
 * (present / absent), highlight evidence passages for present aspects,
 * submit, repeat until the pool is exhausted.
 *
 * The served response text is the single source of truth for offsets: it
 * is kept verbatim in `this.responseText`, rendered as text nodes (plus
 * <mark> wrappers for highlights, which never alter the text), and every
 * submitted span is a code-point range into that exact string.
 */

import { ApiClient } from "./api.js";
import { mergeSpans, rangeToSpan, utf16Index } from "./offsets.js";
import type { Span, TaskPayload } from "./types.js";

interface AspectDraft {
  present: boolean | null;
  spans: Span[];
}

const PALETTE_SIZE = 8;

export class AnnotatorApp {
  task: TaskPayload | null = null;
  responseText = "";
  drafts = new Map<string, AspectDraft>();
  selectedAspect: string | null = null;
  validationErrors = new Map<string, string>();
  statusMessage = "";
  terminal = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly annotatorId: string,
  ) {}

  // -- task lifecycle -----------------------------------------------------

  async fetchAndRenderTask(): Promise<void> {
    this.renderMessage("Loading next task…");
    let task: TaskPayload | null;
    try {
      task = await this.api.nextTask(this.annotatorId);
    } catch (error) {
      this.renderRetryBanner(String(error));
      return;
    }
    if (task === null) {
      this.task = null;
      this.renderMessage("No tasks remaining. Thank you!", "done");
      return;
    }
    this.task = task;
    this.responseText = task.response_text;
    this.drafts = new Map(
      task.aspects.aspects.map((aspect) => [
        aspect.id,
        { present: null, spans: [] } as AspectDraft,
      ]),
    );
    this.selectedAspect = task.aspects.aspects[0]?.id ?? null;
    this.validationErrors.clear();
    this.statusMessage = "";
    this.terminal = false;
    this.render();
  }

  // -- draft edits ----------------------------------------------------------

  setPresence(aspectId: string, present: boolean): void {
    const draft = this.drafts.get(aspectId);
    if (!draft) return;
    draft.present = present;
    this.validationErrors.delete(aspectId);
    this.render();
  }

  /**
   * Convert the current (or given) selection into an evidence span for the
   * aspect. Selections outside the response text and collapsed selections
   * are ignored; overlapping spans for one aspect merge into one.
   */
  highlightSelection(aspectId: string, range?: Range): void {
    const draft = this.drafts.get(aspectId);
    if (!draft) return;
    const container = this.root.querySelector<HTMLElement>(".response-text");
    if (!container) return;
    const active = range ?? window.getSelection()?.getRangeAt(0);
    if (!active) return;
    const span = rangeToSpan(container, this.responseText, active);
    if (span === null) return;
    draft.spans = mergeSpans([...draft.spans, span]);
    draft.present = true; // highlighting evidence is an explicit present vote
    this.validationErrors.delete(aspectId);
    this.render();
  }

  removeSpan(aspectId: string, index: number): void {
    const draft = this.drafts.get(aspectId);
    if (!draft) return;
    draft.spans.splice(index, 1);
    this.render();
  }

  // -- submission -----------------------------------------------------------

  /** Per-aspect validation errors; empty map means the draft is submittable. */
  validate(): Map<string, string> {
    const errors = new Map<string, string>();
    if (!this.task) return errors;
    for (const aspect of this.task.aspects.aspects) {
      const draft = this.drafts.get(aspect.id);
      if (!draft || draft.present === null) {
        errors.set(aspect.id, "decide present or absent");
      } else if (draft.present && draft.spans.length === 0) {
        errors.set(aspect.id, "present needs at least one highlighted passage");
      }
    }
    return errors;
  }

  async submit(): Promise<void> {
    if (!this.task) return;
    this.validationErrors = this.validate();
    if (this.validationErrors.size > 0) {
      this.statusMessage = "Fix the marked aspects before submitting.";
      this.render();
      return;
    }
    const judgments: Record<string, { present: boolean; evidence: Span[] }> = {};
    for (const [aspectId, draft] of this.drafts) {
      judgments[aspectId] = {
        present: draft.present === true,
        evidence: draft.present ? draft.spans : [],
      };
    }
    const result = await this.api.submitAnnotation({
      task_id: this.task.task_id,
      annotator_id: this.annotatorId,
      judgments,
    });
    if (result.ok) {
      await this.fetchAndRenderTask();
      return;
    }
    if (result.status === 409) {
      this.terminal = true;
      this.statusMessage =
        "This task was already submitted under your annotator id; it cannot be changed.";
    } else {
      this.statusMessage = `Rejected (${result.error.error_code}): ${result.error.detail}`;
    }
    this.render();
  }

  // -- rendering ------------------------------------------------------------

  private renderMessage(text: string, cls = "info"): void {
    this.root.innerHTML = "";
    const banner = document.createElement("div");
    banner.className = `banner ${cls}`;
    banner.textContent = text;
    this.root.appendChild(banner);
  }

  private renderRetryBanner(detail: string): void {
    this.root.innerHTML = "";
    const banner = document.createElement("div");
    banner.className = "banner error";
    banner.textContent = `Could not reach the annotation service (${detail}). `;
    const retry = document.createElement("button");
    retry.className = "retry";
    retry.textContent = "Retry";
    retry.addEventListener("click", () => void this.fetchAndRenderTask());
    banner.appendChild(retry);
    this.root.appendChild(banner);
  }

  render(): void {
    const task = this.task;
    if (!task) return;
    this.root.innerHTML = "";

    const header = document.createElement("header");
    const guidelines = document.createElement("a");
    guidelines.href = this.api.guidelinesUrl();
    guidelines.target = "_blank";
    guidelines.textContent = "Annotation guidelines";
    guidelines.className = "guidelines-link";
    const who = document.createElement("span");
    who.className = "annotator";
    who.textContent = `annotator: ${this.annotatorId}`;
    header.append(guidelines, who);

    const query = document.createElement("section");
    query.className = "query";
    const queryLabel = document.createElement("h2");
    queryLabel.textContent = "Query";
    const queryText = document.createElement("p");
    queryText.className = "query-text";
    queryText.textContent = task.query_text;
    query.append(queryLabel, queryText);

    const aspects = document.createElement("section");
    aspects.className = "aspects";
    const aspectsLabel = document.createElement("h2");
    aspectsLabel.textContent = "Aspects";
    aspects.appendChild(aspectsLabel);
    task.aspects.aspects.forEach((aspect, index) => {
      aspects.appendChild(this.renderAspectRow(aspect.id, aspect.text, index));
    });

    const response = document.createElement("section");
    response.className = "response";
    const responseLabel = document.createElement("h2");
    responseLabel.textContent = "Response";
    const hint = document.createElement("p");
    hint.className = "hint";
    hint.textContent =
      "Select a passage in the response, then press “highlight” on the aspect it supports.";
    const responseTextEl = document.createElement("div");
    responseTextEl.className = "response-text";
    this.renderResponseContent(responseTextEl);
    response.append(responseLabel, hint, responseTextEl);

    const footer = document.createElement("footer");
    const submitButton = document.createElement("button");
    submitButton.className = "submit";
    submitButton.textContent = "Submit and fetch next";
    submitButton.disabled = this.terminal;
    submitButton.addEventListener("click", () => void this.submit());
    const status = document.createElement("span");
    status.className = "status";
    status.textContent = this.statusMessage;
    footer.append(submitButton, status);
    if (this.terminal) {
      const next = document.createElement("button");
      next.className = "next-task";
      next.textContent = "Continue to next task";
      next.addEventListener("click", () => void this.fetchAndRenderTask());
      footer.appendChild(next);
    }

    this.root.append(header, query, aspects, response, footer);
  }

  private renderAspectRow(aspectId: string, text: string, index: number): HTMLElement {
    const draft = this.drafts.get(aspectId) as AspectDraft;
    const row = document.createElement("div");
    row.className = `aspect palette-${index % PALETTE_SIZE}`;
    row.dataset.aspectId = aspectId;

    const label = document.createElement("span");
    label.className = "aspect-label";
    label.textContent = `${aspectId}. ${text}`;

    const presentButton = document.createElement("button");
    presentButton.className = "mark-present";
    presentButton.textContent = "present";
    presentButton.dataset.active = String(draft.present === true);
    presentButton.addEventListener("click", () => this.setPresence(aspectId, true));

    const absentButton = document.createElement("button");
    absentButton.className = "mark-absent";
    absentButton.textContent = "absent";
    absentButton.dataset.active = String(draft.present === false);
    absentButton.addEventListener("click", () => this.setPresence(aspectId, false));

    const highlightButton = document.createElement("button");
    highlightButton.className = "add-highlight";
    highlightButton.textContent = "highlight selection";
    highlightButton.addEventListener("click", () => this.highlightSelection(aspectId));

    row.append(label, presentButton, absentButton, highlightButton);

    draft.spans.forEach((span, spanIndex) => {
      const chip = document.createElement("button");
      chip.className = "span-chip";
      chip.title = "click to remove";
      chip.textContent = `[${span.start}, ${span.end})`;
      chip.addEventListener("click", () => this.removeSpan(aspectId, spanIndex));
      row.appendChild(chip);
    });

    const error = this.validationErrors.get(aspectId);
    if (error) {
      const message = document.createElement("span");
      message.className = "validation-error";
      message.textContent = error;
      row.appendChild(message);
    }
    return row;
  }

  /**
   * Render the canonical text as alternating text nodes and <mark> wrappers.
   * Boundaries come from every draft span (converted back to UTF-16); the
   * concatenated text content always equals the canonical string.
   */
  private renderResponseContent(container: HTMLElement): void {
    const text = this.responseText;
    const boundaries = new Set<number>([0, text.length]);
    const aspectIndex = new Map<string, number>();
    this.task?.aspects.aspects.forEach((aspect, index) =>
      aspectIndex.set(aspect.id, index),
    );
    const covers: Array<{ lo: number; hi: number; aspectId: string }> = [];
    for (const [aspectId, draft] of this.drafts) {
      for (const span of draft.spans) {
        const lo = utf16Index(text, span.start);
        const hi = utf16Index(text, span.end);
        boundaries.add(lo);
        boundaries.add(hi);
        covers.push({ lo, hi, aspectId });
      }
    }
    const points = [...boundaries].sort((a, b) => a - b);
    for (let i = 0; i + 1 < points.length; i += 1) {
      const lo = points[i] as number;
      const hi = points[i + 1] as number;
      const segment = text.slice(lo, hi);
      const covering = covers.filter((c) => c.lo <= lo && hi <= c.hi);
      if (covering.length === 0) {
        container.appendChild(document.createTextNode(segment));
      } else {
        const mark = document.createElement("mark");
        mark.className = covering
          .map((c) => `hl-${(aspectIndex.get(c.aspectId) ?? 0) % PALETTE_SIZE}`)
          .join(" ");
        mark.dataset.aspects = covering.map((c) => c.aspectId).join(",");
        mark.textContent = segment;
        container.appendChild(mark);
      }
    }
  }
}
