/**
 * Span arithmetic between the DOM and the canonical response string.
 *
 * The service stores evidence spans as *code-point* offsets into the exact
 * response text it served. JavaScript string indices are UTF-16 code units,
 * so astral characters (emoji, many CJK extensions) occupy two units; every
 * offset that leaves the browser is converted to code points here, and the
 * conversion is exercised round-trip in the tests.
 *
 * DOM selections are resolved against the concatenation of the text nodes
 * inside the response container, in document order. Highlight rendering
 * wraps segments in <mark> elements but never inserts or removes text, so
 * that concatenation always equals the canonical string and offsets are
 * independent of how the text is currently wrapped.
 */

import type { Span } from "./types.js";

/** Convert a UTF-16 code-unit index to a code-point index. */
export function codePointIndex(text: string, utf16Index: number): number {
  let points = 0;
  let units = 0;
  for (const ch of text) {
    if (units >= utf16Index) break;
    units += ch.length;
    points += 1;
  }
  return points;
}

/** Convert a code-point index back to a UTF-16 code-unit index. */
export function utf16Index(text: string, pointIndex: number): number {
  let units = 0;
  let points = 0;
  for (const ch of text) {
    if (points >= pointIndex) break;
    units += ch.length;
    points += 1;
  }
  return units;
}

/** Slice by code points, matching how the service applies stored offsets. */
export function sliceByCodePoints(text: string, start: number, end: number): string {
  return Array.from(text).slice(start, end).join("");
}

/**
 * UTF-16 offset of (node, offsetInNode) within the concatenated text nodes
 * of `container`, or null when the position is outside the container.
 */
export function utf16OffsetWithin(
  container: Node,
  node: Node,
  offsetInNode: number,
): number | null {
  let seen = 0;
  const walk = (current: Node): number | null => {
    if (current.nodeType === Node.TEXT_NODE) {
      if (current === node) {
        return seen + offsetInNode;
      }
      seen += (current.textContent ?? "").length;
      return null;
    }
    // an element boundary position (node, childIndex) counts the text of
    // the first childIndex children
    if (current === node) {
      let within = 0;
      for (let i = 0; i < offsetInNode; i += 1) {
        within += (current.childNodes[i]?.textContent ?? "").length;
      }
      return seen + within;
    }
    for (const child of Array.from(current.childNodes)) {
      const found = walk(child);
      if (found !== null) {
        return found;
      }
    }
    return null;
  };
  return walk(container);
}

/**
 * Resolve a DOM Range to a code-point span against the canonical text.
 * Returns null for collapsed selections or selections outside the container.
 */
export function rangeToSpan(
  container: HTMLElement,
  canonicalText: string,
  range: Range,
): Span | null {
  const startUnits = utf16OffsetWithin(container, range.startContainer, range.startOffset);
  const endUnits = utf16OffsetWithin(container, range.endContainer, range.endOffset);
  if (startUnits === null || endUnits === null) {
    return null;
  }
  const lo = Math.min(startUnits, endUnits);
  const hi = Math.max(startUnits, endUnits);
  if (lo === hi) {
    return null;
  }
  const start = codePointIndex(canonicalText, lo);
  const end = codePointIndex(canonicalText, hi);
  return start < end ? { start, end } : null;
}

/** Union overlapping or touching spans; result is sorted and disjoint. */
export function mergeSpans(spans: Span[]): Span[] {
  if (spans.length === 0) {
    return [];
  }
  const sorted = [...spans].sort((a, b) => a.start - b.start || a.end - b.end);
  const merged: Span[] = [{ ...(sorted[0] as Span) }];
  for (const span of sorted.slice(1)) {
    const last = merged[merged.length - 1] as Span;
    if (span.start <= last.end) {
      last.end = Math.max(last.end, span.end);
    } else {
      merged.push({ ...span });
    }
  }
  return merged;
}
