/**
 * Offset-exact segmentation of field text into highlighted runs.
 *
 * The service emits diff spans with character offsets: removed spans point
 * into the original text, added and incorrect_attribute spans into the
 * synthetic text.  Rendering slices the pane's own text by those offsets,
 * so the highlighted substrings are the span texts by construction, and a
 * task whose offsets disagree with its text fails loudly instead of
 * drawing highlights in the wrong place.
 */

import type { DiffSpan, SpanKind } from "./types.js";

export type Pane = "original" | "synthetic";

export interface Segment {
  text: string;
  /** null for unhighlighted runs between spans. */
  kind: SpanKind | null;
}

const PANE_KINDS: Record<Pane, ReadonlySet<SpanKind>> = {
  original: new Set(["removed"]),
  synthetic: new Set(["added", "incorrect_attribute"]),
};

/** Spans that belong to one pane of one field, in document order. */
export function spansForPane(diff: DiffSpan[], field: string, pane: Pane): DiffSpan[] {
  return diff
    .filter((s) => s.field === field && PANE_KINDS[pane].has(s.kind))
    .sort((a, b) => a.begin - b.begin || a.end - b.end);
}

/**
 * Split `text` into alternating plain and highlighted segments.
 * Concatenating the segments reproduces `text` exactly.
 */
export function segmentField(text: string, spans: DiffSpan[]): Segment[] {
  const ordered = [...spans].sort((a, b) => a.begin - b.begin || a.end - b.end);
  const segments: Segment[] = [];
  let cursor = 0;
  for (const span of ordered) {
    if (span.begin < cursor) {
      throw new Error(`overlapping spans at offset ${span.begin}`);
    }
    if (span.end > text.length || span.begin >= span.end) {
      throw new Error(`span [${span.begin}, ${span.end}) outside text of length ${text.length}`);
    }
    const slice = text.slice(span.begin, span.end);
    if (slice !== span.text) {
      throw new Error(`span text mismatch at [${span.begin}, ${span.end}): ` +
        `expected ${JSON.stringify(span.text)}, text has ${JSON.stringify(slice)}`);
    }
    if (span.begin > cursor) {
      segments.push({ text: text.slice(cursor, span.begin), kind: null });
    }
    segments.push({ text: slice, kind: span.kind });
    cursor = span.end;
  }
  if (cursor < text.length) {
    segments.push({ text: text.slice(cursor), kind: null });
  }
  return segments;
}

/** Highlighted runs only, in order; useful for verifying offset-exactness. */
export function highlightedTexts(segments: Segment[]): string[] {
  return segments.filter((s) => s.kind !== null).map((s) => s.text);
}

/** Field names present on either side, in a stable reviewer-friendly order. */
export function fieldOrder(
  original: Record<string, string>,
  synthetic: Record<string, string>,
): string[] {
  const preferred = ["title", "brand", "description", "features"];
  const seen = new Set([...Object.keys(original), ...Object.keys(synthetic)]);
  const ordered = preferred.filter((f) => seen.has(f));
  for (const name of [...seen].sort()) {
    if (!ordered.includes(name)) {
      ordered.push(name);
    }
  }
  return ordered;
}
