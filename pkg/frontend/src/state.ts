/** Pure derivations from the server view; all rendering decisions that can
 * be unit-tested without a DOM live here.
 *
 * Highlights derive exclusively from server-returned spans. Orphaned
 * threads never get a highlight, only a badge on their card.
 */

import { sliceByScalars } from "./text.js";
import type { SessionView, Span, ThreadJson } from "./types.js";

export interface Highlight {
  threadId: string;
  span: Span;
}

export interface BackdropSegment {
  text: string;
  threadId: string | null;
}

export function liveHighlights(view: SessionView): Highlight[] {
  const spans: Highlight[] = [];
  for (const thread of view.threads) {
    if (thread.state === "orphaned" || thread.anchor.status === "orphaned") continue;
    if (!thread.anchor.span) continue;
    spans.push({ threadId: thread.thread_id, span: thread.anchor.span });
  }
  spans.sort((a, b) => a.span.start - b.span.start || a.span.end - b.span.end);
  // overlapping anchors are legal server-side; the flat backdrop renders
  // the first of an overlapping pair and the card still links the rest
  const flat: Highlight[] = [];
  let cursor = 0;
  for (const h of spans) {
    if (h.span.start >= cursor) {
      flat.push(h);
      cursor = h.span.end;
    }
  }
  return flat;
}

export function backdropSegments(view: SessionView): BackdropSegment[] {
  const segments: BackdropSegment[] = [];
  let cursor = 0;
  for (const h of liveHighlights(view)) {
    if (h.span.start > cursor) {
      segments.push({
        text: sliceByScalars(view.text, { start: cursor, end: h.span.start }),
        threadId: null,
      });
    }
    segments.push({ text: sliceByScalars(view.text, h.span), threadId: h.threadId });
    cursor = h.span.end;
  }
  const tailStart = cursor;
  const tail = sliceByScalars(view.text, { start: tailStart, end: Number.MAX_SAFE_INTEGER });
  if (tail.length > 0) segments.push({ text: tail, threadId: null });
  return segments;
}

export function threadById(view: SessionView, threadId: string): ThreadJson | undefined {
  return view.threads.find((t) => t.thread_id === threadId);
}

export function lastAiComment(thread: ThreadJson): string {
  for (let i = thread.messages.length - 1; i >= 0; i -= 1) {
    const message = thread.messages[i];
    if (message && message.author === "ai") return message.text;
  }
  return "";
}

export function statusLabel(thread: ThreadJson): string {
  return thread.state === "orphaned" ? "orphaned" : thread.anchor.status;
}
