/** Offset conversions between server coordinates and JS strings.
 *
 * The service counts Unicode scalar values; JS string indices are UTF-16
 * code units, so astral characters (emoji etc.) occupy two units. All
 * span arithmetic in the UI therefore runs over code points and converts
 * at the DOM boundary.
 */

import type { EditPayload, Span } from "./types.js";

export function codePoints(text: string): string[] {
  return Array.from(text);
}

/** Code-unit index of the given scalar offset. */
export function scalarToUnit(text: string, scalar: number): number {
  let units = 0;
  let count = 0;
  for (const cp of text) {
    if (count >= scalar) break;
    units += cp.length;
    count += 1;
  }
  return units;
}

/** Scalar offset of the given code-unit index (rounds into the char). */
export function unitToScalar(text: string, unit: number): number {
  let units = 0;
  let count = 0;
  for (const cp of text) {
    if (units >= unit) break;
    units += cp.length;
    count += 1;
  }
  return count;
}

export function sliceByScalars(text: string, span: Span): string {
  return codePoints(text).slice(span.start, span.end).join("");
}

export function scalarLength(text: string): number {
  return codePoints(text).length;
}

/** Single-splice diff between two texts, in scalar coordinates.
 *
 * The textarea is the only mutation source, so one contiguous splice per
 * sync is always sufficient: everything the user did between syncs is
 * captured by trimming the common prefix and suffix.
 */
export function computeEdits(oldText: string, newText: string): EditPayload[] {
  if (oldText === newText) return [];
  const a = codePoints(oldText);
  const b = codePoints(newText);
  let prefix = 0;
  const maxPrefix = Math.min(a.length, b.length);
  while (prefix < maxPrefix && a[prefix] === b[prefix]) prefix += 1;
  let suffix = 0;
  while (
    suffix < maxPrefix - prefix &&
    a[a.length - 1 - suffix] === b[b.length - 1 - suffix]
  ) {
    suffix += 1;
  }
  const at: Span = { start: prefix, end: a.length - suffix };
  const newTextSlice = b.slice(prefix, b.length - suffix).join("");
  const kind =
    at.start === at.end ? "insert" : newTextSlice === "" ? "delete" : "replace";
  return [{ kind, at, new_text: newTextSlice }];
}

/** Splice an edit into a text (scalar coordinates), for optimistic UI. */
export function applyEdit(text: string, edit: EditPayload): string {
  const points = codePoints(text);
  return (
    points.slice(0, edit.at.start).join("") +
    edit.new_text +
    points.slice(edit.at.end).join("")
  );
}
