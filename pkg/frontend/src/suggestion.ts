/** Pull a concrete replacement out of a comment's wording.
 *
 * Comments often carry their suggestion in quotes ("write 'more'").
 * The last quoted fragment wins; without one the anchor text is offered
 * so the user edits it in place.
 */

const QUOTED = /['"‘’“”]([^'"‘’“”]+)['"‘’“”]/g;

export function extractSuggestion(comment: string, anchorText: string): string {
  let last: string | null = null;
  for (const match of comment.matchAll(QUOTED)) {
    const candidate = match[1];
    if (candidate !== undefined && candidate.trim().length > 0) {
      last = candidate;
    }
  }
  return last ?? anchorText;
}
