/** Tokenizer matching the embedding pipeline: lowercase, split on whitespace,
 * strip leading/trailing Unicode punctuation, drop tokens that vanish. */

const PUNCT = /\p{P}/u;

export function stripEdgePunctuation(token: string): string {
  let start = 0;
  let end = token.length;
  while (start < end && PUNCT.test(token[start])) start++;
  while (end > start && PUNCT.test(token[end - 1])) end--;
  return token.slice(start, end);
}

export function tokenize(text: string): string[] {
  const out: string[] = [];
  for (const raw of text.toLowerCase().split(/\s+/)) {
    if (!raw) continue;
    const tok = stripEdgePunctuation(raw);
    if (tok) out.push(tok);
  }
  return out;
}
