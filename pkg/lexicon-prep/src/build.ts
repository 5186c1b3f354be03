import * as fs from "node:fs";

import { Vocab } from "./vocab.js";
import { tokenize } from "./tokenize.js";

/** Output lines are ordered by vocabulary id and candidate lists by candidate
 * id, so every builder is byte-stable for fixed inputs. */

function readLines(path: string, what: string): string[] {
  if (!fs.existsSync(path)) {
    throw new Error(
      `${what} source not found: ${path}\n` +
      `the pinned source data ships in lexicon-prep/data/`,
    );
  }
  return fs.readFileSync(path, "utf-8").split("\n").filter((l) => l.length > 0);
}

function candidateLine(vocab: Vocab, wordId: number, ids: Set<number>): string {
  const sorted = [...ids].sort((a, b) => a - b);
  return `${vocab.words[wordId]}\t${sorted.map((i) => vocab.words[i]).join(",")}`;
}

/** Synonym table from synset membership: `pos<TAB>lemma1,lemma2,...` lines.
 * Every vocabulary word gets a line; candidates outside the vocabulary or
 * under the frequency floor are dropped, the word itself is always kept. */
export function buildSynonyms(vocab: Vocab, synsetPath: string, minFreq: number): string {
  const synsets: string[][] = readLines(synsetPath, "synset").map((line, i) => {
    const parts = line.split("\t");
    if (parts.length !== 2) throw new Error(`${synsetPath}:${i + 1}: expected 'pos<TAB>members'`);
    return parts[1].split(",");
  });
  const out: string[] = [];
  vocab.words.forEach((word, wid) => {
    const ids = new Set<number>([wid]);
    for (const members of synsets) {
      if (!members.includes(word)) continue;
      for (const m of members) {
        if (m === word) continue;
        const mid = vocab.idOf.get(m);
        if (mid !== undefined && (vocab.freq.get(m) ?? 0) >= minFreq) ids.add(mid);
      }
    }
    out.push(candidateLine(vocab, wid, ids));
  });
  return out.join("\n") + "\n";
}

/** Paraphrase-pair table: `word<TAB>equivalent` lines, symmetrized. */
export function buildPpdb(vocab: Vocab, pairPath: string, minFreq: number): string {
  const neighbors = new Map<string, Set<string>>();
  readLines(pairPath, "paraphrase-pair").forEach((line, i) => {
    const parts = line.split("\t");
    if (parts.length !== 2) throw new Error(`${pairPath}:${i + 1}: expected 'word<TAB>word'`);
    const [a, b] = parts;
    if (!neighbors.has(a)) neighbors.set(a, new Set());
    if (!neighbors.has(b)) neighbors.set(b, new Set());
    neighbors.get(a)!.add(b);
    neighbors.get(b)!.add(a);
  });
  const out: string[] = [];
  vocab.words.forEach((word, wid) => {
    const ids = new Set<number>([wid]);
    for (const m of neighbors.get(word) ?? []) {
      const mid = vocab.idOf.get(m);
      if (mid !== undefined && (vocab.freq.get(m) ?? 0) >= minFreq) ids.add(mid);
    }
    out.push(candidateLine(vocab, wid, ids));
  });
  return out.join("\n") + "\n";
}

/** Antonym table from `pos<TAB>word<TAB>antonym` pairs. Adjective/verb rows
 * only; the first pair in file order wins; entries whose antonym (or the
 * negation word itself) is out of vocabulary are dropped. */
export function buildAntonyms(vocab: Vocab, pairPath: string): string {
  const firstPair = new Map<string, string>();
  readLines(pairPath, "antonym-pair").forEach((line, i) => {
    const parts = line.split("\t");
    if (parts.length !== 3) {
      throw new Error(`${pairPath}:${i + 1}: expected 'pos<TAB>word<TAB>antonym'`);
    }
    const [pos, word, ant] = parts;
    if (pos !== "adj" && pos !== "verb") return;
    if (!firstPair.has(word)) firstPair.set(word, ant);
  });
  const out: string[] = [];
  vocab.words.forEach((word) => {
    const ant = firstPair.get(word);
    if (ant === undefined) return;
    if (!vocab.idOf.has(ant) || !vocab.idOf.has("not")) return;
    out.push(`${word}\tnot ${ant}`);
  });
  return out.join("\n") + "\n";
}

export interface ParaphraseResult {
  text: string;
  kept: number;
  skippedEmpty: number;
  duplicates: number;
  malformed: number;
}

/** Paraphrase table from raw `doc_id<TAB>text` round-trip translations:
 * tokenized, out-of-vocabulary words dropped, empty results skipped with a
 * warning count, duplicate ids last-wins, rows sorted by document id. */
export function packageParaphrases(vocab: Vocab, translationPath: string): ParaphraseResult {
  const table = new Map<number, string>();
  let skippedEmpty = 0;
  let duplicates = 0;
  let malformed = 0;
  readLines(translationPath, "translation").forEach((line) => {
    const tab = line.indexOf("\t");
    const docId = tab < 0 ? NaN : Number(line.slice(0, tab));
    if (!Number.isInteger(docId)) {
      malformed++;
      return;
    }
    const tokens = tokenize(line.slice(tab + 1)).filter((t) => vocab.idOf.has(t));
    if (tokens.length === 0) {
      skippedEmpty++;
      return;
    }
    if (table.has(docId)) duplicates++;
    table.set(docId, tokens.join(" "));
  });
  const ids = [...table.keys()].sort((a, b) => a - b);
  const text = ids.map((id) => `${id}\t${table.get(id)}`).join("\n") + "\n";
  return { text, kept: ids.length, skippedEmpty, duplicates, malformed };
}
