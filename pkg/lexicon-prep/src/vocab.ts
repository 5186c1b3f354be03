import * as fs from "node:fs";

/** Corpus vocabulary: line format `word<TAB>frequency`, ordered by word id. */
export interface Vocab {
  words: string[];
  freq: Map<string, number>;
  idOf: Map<string, number>;
}

export function loadVocab(path: string): Vocab {
  if (!fs.existsSync(path)) {
    throw new Error(
      `vocabulary file not found: ${path}\n` +
      `generate one with the embedding CLI: docembed build-vocab --corpus <file> --out <path>`,
    );
  }
  const words: string[] = [];
  const freq = new Map<string, number>();
  const idOf = new Map<string, number>();
  const lines = fs.readFileSync(path, "utf-8").split("\n");
  lines.forEach((line, i) => {
    if (!line) return;
    const parts = line.split("\t");
    if (parts.length !== 2) {
      throw new Error(`${path}:${i + 1}: expected 'word<TAB>frequency'`);
    }
    const count = Number(parts[1]);
    if (!Number.isFinite(count)) {
      throw new Error(`${path}:${i + 1}: bad frequency ${parts[1]}`);
    }
    idOf.set(parts[0], words.length);
    words.push(parts[0]);
    freq.set(parts[0], count);
  });
  if (words.length === 0) throw new Error(`${path}: empty vocabulary`);
  return { words, freq, idOf };
}
