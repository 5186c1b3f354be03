#!/usr/bin/env node
/** Build one augmentation lexicon file.
 *
 * Usage:
 *   lexicon-prep --source wordnet       --vocab english_vocab.tsv --out synonyms_wordnet.tsv
 *   lexicon-prep --source ppdb          --vocab english_vocab.tsv --out synonyms_ppdb.tsv
 *   lexicon-prep --source antonym       --vocab english_vocab.tsv --out antonyms.tsv
 *   lexicon-prep --source backtranslation --vocab fixture_vocab.tsv --out paraphrases.tsv
 *
 * --data points at the lexical source file (synsets, pairs, or raw
 * translations); it defaults to the pinned file in lexicon-prep/data/.
 * --min-freq (default 10) drops low-frequency replacement candidates.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { buildAntonyms, buildPpdb, buildSynonyms, packageParaphrases } from "./build.js";
import { loadVocab } from "./vocab.js";

const DATA_DIR = path.join(path.dirname(fileURLToPath(import.meta.url)), "..", "data");

const DEFAULT_DATA: Record<string, string> = {
  wordnet: "synsets_wordnet.tsv",
  ppdb: "ppdb_pairs.tsv",
  antonym: "antonym_pairs.tsv",
  backtranslation: "fixture_translations.tsv",
};

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`bad arguments near ${key}; flags take one value each`);
    }
    out.set(key.slice(2), argv[i + 1]);
  }
  return out;
}

export function main(argv: string[]): number {
  let args: Map<string, string>;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(String(err));
    return 2;
  }
  const source = args.get("source");
  const vocabPath = args.get("vocab");
  const outPath = args.get("out");
  const minFreq = Number(args.get("min-freq") ?? "10");
  if (!source || !vocabPath || !outPath) {
    console.error("usage: lexicon-prep --source <wordnet|ppdb|antonym|backtranslation> " +
      "--vocab <file> --out <file> [--data <file>] [--min-freq N]");
    return 2;
  }
  if (!(source in DEFAULT_DATA)) {
    console.error(`unknown source ${source}`);
    return 2;
  }
  if (!Number.isInteger(minFreq) || minFreq < 1) {
    console.error(`--min-freq must be a positive integer, got ${args.get("min-freq")}`);
    return 2;
  }
  const dataPath = args.get("data") ?? path.join(DATA_DIR, DEFAULT_DATA[source]);

  try {
    const vocab = loadVocab(vocabPath);
    let text: string;
    if (source === "wordnet") {
      text = buildSynonyms(vocab, dataPath, minFreq);
    } else if (source === "ppdb") {
      text = buildPpdb(vocab, dataPath, minFreq);
    } else if (source === "antonym") {
      text = buildAntonyms(vocab, dataPath);
    } else {
      const result = packageParaphrases(vocab, dataPath);
      if (result.skippedEmpty) {
        console.error(`warning: ${result.skippedEmpty} paraphrase(s) empty after ` +
          `out-of-vocabulary filtering, skipped`);
      }
      if (result.duplicates) {
        console.error(`warning: ${result.duplicates} duplicate doc id(s), last entry wins`);
      }
      if (result.malformed) {
        console.error(`warning: ${result.malformed} malformed line(s) ignored`);
      }
      text = result.text;
    }
    fs.writeFileSync(outPath, text);
    console.error(`wrote ${outPath}`);
    return 0;
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
}

if (process.argv[1] && fileURLToPath(import.meta.url) === path.resolve(process.argv[1])) {
  process.exit(main(process.argv.slice(2)));
}
