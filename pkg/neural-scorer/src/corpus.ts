import { readFileSync } from "fs";

import { Rng } from "./rng";

export class EmptyCorpusError extends Error {
  constructor(detail: string) {
    super(`empty corpus: ${detail}`);
    this.name = "EmptyCorpusError";
  }
}

const DETERMINERS = ["the", "a"];
const ADJECTIVES = ["small", "old", "quiet", "bright"];
const NOUNS = ["cat", "dog", "bird", "boat", "river", "song", "door"];
const VERBS = ["sees", "hears", "follows", "finds", "opens"];
const PREPOSITIONS = ["near", "by", "behind"];

/**
 * Seeded sentences from a tiny closed grammar:
 * NP VERB NP, optionally followed by PREP NP, where NP = DET [ADJ] NOUN.
 * Small vocabulary on purpose so a toy model can actually learn it.
 */
export function syntheticCorpus(count: number, seed: number): string[][] {
  const rng = new Rng(seed);
  const nounPhrase = (): string[] => {
    const determiner = rng.pick(DETERMINERS);
    const noun = rng.pick(NOUNS);
    return rng.next() < 0.4 ? [determiner, rng.pick(ADJECTIVES), noun] : [determiner, noun];
  };
  const sentences: string[][] = [];
  for (let i = 0; i < count; i++) {
    const sentence = [...nounPhrase(), rng.pick(VERBS), ...nounPhrase()];
    if (rng.next() < 0.35) sentence.push(rng.pick(PREPOSITIONS), ...nounPhrase());
    sentences.push(sentence);
  }
  return sentences;
}

/** One whitespace-separated sentence per line; blank lines are skipped. */
export function loadCorpus(path: string): string[][] {
  const sentences = readFileSync(path, "utf-8")
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0)
    .map((line) => line.split(/\s+/));
  if (sentences.length === 0) throw new EmptyCorpusError(path);
  return sentences;
}
