/** Sentence boundary marker: starts every context and is itself scoreable as "sentence ends here". */
export const BOUNDARY = "</s>";
/** Bucket for words never seen in training; out-of-vocabulary lookups land here. */
export const UNK = "<unk>";

export class Vocab {
  readonly tokens: readonly string[];
  readonly boundaryId: number;
  readonly unkId: number;
  private readonly idByToken: Map<string, number>;

  private constructor(tokens: string[]) {
    this.idByToken = new Map();
    tokens.forEach((token, index) => {
      if (this.idByToken.has(token)) throw new Error(`duplicate token ${JSON.stringify(token)}`);
      this.idByToken.set(token, index);
    });
    const boundaryId = this.idByToken.get(BOUNDARY);
    const unkId = this.idByToken.get(UNK);
    if (boundaryId === undefined || unkId === undefined) {
      throw new Error(`vocabulary must contain ${BOUNDARY} and ${UNK}`);
    }
    this.tokens = tokens;
    this.boundaryId = boundaryId;
    this.unkId = unkId;
  }

  static fromWords(words: Iterable<string>): Vocab {
    const seen = new Set<string>();
    for (const word of words) {
      if (word !== BOUNDARY && word !== UNK) seen.add(word);
    }
    return new Vocab([BOUNDARY, UNK, ...[...seen].sort()]);
  }

  /** Rebuild from a stored token list, e.g. out of a checkpoint. */
  static fromTokens(tokens: readonly string[]): Vocab {
    if (tokens.some((t) => typeof t !== "string")) throw new Error("vocabulary tokens must be strings");
    return new Vocab([...tokens]);
  }

  get size(): number {
    return this.tokens.length;
  }

  /** Token id, with unknown words mapped to the unk bucket. */
  id(word: string): number {
    return this.idByToken.get(word) ?? this.unkId;
  }
}
