/**
 * Toy decoder-only word LM: token embedding + sinusoidal positions, a stack of
 * self-attention blocks with causal masking, and a linear head over the
 * vocabulary. Small enough to train on a laptop corpus in seconds, regular
 * enough to serve normalized next-word log-probabilities.
 */

import { EmptyCorpusError } from "./corpus";
import { Rng } from "./rng";
import {
  Adam,
  Tensor,
  add,
  addConst,
  addRow,
  causalSoftmaxRows,
  clipGradNorm,
  concatCols,
  dropout,
  gatherRows,
  layerNorm,
  matmul,
  matmulTransposeB,
  relu,
  scale,
  sliceCols,
  softmaxCrossEntropy,
} from "./tensor";
import { BOUNDARY, Vocab } from "./vocab";

export interface ToyTransformerConfig {
  layers: number;
  hidden: number;
  heads: number;
  feedforward: number;
  blockSize: number;
  dropout: number;
  learningRate: number;
  epochs: number;
}

export const DEFAULT_CONFIG: ToyTransformerConfig = {
  layers: 2,
  hidden: 64,
  heads: 4,
  feedforward: 256,
  blockSize: 16,
  dropout: 0.1,
  learningRate: 0.003,
  epochs: 4,
};

export function validateConfig(cfg: ToyTransformerConfig): void {
  if (!Number.isInteger(cfg.layers) || cfg.layers < 1) throw new Error("layers must be a positive integer");
  if (!Number.isInteger(cfg.hidden) || cfg.hidden < 1) throw new Error("hidden must be a positive integer");
  if (!Number.isInteger(cfg.heads) || cfg.heads < 1) throw new Error("heads must be a positive integer");
  if (cfg.hidden % cfg.heads !== 0) throw new Error("hidden must be divisible by heads");
  if (!Number.isInteger(cfg.feedforward) || cfg.feedforward < 1) {
    throw new Error("feedforward must be a positive integer");
  }
  if (!Number.isInteger(cfg.blockSize) || cfg.blockSize < 2) {
    throw new Error("block size must be an integer of at least 2");
  }
  if (!Number.isFinite(cfg.dropout) || cfg.dropout < 0 || cfg.dropout >= 1) {
    throw new Error("dropout must lie in [0, 1)");
  }
  if (!Number.isFinite(cfg.learningRate) || cfg.learningRate <= 0) {
    throw new Error("learning rate must be positive");
  }
  if (!Number.isInteger(cfg.epochs) || cfg.epochs < 0) {
    throw new Error("epochs must be a non-negative integer");
  }
}

/**
 * Classic fixed sinusoid table, row per position: even columns sin, odd
 * columns cos, wavelength 10000^(2*floor(i/2)/width).
 */
export function sinusoidalEncoding(positions: number, width: number): Float64Array {
  const table = new Float64Array(positions * width);
  for (let pos = 0; pos < positions; pos++) {
    for (let i = 0; i < width; i++) {
      const angle = pos / Math.pow(10000, (2 * Math.floor(i / 2)) / width);
      table[pos * width + i] = i % 2 === 0 ? Math.sin(angle) : Math.cos(angle);
    }
  }
  return table;
}

interface Block {
  wq: Tensor;
  wk: Tensor;
  wv: Tensor;
  wo: Tensor;
  bq: Tensor;
  bk: Tensor;
  bv: Tensor;
  bo: Tensor;
  norm1Gain: Tensor;
  norm1Bias: Tensor;
  up: Tensor;
  upBias: Tensor;
  down: Tensor;
  downBias: Tensor;
  norm2Gain: Tensor;
  norm2Bias: Tensor;
}

const INIT_STD = 0.08;
const CHECKPOINT_FORMAT = "toy-transformer v1";

interface StoredTensor {
  rows: number;
  cols: number;
  data: number[];
}

export interface Checkpoint {
  format: string;
  config: ToyTransformerConfig;
  vocab: string[];
  weights: Record<string, StoredTensor>;
}

export class TransformerLm {
  readonly cfg: ToyTransformerConfig;
  readonly vocab: Vocab;
  private readonly embedding: Tensor;
  private readonly blocks: Block[];
  private readonly headWeight: Tensor;
  private readonly headBias: Tensor;
  private readonly positional: Float64Array;

  constructor(cfg: ToyTransformerConfig, vocab: Vocab, rng: Rng = new Rng(7)) {
    validateConfig(cfg);
    this.cfg = { ...cfg };
    this.vocab = vocab;
    const h = cfg.hidden;
    this.embedding = Tensor.randn(vocab.size, h, rng, INIT_STD);
    this.blocks = [];
    for (let i = 0; i < cfg.layers; i++) {
      this.blocks.push({
        wq: Tensor.randn(h, h, rng, INIT_STD),
        wk: Tensor.randn(h, h, rng, INIT_STD),
        wv: Tensor.randn(h, h, rng, INIT_STD),
        wo: Tensor.randn(h, h, rng, INIT_STD),
        bq: new Tensor(1, h),
        bk: new Tensor(1, h),
        bv: new Tensor(1, h),
        bo: new Tensor(1, h),
        norm1Gain: Tensor.full(1, h, 1),
        norm1Bias: new Tensor(1, h),
        up: Tensor.randn(h, cfg.feedforward, rng, INIT_STD),
        upBias: new Tensor(1, cfg.feedforward),
        down: Tensor.randn(cfg.feedforward, h, rng, INIT_STD),
        downBias: new Tensor(1, h),
        norm2Gain: Tensor.full(1, h, 1),
        norm2Bias: new Tensor(1, h),
      });
    }
    this.headWeight = Tensor.randn(h, vocab.size, rng, INIT_STD);
    this.headBias = new Tensor(1, vocab.size);
    this.positional = sinusoidalEncoding(cfg.blockSize, h);
  }

  private namedParameters(): Array<[string, Tensor]> {
    const named: Array<[string, Tensor]> = [["embedding", this.embedding]];
    this.blocks.forEach((block, i) => {
      const prefix = `block${i}`;
      named.push(
        [`${prefix}.wq`, block.wq],
        [`${prefix}.wk`, block.wk],
        [`${prefix}.wv`, block.wv],
        [`${prefix}.wo`, block.wo],
        [`${prefix}.bq`, block.bq],
        [`${prefix}.bk`, block.bk],
        [`${prefix}.bv`, block.bv],
        [`${prefix}.bo`, block.bo],
        [`${prefix}.norm1.gain`, block.norm1Gain],
        [`${prefix}.norm1.bias`, block.norm1Bias],
        [`${prefix}.mlp.up`, block.up],
        [`${prefix}.mlp.upBias`, block.upBias],
        [`${prefix}.mlp.down`, block.down],
        [`${prefix}.mlp.downBias`, block.downBias],
        [`${prefix}.norm2.gain`, block.norm2Gain],
        [`${prefix}.norm2.bias`, block.norm2Bias],
      );
    });
    named.push(["head.weight", this.headWeight], ["head.bias", this.headBias]);
    return named;
  }

  parameters(): Tensor[] {
    return this.namedParameters().map(([, tensor]) => tensor);
  }

  /**
   * Logits for every position, one row per input token. Dropout fires only
   * when training is set, which then requires an rng.
   */
  forward(tokenIds: readonly number[], training = false, rng?: Rng): Tensor {
    const span = tokenIds.length;
    if (span < 1) throw new Error("forward needs at least one token");
    if (span > this.cfg.blockSize) {
      throw new Error(`sequence of ${span} tokens exceeds block size ${this.cfg.blockSize}`);
    }
    const rate = training ? this.cfg.dropout : 0;
    if (rate > 0 && !rng) throw new Error("training with dropout needs an rng");
    const headWidth = this.cfg.hidden / this.cfg.heads;
    const attnScale = 1 / Math.sqrt(headWidth);

    // Embeddings are scaled up to keep their magnitude comparable to the
    // unit-amplitude sinusoids; otherwise position drowns out identity.
    let x = addConst(
      scale(gatherRows(this.embedding, tokenIds), Math.sqrt(this.cfg.hidden)),
      this.positional.subarray(0, span * this.cfg.hidden),
    );
    for (const block of this.blocks) {
      const q = addRow(matmul(x, block.wq), block.bq);
      const k = addRow(matmul(x, block.wk), block.bk);
      const v = addRow(matmul(x, block.wv), block.bv);
      const headOutputs: Tensor[] = [];
      for (let h = 0; h < this.cfg.heads; h++) {
        const qh = sliceCols(q, h * headWidth, headWidth);
        const kh = sliceCols(k, h * headWidth, headWidth);
        const vh = sliceCols(v, h * headWidth, headWidth);
        const weights = causalSoftmaxRows(scale(matmulTransposeB(qh, kh), attnScale));
        headOutputs.push(matmul(weights, vh));
      }
      let attended = addRow(matmul(concatCols(headOutputs), block.wo), block.bo);
      if (rate > 0) attended = dropout(attended, rate, rng!);
      x = layerNorm(add(x, attended), block.norm1Gain, block.norm1Bias);

      let inner = addRow(matmul(relu(addRow(matmul(x, block.up), block.upBias)), block.down), block.downBias);
      if (rate > 0) inner = dropout(inner, rate, rng!);
      x = layerNorm(add(x, inner), block.norm2Gain, block.norm2Bias);
    }
    return addRow(matmul(x, this.headWeight), this.headBias);
  }

  /**
   * Context window fed to the model: boundary marker plus the context words,
   * truncated to the most recent blockSize tokens when longer.
   */
  encodeContext(context: readonly string[]): number[] {
    const ids = [this.vocab.boundaryId];
    for (const word of context) ids.push(this.vocab.id(word));
    return ids.length > this.cfg.blockSize ? ids.slice(ids.length - this.cfg.blockSize) : ids;
  }

  /** Log-softmax over the whole vocabulary at the final position, read off at the candidates. */
  scoreBatch(context: readonly string[], candidates: readonly string[]): number[] {
    if (candidates.length === 0) throw new Error("candidates must be non-empty");
    const ids = this.encodeContext(context);
    const logits = this.forward(ids);
    const offset = (ids.length - 1) * this.vocab.size;
    let max = -Infinity;
    for (let j = 0; j < this.vocab.size; j++) max = Math.max(max, logits.data[offset + j]!);
    let sumExp = 0;
    for (let j = 0; j < this.vocab.size; j++) sumExp += Math.exp(logits.data[offset + j]! - max);
    const logZ = max + Math.log(sumExp);
    return candidates.map((word) => logits.data[offset + this.vocab.id(word)]! - logZ);
  }

  /** Chain rule over the words plus the closing boundary event. */
  scoreSequence(words: readonly string[]): number {
    let total = 0;
    for (let i = 0; i < words.length; i++) {
      total += this.scoreBatch(words.slice(0, i), [words[i]!])[0]!;
    }
    return total + this.scoreBatch(words, [BOUNDARY])[0]!;
  }

  /**
   * Mean next-token cross entropy over one boundary-delimited sentence.
   * Sentences longer than the block contribute only their first blockSize
   * transitions.
   */
  sentenceLoss(words: readonly string[], training = false, rng?: Rng): Tensor {
    const ids = [this.vocab.boundaryId, ...words.map((w) => this.vocab.id(w)), this.vocab.boundaryId];
    const span = Math.min(ids.length - 1, this.cfg.blockSize);
    const logits = this.forward(ids.slice(0, span), training, rng);
    return softmaxCrossEntropy(logits, ids.slice(1, span + 1));
  }

  toCheckpoint(): Checkpoint {
    const weights: Record<string, StoredTensor> = {};
    for (const [name, tensor] of this.namedParameters()) {
      weights[name] = { rows: tensor.rows, cols: tensor.cols, data: Array.from(tensor.data) };
    }
    return {
      format: CHECKPOINT_FORMAT,
      config: { ...this.cfg },
      vocab: [...this.vocab.tokens],
      weights,
    };
  }

  static fromCheckpoint(raw: unknown): TransformerLm {
    if (typeof raw !== "object" || raw === null) throw new Error("checkpoint must be a JSON object");
    const stored = raw as Partial<Checkpoint>;
    if (stored.format !== CHECKPOINT_FORMAT) {
      throw new Error(`unsupported checkpoint format ${JSON.stringify(stored.format)}`);
    }
    if (typeof stored.config !== "object" || stored.config === null) {
      throw new Error("checkpoint is missing its config");
    }
    if (!Array.isArray(stored.vocab)) throw new Error("checkpoint is missing its vocab list");
    if (typeof stored.weights !== "object" || stored.weights === null) {
      throw new Error("checkpoint is missing its weights");
    }
    const model = new TransformerLm(stored.config as ToyTransformerConfig, Vocab.fromTokens(stored.vocab));
    for (const [name, tensor] of model.namedParameters()) {
      const entry = stored.weights[name];
      if (!entry || entry.rows !== tensor.rows || entry.cols !== tensor.cols) {
        throw new Error(`checkpoint weight ${name} is missing or has the wrong shape`);
      }
      if (!Array.isArray(entry.data) || entry.data.length !== tensor.data.length) {
        throw new Error(`checkpoint weight ${name} has ${entry.data?.length ?? 0} values, expected ${tensor.data.length}`);
      }
      for (let i = 0; i < entry.data.length; i++) {
        const value = entry.data[i]!;
        if (typeof value !== "number" || !Number.isFinite(value)) {
          throw new Error(`checkpoint weight ${name} holds a non-finite value`);
        }
        tensor.data[i] = value;
      }
    }
    return model;
  }
}

// Post-norm stacks are prone to loss spikes at toy scale; a global-norm clip
// keeps single-sentence updates from blowing up the run.
const CLIP_NORM = 1.0;

/**
 * Adam over shuffled sentences, one epoch per config epoch; returns the mean
 * training loss per epoch as observed during the updates.
 */
export function trainModel(
  model: TransformerLm,
  sentences: ReadonlyArray<readonly string[]>,
  rng: Rng,
  log?: (line: string) => void,
): number[] {
  if (sentences.length === 0) throw new EmptyCorpusError("no sentences to train on");
  const params = model.parameters();
  const optimizer = new Adam(params, model.cfg.learningRate);
  const order = sentences.map((_, i) => i);
  const losses: number[] = [];
  for (let epoch = 1; epoch <= model.cfg.epochs; epoch++) {
    rng.shuffle(order);
    let total = 0;
    for (const index of order) {
      const loss = model.sentenceLoss(sentences[index]!, true, rng);
      optimizer.zeroGrad();
      loss.backward();
      clipGradNorm(params, CLIP_NORM);
      optimizer.step();
      total += loss.data[0]!;
    }
    const mean = total / sentences.length;
    losses.push(mean);
    log?.(`epoch ${epoch}/${model.cfg.epochs} loss ${mean.toFixed(4)}`);
  }
  return losses;
}
