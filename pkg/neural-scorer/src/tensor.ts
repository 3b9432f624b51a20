/**
 * Minimal reverse-mode autograd over dense row-major matrices.
 *
 * Every op builds the output eagerly and attaches a closure that scatters the
 * output gradient back onto its parents; backward() replays those closures in
 * reverse topological order from a scalar loss. Float64 throughout, fixed
 * summation order, so results are bit-reproducible run to run.
 */

import { Rng } from "./rng";

export class Tensor {
  readonly rows: number;
  readonly cols: number;
  readonly data: Float64Array;
  readonly grad: Float64Array;
  private readonly parents: readonly Tensor[];
  private readonly backwardStep: (() => void) | null;

  constructor(
    rows: number,
    cols: number,
    data?: Float64Array,
    parents: readonly Tensor[] = [],
    backwardStep: (() => void) | null = null,
  ) {
    this.rows = rows;
    this.cols = cols;
    this.data = data ?? new Float64Array(rows * cols);
    this.grad = new Float64Array(rows * cols);
    this.parents = parents;
    this.backwardStep = backwardStep;
  }

  static fromValues(rows: number, cols: number, values: readonly number[]): Tensor {
    if (values.length !== rows * cols) {
      throw new Error(`expected ${rows * cols} values for ${rows}x${cols}, got ${values.length}`);
    }
    return new Tensor(rows, cols, Float64Array.from(values));
  }

  static randn(rows: number, cols: number, rng: Rng, std: number): Tensor {
    const out = new Tensor(rows, cols);
    for (let i = 0; i < out.data.length; i++) out.data[i] = rng.gauss() * std;
    return out;
  }

  static full(rows: number, cols: number, value: number): Tensor {
    const out = new Tensor(rows, cols);
    out.data.fill(value);
    return out;
  }

  at(row: number, col: number): number {
    return this.data[row * this.cols + col]!;
  }

  backward(): void {
    if (this.rows !== 1 || this.cols !== 1) throw new Error("backward requires a scalar root");
    const order: Tensor[] = [];
    const seen = new Set<Tensor>();
    const visit = (node: Tensor): void => {
      if (seen.has(node)) return;
      seen.add(node);
      for (const parent of node.parents) visit(parent);
      order.push(node);
    };
    visit(this);
    this.grad[0] = 1;
    for (let i = order.length - 1; i >= 0; i--) {
      const step = order[i]!.backwardStep;
      if (step) step();
    }
  }
}

function sameShape(a: Tensor, b: Tensor, op: string): void {
  if (a.rows !== b.rows || a.cols !== b.cols) {
    throw new Error(`${op} shape mismatch: ${a.rows}x${a.cols} vs ${b.rows}x${b.cols}`);
  }
}

export function matmul(a: Tensor, b: Tensor): Tensor {
  if (a.cols !== b.rows) {
    throw new Error(`matmul shape mismatch: ${a.rows}x${a.cols} by ${b.rows}x${b.cols}`);
  }
  const out: Tensor = new Tensor(a.rows, b.cols, undefined, [a, b], () => {
    for (let i = 0; i < a.rows; i++) {
      for (let k = 0; k < a.cols; k++) {
        let acc = 0;
        for (let j = 0; j < b.cols; j++) acc += out.grad[i * b.cols + j]! * b.data[k * b.cols + j]!;
        a.grad[i * a.cols + k] += acc;
      }
    }
    for (let k = 0; k < b.rows; k++) {
      for (let j = 0; j < b.cols; j++) {
        let acc = 0;
        for (let i = 0; i < a.rows; i++) acc += a.data[i * a.cols + k]! * out.grad[i * b.cols + j]!;
        b.grad[k * b.cols + j] += acc;
      }
    }
  });
  for (let i = 0; i < a.rows; i++) {
    for (let k = 0; k < a.cols; k++) {
      const scalar = a.data[i * a.cols + k]!;
      if (scalar === 0) continue;
      const bOffset = k * b.cols;
      const outOffset = i * b.cols;
      for (let j = 0; j < b.cols; j++) out.data[outOffset + j] += scalar * b.data[bOffset + j]!;
    }
  }
  return out;
}

/** a (m x k) times b-transpose (b is n x k) -> m x n. */
export function matmulTransposeB(a: Tensor, b: Tensor): Tensor {
  if (a.cols !== b.cols) {
    throw new Error(`matmulTransposeB shape mismatch: ${a.rows}x${a.cols} by ${b.rows}x${b.cols}`);
  }
  const out: Tensor = new Tensor(a.rows, b.rows, undefined, [a, b], () => {
    for (let i = 0; i < a.rows; i++) {
      for (let j = 0; j < b.rows; j++) {
        const g = out.grad[i * b.rows + j]!;
        if (g === 0) continue;
        for (let t = 0; t < a.cols; t++) {
          a.grad[i * a.cols + t] += g * b.data[j * b.cols + t]!;
          b.grad[j * b.cols + t] += g * a.data[i * a.cols + t]!;
        }
      }
    }
  });
  for (let i = 0; i < a.rows; i++) {
    for (let j = 0; j < b.rows; j++) {
      let acc = 0;
      for (let t = 0; t < a.cols; t++) acc += a.data[i * a.cols + t]! * b.data[j * b.cols + t]!;
      out.data[i * b.rows + j] = acc;
    }
  }
  return out;
}

export function add(a: Tensor, b: Tensor): Tensor {
  sameShape(a, b, "add");
  const out: Tensor = new Tensor(a.rows, a.cols, undefined, [a, b], () => {
    for (let i = 0; i < out.grad.length; i++) {
      a.grad[i] += out.grad[i]!;
      b.grad[i] += out.grad[i]!;
    }
  });
  for (let i = 0; i < out.data.length; i++) out.data[i] = a.data[i]! + b.data[i]!;
  return out;
}

/** Broadcast a 1 x cols bias over every row. */
export function addRow(x: Tensor, bias: Tensor): Tensor {
  if (bias.rows !== 1 || bias.cols !== x.cols) {
    throw new Error(`addRow shape mismatch: ${x.rows}x${x.cols} plus ${bias.rows}x${bias.cols}`);
  }
  const out: Tensor = new Tensor(x.rows, x.cols, undefined, [x, bias], () => {
    for (let i = 0; i < x.rows; i++) {
      for (let j = 0; j < x.cols; j++) {
        const g = out.grad[i * x.cols + j]!;
        x.grad[i * x.cols + j] += g;
        bias.grad[j] += g;
      }
    }
  });
  for (let i = 0; i < x.rows; i++) {
    for (let j = 0; j < x.cols; j++) out.data[i * x.cols + j] = x.data[i * x.cols + j]! + bias.data[j]!;
  }
  return out;
}

/** Add a constant buffer elementwise; the constant gets no gradient. */
export function addConst(x: Tensor, values: Float64Array): Tensor {
  if (values.length !== x.data.length) {
    throw new Error(`addConst length mismatch: ${x.data.length} vs ${values.length}`);
  }
  const out: Tensor = new Tensor(x.rows, x.cols, undefined, [x], () => {
    for (let i = 0; i < out.grad.length; i++) x.grad[i] += out.grad[i]!;
  });
  for (let i = 0; i < out.data.length; i++) out.data[i] = x.data[i]! + values[i]!;
  return out;
}

export function scale(x: Tensor, factor: number): Tensor {
  const out: Tensor = new Tensor(x.rows, x.cols, undefined, [x], () => {
    for (let i = 0; i < out.grad.length; i++) x.grad[i] += factor * out.grad[i]!;
  });
  for (let i = 0; i < out.data.length; i++) out.data[i] = factor * x.data[i]!;
  return out;
}

export function relu(x: Tensor): Tensor {
  const out: Tensor = new Tensor(x.rows, x.cols, undefined, [x], () => {
    for (let i = 0; i < out.grad.length; i++) {
      if (x.data[i]! > 0) x.grad[i] += out.grad[i]!;
    }
  });
  for (let i = 0; i < out.data.length; i++) out.data[i] = x.data[i]! > 0 ? x.data[i]! : 0;
  return out;
}

export function sliceCols(x: Tensor, start: number, width: number): Tensor {
  if (start < 0 || width < 1 || start + width > x.cols) {
    throw new Error(`sliceCols [${start}, ${start + width}) out of range for ${x.rows}x${x.cols}`);
  }
  const out: Tensor = new Tensor(x.rows, width, undefined, [x], () => {
    for (let i = 0; i < x.rows; i++) {
      for (let j = 0; j < width; j++) x.grad[i * x.cols + start + j] += out.grad[i * width + j]!;
    }
  });
  for (let i = 0; i < x.rows; i++) {
    for (let j = 0; j < width; j++) out.data[i * width + j] = x.data[i * x.cols + start + j]!;
  }
  return out;
}

export function concatCols(parts: readonly Tensor[]): Tensor {
  if (parts.length === 0) throw new Error("concatCols needs at least one part");
  const rows = parts[0]!.rows;
  let cols = 0;
  for (const part of parts) {
    if (part.rows !== rows) throw new Error("concatCols shape mismatch: differing row counts");
    cols += part.cols;
  }
  const out: Tensor = new Tensor(rows, cols, undefined, parts, () => {
    let offset = 0;
    for (const part of parts) {
      for (let i = 0; i < rows; i++) {
        for (let j = 0; j < part.cols; j++) {
          part.grad[i * part.cols + j] += out.grad[i * cols + offset + j]!;
        }
      }
      offset += part.cols;
    }
  });
  let offset = 0;
  for (const part of parts) {
    for (let i = 0; i < rows; i++) {
      for (let j = 0; j < part.cols; j++) out.data[i * cols + offset + j] = part.data[i * part.cols + j]!;
    }
    offset += part.cols;
  }
  return out;
}

/** Row r of the output is row ids[r] of the table; gradients accumulate per id. */
export function gatherRows(table: Tensor, ids: readonly number[]): Tensor {
  for (const id of ids) {
    if (!Number.isInteger(id) || id < 0 || id >= table.rows) {
      throw new Error(`gatherRows id ${id} out of range for ${table.rows} rows`);
    }
  }
  const out: Tensor = new Tensor(ids.length, table.cols, undefined, [table], () => {
    for (let r = 0; r < ids.length; r++) {
      const rowOffset = ids[r]! * table.cols;
      for (let j = 0; j < table.cols; j++) table.grad[rowOffset + j] += out.grad[r * table.cols + j]!;
    }
  });
  for (let r = 0; r < ids.length; r++) {
    out.data.set(table.data.subarray(ids[r]! * table.cols, (ids[r]! + 1) * table.cols), r * table.cols);
  }
  return out;
}

/** Row-wise normalization to zero mean and unit variance, then affine rescale. */
export function layerNorm(x: Tensor, gain: Tensor, bias: Tensor, eps = 1e-5): Tensor {
  if (gain.rows !== 1 || gain.cols !== x.cols || bias.rows !== 1 || bias.cols !== x.cols) {
    throw new Error(`layerNorm affine shape mismatch for ${x.rows}x${x.cols}`);
  }
  const n = x.cols;
  const normalized = new Float64Array(x.rows * n);
  const invStd = new Float64Array(x.rows);
  const out: Tensor = new Tensor(x.rows, n, undefined, [x, gain, bias], () => {
    for (let i = 0; i < x.rows; i++) {
      const offset = i * n;
      let gradDot = 0;
      let gradHatDot = 0;
      for (let j = 0; j < n; j++) {
        const g = out.grad[offset + j]!;
        gain.grad[j] += g * normalized[offset + j]!;
        bias.grad[j] += g;
        const gHat = g * gain.data[j]!;
        gradDot += gHat;
        gradHatDot += gHat * normalized[offset + j]!;
      }
      for (let j = 0; j < n; j++) {
        const gHat = out.grad[offset + j]! * gain.data[j]!;
        x.grad[offset + j] +=
          invStd[i]! * (gHat - gradDot / n - (normalized[offset + j]! * gradHatDot) / n);
      }
    }
  });
  for (let i = 0; i < x.rows; i++) {
    const offset = i * n;
    let mean = 0;
    for (let j = 0; j < n; j++) mean += x.data[offset + j]!;
    mean /= n;
    let variance = 0;
    for (let j = 0; j < n; j++) {
      const centered = x.data[offset + j]! - mean;
      variance += centered * centered;
    }
    variance /= n;
    invStd[i] = 1 / Math.sqrt(variance + eps);
    for (let j = 0; j < n; j++) {
      const hat = (x.data[offset + j]! - mean) * invStd[i]!;
      normalized[offset + j] = hat;
      out.data[offset + j] = hat * gain.data[j]! + bias.data[j]!;
    }
  }
  return out;
}

/** Softmax each row over positions j <= i only; later positions get probability 0. */
export function causalSoftmaxRows(scores: Tensor): Tensor {
  if (scores.rows !== scores.cols) {
    throw new Error(`causal softmax needs square scores, got ${scores.rows}x${scores.cols}`);
  }
  const n = scores.cols;
  const out: Tensor = new Tensor(n, n, undefined, [scores], () => {
    for (let i = 0; i < n; i++) {
      const offset = i * n;
      let dot = 0;
      for (let j = 0; j <= i; j++) dot += out.grad[offset + j]! * out.data[offset + j]!;
      for (let j = 0; j <= i; j++) {
        scores.grad[offset + j] += out.data[offset + j]! * (out.grad[offset + j]! - dot);
      }
    }
  });
  for (let i = 0; i < n; i++) {
    const offset = i * n;
    let max = -Infinity;
    for (let j = 0; j <= i; j++) max = Math.max(max, scores.data[offset + j]!);
    let total = 0;
    for (let j = 0; j <= i; j++) total += Math.exp(scores.data[offset + j]! - max);
    for (let j = 0; j <= i; j++) out.data[offset + j] = Math.exp(scores.data[offset + j]! - max) / total;
  }
  return out;
}

/** Inverted dropout: zero with probability rate, otherwise scale by 1/(1-rate). */
export function dropout(x: Tensor, rate: number, rng: Rng): Tensor {
  if (rate < 0 || rate >= 1) throw new Error(`dropout rate ${rate} outside [0, 1)`);
  if (rate === 0) return x;
  const keep = 1 / (1 - rate);
  const mask = new Float64Array(x.data.length);
  for (let i = 0; i < mask.length; i++) mask[i] = rng.next() < rate ? 0 : keep;
  const out: Tensor = new Tensor(x.rows, x.cols, undefined, [x], () => {
    for (let i = 0; i < out.grad.length; i++) x.grad[i] += mask[i]! * out.grad[i]!;
  });
  for (let i = 0; i < out.data.length; i++) out.data[i] = mask[i]! * x.data[i]!;
  return out;
}

/** Mean negative log likelihood of one target class per row. */
export function softmaxCrossEntropy(logits: Tensor, targets: readonly number[]): Tensor {
  if (targets.length !== logits.rows) {
    throw new Error(`expected ${logits.rows} targets, got ${targets.length}`);
  }
  for (const t of targets) {
    if (!Number.isInteger(t) || t < 0 || t >= logits.cols) {
      throw new Error(`target ${t} out of range for ${logits.cols} classes`);
    }
  }
  const probs = new Float64Array(logits.rows * logits.cols);
  const out: Tensor = new Tensor(1, 1, undefined, [logits], () => {
    const upstream = out.grad[0]! / logits.rows;
    for (let i = 0; i < logits.rows; i++) {
      const offset = i * logits.cols;
      for (let j = 0; j < logits.cols; j++) {
        const indicator = j === targets[i] ? 1 : 0;
        logits.grad[offset + j] += (probs[offset + j]! - indicator) * upstream;
      }
    }
  });
  let total = 0;
  for (let i = 0; i < logits.rows; i++) {
    const offset = i * logits.cols;
    let max = -Infinity;
    for (let j = 0; j < logits.cols; j++) max = Math.max(max, logits.data[offset + j]!);
    let sumExp = 0;
    for (let j = 0; j < logits.cols; j++) sumExp += Math.exp(logits.data[offset + j]! - max);
    const logZ = max + Math.log(sumExp);
    for (let j = 0; j < logits.cols; j++) {
      probs[offset + j] = Math.exp(logits.data[offset + j]! - logZ);
    }
    total += logZ - logits.data[offset + targets[i]!]!;
  }
  out.data[0] = total / logits.rows;
  return out;
}

/** Rescale gradients so their global L2 norm is at most maxNorm; returns the pre-clip norm. */
export function clipGradNorm(params: readonly Tensor[], maxNorm: number): number {
  if (!(maxNorm > 0)) throw new Error(`clip norm ${maxNorm} must be positive`);
  let sumSquares = 0;
  for (const p of params) {
    for (let i = 0; i < p.grad.length; i++) sumSquares += p.grad[i]! * p.grad[i]!;
  }
  const norm = Math.sqrt(sumSquares);
  if (norm > maxNorm) {
    const shrink = maxNorm / norm;
    for (const p of params) {
      for (let i = 0; i < p.grad.length; i++) p.grad[i] *= shrink;
    }
  }
  return norm;
}

export class Adam {
  private readonly params: readonly Tensor[];
  private readonly lr: number;
  private readonly beta1: number;
  private readonly beta2: number;
  private readonly eps: number;
  private readonly m: Float64Array[];
  private readonly v: Float64Array[];
  private steps = 0;

  constructor(params: readonly Tensor[], lr: number, beta1 = 0.9, beta2 = 0.999, eps = 1e-8) {
    this.params = params;
    this.lr = lr;
    this.beta1 = beta1;
    this.beta2 = beta2;
    this.eps = eps;
    this.m = params.map((p) => new Float64Array(p.data.length));
    this.v = params.map((p) => new Float64Array(p.data.length));
  }

  zeroGrad(): void {
    for (const p of this.params) p.grad.fill(0);
  }

  step(): void {
    this.steps++;
    const mScale = 1 / (1 - Math.pow(this.beta1, this.steps));
    const vScale = 1 / (1 - Math.pow(this.beta2, this.steps));
    for (let k = 0; k < this.params.length; k++) {
      const p = this.params[k]!;
      const m = this.m[k]!;
      const v = this.v[k]!;
      for (let i = 0; i < p.data.length; i++) {
        const g = p.grad[i]!;
        m[i] = this.beta1 * m[i]! + (1 - this.beta1) * g;
        v[i] = this.beta2 * v[i]! + (1 - this.beta2) * g * g;
        p.data[i] -= (this.lr * m[i]! * mScale) / (Math.sqrt(v[i]! * vScale) + this.eps);
      }
    }
  }
}
