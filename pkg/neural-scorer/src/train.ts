/**
 * Train the toy transformer LM and write a JSON checkpoint.
 *
 * Usage:
 *   node dist/train.js --out model.json [--corpus FILE | --sentences N]
 *     [--epochs N] [--layers N] [--hidden N] [--heads N] [--feedforward N]
 *     [--block-size N] [--dropout R] [--lr R] [--seed N] [--vocab-out FILE]
 *
 * Without --corpus a built-in synthetic grammar corpus is generated.
 * --epochs 0 writes a checkpoint of freshly initialized weights, which the
 * server accepts like any other. Per-epoch training loss goes to stderr.
 */

import { writeFileSync } from "fs";
import { parseArgs } from "util";

import { EmptyCorpusError, loadCorpus, syntheticCorpus } from "./corpus";
import { DEFAULT_CONFIG, TransformerLm, ToyTransformerConfig, trainModel } from "./model";
import { Rng } from "./rng";
import { Vocab } from "./vocab";

const USAGE =
  "usage: train.js --out FILE [--corpus FILE | --sentences N] [--epochs N] " +
  "[--layers N] [--hidden N] [--heads N] [--feedforward N] [--block-size N] " +
  "[--dropout R] [--lr R] [--seed N] [--vocab-out FILE]";

export class UsageError extends Error {}

export interface TrainArgs {
  cfg: ToyTransformerConfig;
  corpusPath: string | null;
  sentences: number;
  seed: number;
  out: string;
  vocabOut: string | null;
}

function integerFlag(name: string, raw: string): number {
  const value = Number(raw);
  if (!Number.isInteger(value)) throw new UsageError(`--${name} expects an integer, got ${raw}`);
  return value;
}

function realFlag(name: string, raw: string): number {
  const value = Number(raw);
  if (!Number.isFinite(value)) throw new UsageError(`--${name} expects a number, got ${raw}`);
  return value;
}

export function parseTrainArgs(argv: readonly string[]): TrainArgs {
  let values;
  try {
    ({ values } = parseArgs({
      args: [...argv],
      options: {
        out: { type: "string" },
        corpus: { type: "string" },
        sentences: { type: "string" },
        seed: { type: "string" },
        epochs: { type: "string" },
        layers: { type: "string" },
        hidden: { type: "string" },
        heads: { type: "string" },
        feedforward: { type: "string" },
        "block-size": { type: "string" },
        dropout: { type: "string" },
        lr: { type: "string" },
        "vocab-out": { type: "string" },
      },
      allowPositionals: false,
    }));
  } catch (err) {
    throw new UsageError(err instanceof Error ? err.message : String(err));
  }
  if (!values.out) throw new UsageError("--out FILE is required");
  if (values.corpus !== undefined && values.sentences !== undefined) {
    throw new UsageError("--corpus and --sentences are mutually exclusive");
  }
  const cfg: ToyTransformerConfig = {
    ...DEFAULT_CONFIG,
    ...(values.layers !== undefined && { layers: integerFlag("layers", values.layers) }),
    ...(values.hidden !== undefined && { hidden: integerFlag("hidden", values.hidden) }),
    ...(values.heads !== undefined && { heads: integerFlag("heads", values.heads) }),
    ...(values.feedforward !== undefined && {
      feedforward: integerFlag("feedforward", values.feedforward),
    }),
    ...(values["block-size"] !== undefined && {
      blockSize: integerFlag("block-size", values["block-size"]),
    }),
    ...(values.dropout !== undefined && { dropout: realFlag("dropout", values.dropout) }),
    ...(values.lr !== undefined && { learningRate: realFlag("lr", values.lr) }),
    ...(values.epochs !== undefined && { epochs: integerFlag("epochs", values.epochs) }),
  };
  return {
    cfg,
    corpusPath: values.corpus ?? null,
    sentences: values.sentences !== undefined ? integerFlag("sentences", values.sentences) : 500,
    seed: values.seed !== undefined ? integerFlag("seed", values.seed) : 7,
    out: values.out,
    vocabOut: values["vocab-out"] ?? null,
  };
}

function main(): void {
  let args: TrainArgs;
  try {
    args = parseTrainArgs(process.argv.slice(2));
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    console.error(USAGE);
    process.exit(2);
  }
  try {
    const sentences = args.corpusPath
      ? loadCorpus(args.corpusPath)
      : syntheticCorpus(args.sentences, args.seed);
    if (sentences.length === 0) throw new EmptyCorpusError("no sentences requested");
    const vocab = Vocab.fromWords(sentences.flat());
    const model = new TransformerLm(args.cfg, vocab, new Rng(args.seed));
    console.error(
      `training on ${sentences.length} sentences, ${vocab.size} tokens, ` +
        `${args.cfg.layers} layers x ${args.cfg.hidden} hidden`,
    );
    trainModel(model, sentences, new Rng(args.seed + 1), (line) => console.error(line));
    writeFileSync(args.out, JSON.stringify(model.toCheckpoint()));
    console.error(`wrote checkpoint ${args.out}`);
    if (args.vocabOut) {
      writeFileSync(args.vocabOut, JSON.stringify({ tokens: model.vocab.tokens }) + "\n");
      console.error(`wrote vocab ${args.vocabOut}`);
    }
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    process.exit(1);
  }
}

if (require.main === module) main();
