/**
 * Serve a checkpoint over the stdio scoring protocol.
 *
 * Usage:
 *   node dist/serve.js CHECKPOINT [--vocab FILE]
 *   node dist/serve.js --checkpoint CHECKPOINT [--vocab FILE]
 *
 * First line out is the hello handshake; after that every request line gets
 * exactly one response line carrying the same id. Malformed requests get an
 * error response and the loop keeps going. Exits cleanly when stdin closes.
 * Single-threaded on purpose: callers wanting parallelism run more processes.
 */

import { readFileSync } from "fs";
import { createInterface } from "readline";
import { parseArgs } from "util";

import { TransformerLm } from "./model";
import { handleLine, helloLine } from "./protocol";

const USAGE = "usage: serve.js CHECKPOINT [--vocab FILE]";

function loadModel(): TransformerLm {
  let values;
  let positionals;
  try {
    ({ values, positionals } = parseArgs({
      options: {
        checkpoint: { type: "string" },
        vocab: { type: "string" },
      },
      allowPositionals: true,
    }));
  } catch (err) {
    console.error(err instanceof Error ? err.message : String(err));
    console.error(USAGE);
    process.exit(2);
  }
  const checkpointPath = values.checkpoint ?? positionals[0];
  if (!checkpointPath || positionals.length > (values.checkpoint ? 0 : 1)) {
    console.error(USAGE);
    process.exit(2);
  }
  let model: TransformerLm;
  try {
    model = TransformerLm.fromCheckpoint(JSON.parse(readFileSync(checkpointPath, "utf-8")));
  } catch (err) {
    console.error(`cannot load checkpoint ${checkpointPath}: ${err instanceof Error ? err.message : err}`);
    process.exit(1);
  }
  if (values.vocab) {
    let tokens: unknown;
    try {
      const stored: unknown = JSON.parse(readFileSync(values.vocab, "utf-8"));
      tokens = Array.isArray(stored) ? stored : (stored as { tokens?: unknown })?.tokens;
    } catch (err) {
      console.error(`cannot load vocab ${values.vocab}: ${err instanceof Error ? err.message : err}`);
      process.exit(1);
    }
    const matches =
      Array.isArray(tokens) &&
      tokens.length === model.vocab.size &&
      tokens.every((token, i) => token === model.vocab.tokens[i]);
    if (!matches) {
      console.error(`vocab file ${values.vocab} does not match the checkpoint vocabulary`);
      process.exit(1);
    }
  }
  return model;
}

function main(): void {
  const model = loadModel();
  process.stdout.write(helloLine(model.vocab.size) + "\n");
  const lines = createInterface({ input: process.stdin, terminal: false });
  lines.on("line", (line) => {
    const response = handleLine(model, line);
    if (response !== null) process.stdout.write(response + "\n");
  });
  lines.on("close", () => process.exit(0));
}

if (require.main === module) main();
