/**
 * Line-delimited JSON scoring protocol. One request line in, one response
 * line out; ids are echoed verbatim and are the only correlation mechanism.
 * Bad input produces an error response, never a dead loop.
 */

import { TransformerLm } from "./model";

export const PROTOCOL_VERSION = 1;

export function helloLine(vocabSize: number): string {
  return JSON.stringify({ op: "hello", protocol: PROTOCOL_VERSION, vocab_size: vocabSize });
}

function isWordList(value: unknown): value is string[] {
  return Array.isArray(value) && value.every((item) => typeof item === "string");
}

/** Null means the line was blank and deserves no response at all. */
export function handleLine(model: TransformerLm, line: string): string | null {
  if (line.trim() === "") return null;
  let parsed: unknown;
  try {
    parsed = JSON.parse(line);
  } catch {
    return JSON.stringify({ id: null, error: "request is not valid JSON" });
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    return JSON.stringify({ id: null, error: "request must be a JSON object" });
  }
  const request = parsed as Record<string, unknown>;
  if (!("id" in request)) {
    return JSON.stringify({ id: null, error: "request is missing an id" });
  }
  const id = request.id;
  const fail = (reason: string): string => JSON.stringify({ id, error: reason });
  if (request.op !== "score") {
    return fail(`unsupported op ${JSON.stringify(request.op ?? null)}`);
  }
  if (!isWordList(request.context)) {
    return fail("context must be a list of words");
  }
  if (!isWordList(request.candidates) || request.candidates.length === 0) {
    return fail("candidates must be a non-empty list of words");
  }
  return JSON.stringify({ id, logprobs: model.scoreBatch(request.context, request.candidates) });
}
