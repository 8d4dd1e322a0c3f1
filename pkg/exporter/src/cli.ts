#!/usr/bin/env node
/**
 * Command line for exporting and verifying attention dumps.
 *
 *   attn-export export --model toy-2l2h --input tokens.json \
 *       --text-span 0 4 --speech-span 4 10 --out dump/ [--sliced] \
 *       [--dtype f32|f64] [--seed N] [--logits] [--utterance-id ID]
 *   attn-export verify --dump dump/
 *
 * Spans are never guessed: the caller states which positions are target
 * text and which are output speech. Weights are seeded at random (this is
 * an offline tool), so rows are genuine softmax distributions but carry no
 * pretrained semantics.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { MODEL_REGISTRY, TinyDecoderLM, resolveModel } from "./model.js";
import { shiftScoresNonNegative, validateSpans, writeDump, type DType, type Spans } from "./dump.js";
import { verifyDump } from "./verify.js";

interface ExportArgs {
  model: string;
  input: string;
  textSpan: [number, number];
  speechSpan: [number, number];
  out: string;
  sliced: boolean;
  dtype: DType;
  seed: number;
  logits: boolean;
  utteranceId: string | null;
}

function usage(): string {
  return [
    "usage:",
    "  attn-export export --model ID --input TOKENS.json --text-span A B",
    "      --speech-span A B --out DIR [--sliced] [--dtype f32|f64]",
    "      [--seed N] [--logits] [--utterance-id ID]",
    "  attn-export verify --dump DIR",
    "",
    `models: ${Object.keys(MODEL_REGISTRY).join(", ")}`,
  ].join("\n");
}

function parsePair(argv: string[], i: number, flag: string): [number, number] {
  const a = Number(argv[i + 1]);
  const b = Number(argv[i + 2]);
  if (!Number.isInteger(a) || !Number.isInteger(b)) {
    throw new Error(`${flag} expects two integers`);
  }
  return [a, b];
}

function parseExportArgs(argv: string[]): ExportArgs {
  const args: Partial<ExportArgs> = {
    sliced: false,
    dtype: "f32",
    seed: 0,
    logits: false,
    utteranceId: null,
  };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    switch (flag) {
      case "--model":
        args.model = argv[++i];
        break;
      case "--input":
        args.input = argv[++i];
        break;
      case "--text-span":
        args.textSpan = parsePair(argv, i, flag);
        i += 2;
        break;
      case "--speech-span":
        args.speechSpan = parsePair(argv, i, flag);
        i += 2;
        break;
      case "--out":
        args.out = argv[++i];
        break;
      case "--sliced":
        args.sliced = true;
        break;
      case "--dtype": {
        const value = argv[++i];
        if (value !== "f32" && value !== "f64") throw new Error(`unknown dtype ${value}`);
        args.dtype = value;
        break;
      }
      case "--seed":
        args.seed = Number(argv[++i]);
        break;
      case "--logits":
        args.logits = true;
        break;
      case "--utterance-id":
        args.utteranceId = argv[++i];
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  for (const key of ["model", "input", "textSpan", "speechSpan", "out"] as const) {
    if (args[key] === undefined) throw new Error(`missing required --${key.replace("Span", "-span")}`);
  }
  return args as ExportArgs;
}

function loadTokens(file: string): { tokens: number[]; utteranceId: string } {
  const raw = JSON.parse(fs.readFileSync(file, "utf-8"));
  if (Array.isArray(raw)) {
    return { tokens: raw.map(Number), utteranceId: path.basename(file, ".json") };
  }
  if (raw && Array.isArray(raw.tokens)) {
    return {
      tokens: raw.tokens.map(Number),
      utteranceId: typeof raw.utterance_id === "string" ? raw.utterance_id : path.basename(file, ".json"),
    };
  }
  throw new Error(`${file}: expected a token array or {"utterance_id", "tokens"}`);
}

export function runExport(argv: string[]): number {
  const args = parseExportArgs(argv);
  const config = resolveModel(args.model);
  const { tokens, utteranceId } = loadTokens(args.input);
  const spans: Spans = { textSpan: args.textSpan, speechSpan: args.speechSpan };
  validateSpans(tokens.length, spans);

  const model = new TinyDecoderLM(config, args.seed);
  const result = model.forward(tokens);
  let matrices = result.attentions;
  let content: "probabilities" | "logits_shifted" = "probabilities";
  if (args.logits) {
    if (!args.sliced) {
      throw new Error("--logits requires --sliced: causally masked cells have no finite score");
    }
    matrices = result.scores.map((layer) =>
      layer.map((scores) => shiftScoresNonNegative(scores, result.seqLen))
    );
    content = "logits_shifted";
  }
  writeDump(args.out, matrices, result.seqLen, spans, {
    utteranceId: args.utteranceId ?? utteranceId,
    dtype: args.dtype,
    sliced: args.sliced,
    content,
  });
  const shape = args.sliced
    ? `${spans.speechSpan[1] - spans.speechSpan[0]}x${spans.textSpan[1] - spans.textSpan[0]}`
    : `${result.seqLen}x${result.seqLen}`;
  console.log(
    `wrote ${config.nLayers * config.nHeads} ${shape} ${args.dtype} matrices to ${args.out}`
  );
  return 0;
}

export function runVerify(argv: string[]): number {
  let dir: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--dump") dir = argv[++i];
    else throw new Error(`unknown flag ${argv[i]}`);
  }
  if (!dir) throw new Error("missing required --dump");
  const result = verifyDump(dir);
  for (const summary of result.summaries) {
    console.log(
      `L${summary.layer} H${summary.head}: min=${summary.min.toExponential(3)} ` +
        `max=${summary.max.toExponential(3)} rowSumErr=${summary.maxRowSumError.toExponential(3)}`
    );
  }
  if (result.issues.length > 0) {
    for (const issue of result.issues) console.error(`issue: ${issue}`);
    console.error(`${result.issues.length} issue(s) found`);
    return 1;
  }
  const n = result.manifest ? result.manifest.n_layers * result.manifest.n_heads : 0;
  console.log(`ok: ${n} matrices verified`);
  return 0;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "export") return runExport(rest);
    if (command === "verify") return runVerify(rest);
    console.error(usage());
    return 2;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${path.resolve(process.argv[1])}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
