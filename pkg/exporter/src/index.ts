export { MODEL_REGISTRY, TinyDecoderLM, resolveModel } from "./model.js";
export type { ModelConfig, ForwardResult } from "./model.js";
export { matrixFileName, shiftScoresNonNegative, validateSpans, writeDump } from "./dump.js";
export type { DType, DumpOptions, Spans } from "./dump.js";
export { rowSumTolerance, verifyDump } from "./verify.js";
export type { HeadSummary, Manifest, VerifyResult } from "./verify.js";
export { Rng } from "./rng.js";
