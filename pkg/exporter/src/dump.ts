/**
 * Attention dump writer.
 *
 * Produces the on-disk layout the analysis toolkit reads: `manifest.json`
 * plus one raw little-endian row-major binary per (layer, head), named
 * `attn_L{layer}_H{head}.bin`. Full matrices are seqLen x seqLen; sliced
 * dumps keep only the speech-row x text-column block. Output bytes are a
 * pure function of the inputs.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export type DType = "f32" | "f64";

export interface Spans {
  textSpan: [number, number];
  speechSpan: [number, number];
}

export interface DumpOptions {
  utteranceId: string;
  dtype: DType;
  sliced: boolean;
  /** What the payload holds; anything but probabilities is marked. */
  content?: "probabilities" | "logits_shifted";
}

export function validateSpans(seqLen: number, spans: Spans): void {
  const [t0, t1] = spans.textSpan;
  const [s0, s1] = spans.speechSpan;
  const ok =
    Number.isInteger(t0) && Number.isInteger(t1) &&
    Number.isInteger(s0) && Number.isInteger(s1) &&
    0 <= t0 && t0 < t1 && t1 <= s0 && s0 < s1 && s1 <= seqLen;
  if (!ok) {
    throw new Error(
      `invalid spans for seq_len ${seqLen}: text [${t0}, ${t1}), speech [${s0}, ${s1})`
    );
  }
}

export function matrixFileName(layer: number, head: number): string {
  return `attn_L${layer}_H${head}.bin`;
}

function sliceBlock(matrix: Float64Array, seqLen: number, spans: Spans): Float64Array {
  const [t0, t1] = spans.textSpan;
  const [s0, s1] = spans.speechSpan;
  const rows = s1 - s0;
  const cols = t1 - t0;
  const out = new Float64Array(rows * cols);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      out[r * cols + c] = matrix[(s0 + r) * seqLen + (t0 + c)];
    }
  }
  return out;
}

function encode(values: Float64Array, dtype: DType): Buffer {
  const itemSize = dtype === "f32" ? 4 : 8;
  const buf = Buffer.alloc(values.length * itemSize);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  for (let i = 0; i < values.length; i++) {
    if (dtype === "f32") view.setFloat32(i * 4, values[i], true);
    else view.setFloat64(i * 8, values[i], true);
  }
  return buf;
}

/**
 * Write one dump directory.
 *
 * `attentions[layer][head]` are full row-major seqLen x seqLen matrices;
 * slicing happens here when requested. Entries must be finite and >= 0 —
 * the store contract — so callers exporting raw scores shift them first.
 */
export function writeDump(
  dir: string,
  attentions: Float64Array[][],
  seqLen: number,
  spans: Spans,
  opts: DumpOptions
): void {
  validateSpans(seqLen, spans);
  const nLayers = attentions.length;
  if (nLayers === 0) throw new Error("no layers to write");
  const nHeads = attentions[0].length;
  for (const [layer, heads] of attentions.entries()) {
    if (heads.length !== nHeads) {
      throw new Error(`layer ${layer} has ${heads.length} heads, expected ${nHeads}`);
    }
    for (const [head, matrix] of heads.entries()) {
      if (matrix.length !== seqLen * seqLen) {
        throw new Error(
          `matrix (${layer}, ${head}) has ${matrix.length} entries, expected ${seqLen * seqLen}`
        );
      }
      for (const value of matrix) {
        if (!Number.isFinite(value) || value < 0) {
          throw new Error(`matrix (${layer}, ${head}) has invalid entry ${value}`);
        }
      }
    }
  }

  fs.mkdirSync(dir, { recursive: true });
  const manifest: Record<string, unknown> = {
    version: 1,
    utterance_id: opts.utteranceId,
    n_layers: nLayers,
    n_heads: nHeads,
    seq_len: seqLen,
    text_span: spans.textSpan,
    speech_span: spans.speechSpan,
    dtype: opts.dtype,
    sliced: opts.sliced,
  };
  if (opts.content && opts.content !== "probabilities") {
    manifest.content = opts.content;
  }
  fs.writeFileSync(
    path.join(dir, "manifest.json"),
    JSON.stringify(manifest, Object.keys(manifest).sort(), 2) + "\n",
    "utf-8"
  );
  for (let layer = 0; layer < nLayers; layer++) {
    for (let head = 0; head < nHeads; head++) {
      const full = attentions[layer][head];
      const payload = opts.sliced ? sliceBlock(full, seqLen, spans) : full;
      fs.writeFileSync(path.join(dir, matrixFileName(layer, head)), encode(payload, opts.dtype));
    }
  }
}

/**
 * Per-row shift of masked scores so the payload is non-negative.
 *
 * Row softmax is shift-invariant, so subtracting each causal row's minimum
 * finite score preserves the distribution the scores encode while meeting
 * the store's entries >= 0 contract. Unreachable (masked) cells become 0.
 */
export function shiftScoresNonNegative(scores: Float64Array, seqLen: number): Float64Array {
  const out = new Float64Array(seqLen * seqLen);
  for (let i = 0; i < seqLen; i++) {
    let min = Infinity;
    for (let j = 0; j <= i; j++) {
      const s = scores[i * seqLen + j];
      if (s < min) min = s;
    }
    for (let j = 0; j <= i; j++) {
      out[i * seqLen + j] = scores[i * seqLen + j] - min;
    }
  }
  return out;
}
