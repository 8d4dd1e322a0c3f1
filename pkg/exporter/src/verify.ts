/**
 * Dump verifier: re-reads a directory and checks the format contract.
 *
 * Catches manifest/payload drift (wrong byte counts, missing files), bad
 * values (non-finite, negative), and broken row stochasticity. Tolerances
 * follow the payload dtype: 1e-4 for f32, 1e-10 for f64. Dumps holding
 * shifted scores instead of probabilities skip the row-sum checks.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { matrixFileName, type DType } from "./dump.js";

export interface Manifest {
  version: number;
  utterance_id: string;
  n_layers: number;
  n_heads: number;
  seq_len: number;
  text_span: [number, number];
  speech_span: [number, number];
  dtype: DType;
  sliced: boolean;
  content?: string;
}

export interface HeadSummary {
  layer: number;
  head: number;
  min: number;
  max: number;
  maxRowSumError: number;
}

export interface VerifyResult {
  manifest: Manifest | null;
  issues: string[];
  summaries: HeadSummary[];
}

export function rowSumTolerance(dtype: DType): number {
  return dtype === "f32" ? 1e-4 : 1e-10;
}

const REQUIRED_KEYS = [
  "version",
  "utterance_id",
  "n_layers",
  "n_heads",
  "seq_len",
  "text_span",
  "speech_span",
  "dtype",
  "sliced",
] as const;

function readManifest(dir: string, issues: string[]): Manifest | null {
  const mpath = path.join(dir, "manifest.json");
  if (!fs.existsSync(mpath)) {
    issues.push(`missing manifest: ${mpath}`);
    return null;
  }
  let raw: unknown;
  try {
    raw = JSON.parse(fs.readFileSync(mpath, "utf-8"));
  } catch (err) {
    issues.push(`corrupt manifest ${mpath}: ${(err as Error).message}`);
    return null;
  }
  const record = raw as Record<string, unknown>;
  for (const key of REQUIRED_KEYS) {
    if (!(key in record)) {
      issues.push(`manifest missing key ${key}`);
      return null;
    }
  }
  if (record.version !== 1) {
    issues.push(`unsupported manifest version ${record.version}`);
    return null;
  }
  if (record.dtype !== "f32" && record.dtype !== "f64") {
    issues.push(`unknown dtype tag ${JSON.stringify(record.dtype)}`);
    return null;
  }
  return record as unknown as Manifest;
}

function decode(buf: Buffer, dtype: DType): Float64Array {
  const itemSize = dtype === "f32" ? 4 : 8;
  const count = buf.byteLength / itemSize;
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const out = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = dtype === "f32" ? view.getFloat32(i * 4, true) : view.getFloat64(i * 8, true);
  }
  return out;
}

export function verifyDump(dir: string): VerifyResult {
  const issues: string[] = [];
  const summaries: HeadSummary[] = [];
  const manifest = readManifest(dir, issues);
  if (!manifest) return { manifest: null, issues, summaries };

  const [t0, t1] = manifest.text_span;
  const [s0, s1] = manifest.speech_span;
  const rows = manifest.sliced ? s1 - s0 : manifest.seq_len;
  const cols = manifest.sliced ? t1 - t0 : manifest.seq_len;
  const itemSize = manifest.dtype === "f32" ? 4 : 8;
  const expectedBytes = rows * cols * itemSize;
  const tol = rowSumTolerance(manifest.dtype);
  const checkRowSums = manifest.content === undefined;

  for (let layer = 0; layer < manifest.n_layers; layer++) {
    for (let head = 0; head < manifest.n_heads; head++) {
      const fpath = path.join(dir, matrixFileName(layer, head));
      if (!fs.existsSync(fpath)) {
        issues.push(`missing matrix file ${fpath}`);
        continue;
      }
      const buf = fs.readFileSync(fpath);
      if (buf.byteLength !== expectedBytes) {
        issues.push(
          `${fpath}: payload is ${buf.byteLength} bytes, expected ${expectedBytes} ` +
            `for shape ${rows}x${cols} dtype ${manifest.dtype}`
        );
        continue;
      }
      const values = decode(buf, manifest.dtype);
      let min = Infinity;
      let max = -Infinity;
      let badValue = false;
      for (const value of values) {
        if (!Number.isFinite(value) || value < 0) {
          issues.push(`(${layer}, ${head}): invalid entry ${value}`);
          badValue = true;
          break;
        }
        if (value < min) min = value;
        if (value > max) max = value;
      }
      if (badValue) continue;
      let maxRowSumError = 0;
      for (let r = 0; r < rows; r++) {
        let sum = 0;
        for (let c = 0; c < cols; c++) sum += values[r * cols + c];
        if (checkRowSums) {
          if (manifest.sliced) {
            // Sliced rows are sub-rows of a distribution: sum <= 1.
            const overshoot = sum - 1;
            if (overshoot > maxRowSumError) maxRowSumError = overshoot;
          } else {
            const err = Math.abs(sum - 1);
            if (err > maxRowSumError) maxRowSumError = err;
          }
        }
      }
      if (checkRowSums && maxRowSumError > tol) {
        issues.push(
          `(${layer}, ${head}): row sums off by ${maxRowSumError.toExponential(3)} ` +
            `(tolerance ${tol.toExponential(0)})`
        );
      }
      summaries.push({ layer, head, min, max, maxRowSumError });
    }
  }
  return { manifest, issues, summaries };
}
