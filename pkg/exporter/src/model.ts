/**
 * Minimal decoder-only transformer with attention capture.
 *
 * A GPT-style stack (pre-LN, causal multi-head self-attention, GELU MLP)
 * small enough to run a forward pass in plain Float64Array math. Weights
 * are drawn deterministically from a seed, so a given (config, seed,
 * tokens) triple always produces bit-identical attention maps. The only
 * output anyone consumes is the per-(layer, head) post-softmax probability
 * matrix; pre-softmax scores can be captured too for fixture work.
 */

import { Rng } from "./rng.js";

export interface ModelConfig {
  nLayers: number;
  nHeads: number;
  dModel: number;
  vocabSize: number;
  maxSeq: number;
}

/** Built-in architectures; weights are seeded, not pretrained (offline use). */
export const MODEL_REGISTRY: Record<string, ModelConfig> = {
  "toy-2l2h": { nLayers: 2, nHeads: 2, dModel: 32, vocabSize: 256, maxSeq: 128 },
  "mini-4l4h": { nLayers: 4, nHeads: 4, dModel: 64, vocabSize: 512, maxSeq: 256 },
};

export interface ForwardResult {
  /** attentions[layer][head]: row-major seqLen x seqLen probabilities. */
  attentions: Float64Array[][];
  /** Masked pre-softmax scores, same layout; -Infinity above the diagonal. */
  scores: Float64Array[][];
  seqLen: number;
}

interface LayerWeights {
  ln1Gamma: Float64Array;
  ln1Beta: Float64Array;
  wq: Float64Array;
  wk: Float64Array;
  wv: Float64Array;
  wo: Float64Array;
  ln2Gamma: Float64Array;
  ln2Beta: Float64Array;
  w1: Float64Array; // dModel x 4*dModel
  b1: Float64Array;
  w2: Float64Array; // 4*dModel x dModel
  b2: Float64Array;
}

function initMatrix(rng: Rng, rows: number, cols: number, std = 0.02): Float64Array {
  const out = new Float64Array(rows * cols);
  for (let i = 0; i < out.length; i++) out[i] = rng.normal() * std;
  return out;
}

function ones(n: number): Float64Array {
  return new Float64Array(n).fill(1);
}

/** y = layerNorm(x) * gamma + beta, row-wise over dModel. */
function layerNorm(
  x: Float64Array,
  seqLen: number,
  dim: number,
  gamma: Float64Array,
  beta: Float64Array
): Float64Array {
  const out = new Float64Array(seqLen * dim);
  for (let t = 0; t < seqLen; t++) {
    let mean = 0;
    for (let d = 0; d < dim; d++) mean += x[t * dim + d];
    mean /= dim;
    let variance = 0;
    for (let d = 0; d < dim; d++) {
      const diff = x[t * dim + d] - mean;
      variance += diff * diff;
    }
    variance /= dim;
    const inv = 1 / Math.sqrt(variance + 1e-5);
    for (let d = 0; d < dim; d++) {
      out[t * dim + d] = (x[t * dim + d] - mean) * inv * gamma[d] + beta[d];
    }
  }
  return out;
}

/** out[t, :] = x[t, :] @ w (w is dIn x dOut, row-major). */
function matmul(
  x: Float64Array,
  seqLen: number,
  dIn: number,
  w: Float64Array,
  dOut: number
): Float64Array {
  const out = new Float64Array(seqLen * dOut);
  for (let t = 0; t < seqLen; t++) {
    for (let i = 0; i < dIn; i++) {
      const xi = x[t * dIn + i];
      if (xi === 0) continue;
      const wRow = i * dOut;
      for (let j = 0; j < dOut; j++) {
        out[t * dOut + j] += xi * w[wRow + j];
      }
    }
  }
  return out;
}

function gelu(v: number): number {
  return 0.5 * v * (1 + Math.tanh(Math.sqrt(2 / Math.PI) * (v + 0.044715 * v * v * v)));
}

export class TinyDecoderLM {
  readonly config: ModelConfig;
  private readonly wte: Float64Array;
  private readonly wpe: Float64Array;
  private readonly layers: LayerWeights[];

  constructor(config: ModelConfig, seed = 0) {
    if (config.dModel % config.nHeads !== 0) {
      throw new Error(`dModel ${config.dModel} not divisible by nHeads ${config.nHeads}`);
    }
    this.config = config;
    const rng = new Rng(seed);
    this.wte = initMatrix(rng, config.vocabSize, config.dModel);
    this.wpe = initMatrix(rng, config.maxSeq, config.dModel);
    this.layers = [];
    for (let l = 0; l < config.nLayers; l++) {
      this.layers.push({
        ln1Gamma: ones(config.dModel),
        ln1Beta: new Float64Array(config.dModel),
        wq: initMatrix(rng, config.dModel, config.dModel),
        wk: initMatrix(rng, config.dModel, config.dModel),
        wv: initMatrix(rng, config.dModel, config.dModel),
        wo: initMatrix(rng, config.dModel, config.dModel),
        ln2Gamma: ones(config.dModel),
        ln2Beta: new Float64Array(config.dModel),
        w1: initMatrix(rng, config.dModel, 4 * config.dModel),
        b1: new Float64Array(4 * config.dModel),
        w2: initMatrix(rng, 4 * config.dModel, config.dModel),
        b2: new Float64Array(config.dModel),
      });
    }
  }

  forward(tokens: number[]): ForwardResult {
    const { nLayers, nHeads, dModel, vocabSize, maxSeq } = this.config;
    const seqLen = tokens.length;
    if (seqLen === 0) throw new Error("empty token sequence");
    if (seqLen > maxSeq) throw new Error(`sequence length ${seqLen} exceeds maxSeq ${maxSeq}`);
    tokens.forEach((tok, i) => {
      if (!Number.isInteger(tok) || tok < 0 || tok >= vocabSize) {
        throw new Error(`token ${tok} at position ${i} outside [0, ${vocabSize})`);
      }
    });
    const dHead = dModel / nHeads;
    const scale = 1 / Math.sqrt(dHead);

    let x = new Float64Array(seqLen * dModel);
    for (let t = 0; t < seqLen; t++) {
      for (let d = 0; d < dModel; d++) {
        x[t * dModel + d] = this.wte[tokens[t] * dModel + d] + this.wpe[t * dModel + d];
      }
    }

    const attentions: Float64Array[][] = [];
    const scores: Float64Array[][] = [];
    for (let l = 0; l < nLayers; l++) {
      const w = this.layers[l];
      const h = layerNorm(x, seqLen, dModel, w.ln1Gamma, w.ln1Beta);
      const q = matmul(h, seqLen, dModel, w.wq, dModel);
      const k = matmul(h, seqLen, dModel, w.wk, dModel);
      const v = matmul(h, seqLen, dModel, w.wv, dModel);

      const layerAttn: Float64Array[] = [];
      const layerScores: Float64Array[] = [];
      const context = new Float64Array(seqLen * dModel);
      for (let head = 0; head < nHeads; head++) {
        const probs = new Float64Array(seqLen * seqLen);
        const raw = new Float64Array(seqLen * seqLen).fill(-Infinity);
        const offset = head * dHead;
        for (let i = 0; i < seqLen; i++) {
          let maxScore = -Infinity;
          for (let j = 0; j <= i; j++) {
            let dot = 0;
            for (let d = 0; d < dHead; d++) {
              dot += q[i * dModel + offset + d] * k[j * dModel + offset + d];
            }
            const s = dot * scale;
            raw[i * seqLen + j] = s;
            if (s > maxScore) maxScore = s;
          }
          let denom = 0;
          for (let j = 0; j <= i; j++) {
            const e = Math.exp(raw[i * seqLen + j] - maxScore);
            probs[i * seqLen + j] = e;
            denom += e;
          }
          for (let j = 0; j <= i; j++) {
            probs[i * seqLen + j] /= denom;
            const p = probs[i * seqLen + j];
            for (let d = 0; d < dHead; d++) {
              context[i * dModel + offset + d] += p * v[j * dModel + offset + d];
            }
          }
        }
        layerAttn.push(probs);
        layerScores.push(raw);
      }
      attentions.push(layerAttn);
      scores.push(layerScores);

      const attnOut = matmul(context, seqLen, dModel, w.wo, dModel);
      for (let i = 0; i < x.length; i++) x[i] += attnOut[i];

      const h2 = layerNorm(x, seqLen, dModel, w.ln2Gamma, w.ln2Beta);
      const inner = matmul(h2, seqLen, dModel, w.w1, 4 * dModel);
      for (let i = 0; i < inner.length; i++) inner[i] = gelu(inner[i] + w.b1[i % (4 * dModel)]);
      const mlpOut = matmul(inner, seqLen, 4 * dModel, w.w2, dModel);
      for (let i = 0; i < x.length; i++) x[i] += mlpOut[i] + w.b2[i % dModel];
    }

    return { attentions, scores, seqLen };
  }
}

export function resolveModel(id: string): ModelConfig {
  const config = MODEL_REGISTRY[id];
  if (!config) {
    throw new Error(
      `unknown model id ${JSON.stringify(id)}; known: ${Object.keys(MODEL_REGISTRY).join(", ")}`
    );
  }
  return config;
}
