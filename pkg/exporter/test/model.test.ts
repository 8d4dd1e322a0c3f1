import { describe, expect, it } from "vitest";

import { TinyDecoderLM, resolveModel } from "../src/model.js";

const TOKENS = [3, 1, 4, 1, 5, 9, 2, 6, 5, 3];

describe("TinyDecoderLM.forward", () => {
  it("produces row-stochastic causal attention in every head", () => {
    const model = new TinyDecoderLM(resolveModel("toy-2l2h"), 1);
    const { attentions, seqLen } = model.forward(TOKENS);
    expect(attentions).toHaveLength(2);
    for (const layer of attentions) {
      expect(layer).toHaveLength(2);
      for (const probs of layer) {
        for (let i = 0; i < seqLen; i++) {
          let sum = 0;
          for (let j = 0; j < seqLen; j++) {
            const p = probs[i * seqLen + j];
            if (j > i) {
              expect(p).toBe(0);
            } else {
              expect(p).toBeGreaterThanOrEqual(0);
            }
            sum += p;
          }
          expect(Math.abs(sum - 1)).toBeLessThan(1e-12);
        }
      }
    }
  });

  it("is deterministic for a fixed seed and differs across seeds", () => {
    const config = resolveModel("toy-2l2h");
    const a = new TinyDecoderLM(config, 7).forward(TOKENS);
    const b = new TinyDecoderLM(config, 7).forward(TOKENS);
    const c = new TinyDecoderLM(config, 8).forward(TOKENS);
    expect(a.attentions[1][0]).toEqual(b.attentions[1][0]);
    let different = false;
    for (let i = 0; i < a.attentions[1][0].length; i++) {
      if (a.attentions[1][0][i] !== c.attentions[1][0][i]) {
        different = true;
        break;
      }
    }
    expect(different).toBe(true);
  });

  it("captures scores whose softmax reproduces the probabilities", () => {
    const model = new TinyDecoderLM(resolveModel("toy-2l2h"), 3);
    const { attentions, scores, seqLen } = model.forward(TOKENS);
    const probs = attentions[0][1];
    const raw = scores[0][1];
    for (let i = 0; i < seqLen; i++) {
      let max = -Infinity;
      for (let j = 0; j <= i; j++) max = Math.max(max, raw[i * seqLen + j]);
      let denom = 0;
      const row = new Float64Array(i + 1);
      for (let j = 0; j <= i; j++) {
        row[j] = Math.exp(raw[i * seqLen + j] - max);
        denom += row[j];
      }
      for (let j = 0; j <= i; j++) {
        expect(Math.abs(row[j] / denom - probs[i * seqLen + j])).toBeLessThan(1e-12);
      }
    }
  });

  it("rejects bad inputs", () => {
    const model = new TinyDecoderLM(resolveModel("toy-2l2h"), 0);
    expect(() => model.forward([])).toThrow(/empty/);
    expect(() => model.forward([999])).toThrow(/outside/);
    expect(() => model.forward(new Array(500).fill(1))).toThrow(/maxSeq/);
    expect(() => resolveModel("nope")).toThrow(/unknown model/);
  });
});
