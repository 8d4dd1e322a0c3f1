import * as fs from "node:fs";
import * as path from "node:path";
import * as os from "node:os";

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { main } from "../src/cli.js";

let workDir: string;

beforeEach(() => {
  workDir = fs.mkdtempSync(path.join(os.tmpdir(), "attn-exporter-cli-"));
  vi.spyOn(console, "log").mockImplementation(() => {});
  vi.spyOn(console, "error").mockImplementation(() => {});
});

afterEach(() => {
  fs.rmSync(workDir, { recursive: true, force: true });
  vi.restoreAllMocks();
});

function writeTokens(name: string, payload: unknown): string {
  const file = path.join(workDir, name);
  fs.writeFileSync(file, JSON.stringify(payload));
  return file;
}

describe("cli", () => {
  it("exports and verifies a dump end to end", () => {
    const tokens = writeTokens("tokens.json", {
      utterance_id: "cli-utt",
      tokens: [1, 2, 3, 4, 5, 6, 7, 8],
    });
    const out = path.join(workDir, "dump");
    const code = main([
      "export",
      "--model", "toy-2l2h",
      "--input", tokens,
      "--text-span", "0", "3",
      "--speech-span", "3", "8",
      "--out", out,
      "--seed", "2",
    ]);
    expect(code).toBe(0);
    const manifest = JSON.parse(fs.readFileSync(path.join(out, "manifest.json"), "utf-8"));
    expect(manifest.utterance_id).toBe("cli-utt");
    expect(manifest.seq_len).toBe(8);
    expect(main(["verify", "--dump", out])).toBe(0);
  });

  it("accepts a bare token array and the sliced/f64 flags", () => {
    const tokens = writeTokens("bare.json", [4, 4, 4, 4, 4, 4]);
    const out = path.join(workDir, "dump64");
    const code = main([
      "export",
      "--model", "toy-2l2h",
      "--input", tokens,
      "--text-span", "0", "2",
      "--speech-span", "2", "6",
      "--out", out,
      "--sliced",
      "--dtype", "f64",
    ]);
    expect(code).toBe(0);
    const manifest = JSON.parse(fs.readFileSync(path.join(out, "manifest.json"), "utf-8"));
    expect(manifest.sliced).toBe(true);
    expect(manifest.dtype).toBe("f64");
    expect(fs.statSync(path.join(out, "attn_L0_H0.bin")).size).toBe(4 * 2 * 8);
    expect(main(["verify", "--dump", out])).toBe(0);
  });

  it("fails verification after corruption", () => {
    const tokens = writeTokens("tokens.json", [1, 2, 3, 4, 5, 6]);
    const out = path.join(workDir, "dump");
    main([
      "export",
      "--model", "toy-2l2h",
      "--input", tokens,
      "--text-span", "0", "2",
      "--speech-span", "2", "6",
      "--out", out,
    ]);
    fs.writeFileSync(path.join(out, "attn_L0_H0.bin"), Buffer.alloc(3));
    expect(main(["verify", "--dump", out])).toBe(1);
  });

  it("reports usage errors", () => {
    expect(main(["export", "--model", "toy-2l2h"])).toBe(1); // missing flags
    expect(main(["transmogrify"])).toBe(2);
    const tokens = writeTokens("tokens.json", [1, 2, 3]);
    expect(
      main([
        "export",
        "--model", "toy-2l2h",
        "--input", tokens,
        "--text-span", "0", "9",
        "--speech-span", "2", "3",
        "--out", path.join(workDir, "x"),
      ])
    ).toBe(1);
  });

  it("requires --sliced for --logits", () => {
    const tokens = writeTokens("tokens.json", [1, 2, 3, 4, 5, 6]);
    expect(
      main([
        "export",
        "--model", "toy-2l2h",
        "--input", tokens,
        "--text-span", "0", "2",
        "--speech-span", "2", "6",
        "--out", path.join(workDir, "lg"),
        "--logits",
      ])
    ).toBe(1);
    expect(
      main([
        "export",
        "--model", "toy-2l2h",
        "--input", tokens,
        "--text-span", "0", "2",
        "--speech-span", "2", "6",
        "--out", path.join(workDir, "lg"),
        "--logits",
        "--sliced",
        "--dtype", "f64",
      ])
    ).toBe(0);
    const manifest = JSON.parse(
      fs.readFileSync(path.join(workDir, "lg", "manifest.json"), "utf-8")
    );
    expect(manifest.content).toBe("logits_shifted");
  });
});
