/**
 * Built-in models and the model-spec loader.
 *
 * Specs:
 *   constant:<p1,p2,...>   fixed distribution (classes default c0..cK-1)
 *   linear:<weights.lsw>   linear softmax over flattened pixels (LSW1 file)
 *   module:<path.js>       dynamic import; default export is an AdapterConfig
 */

import { readFileSync } from "node:fs";
import { pathToFileURL } from "node:url";

export type PredictFn = (pixels: Float32Array) => number[] | Promise<number[]>;

export interface AdapterConfig {
  classes: string[];
  width: number;
  height: number;
  channels: number;
  concurrent?: boolean;
  predict: PredictFn;
}

export interface ModelOptions {
  classes?: string[];
  width: number;
  height: number;
  channels: number;
  concurrent?: boolean;
}

function defaultClasses(k: number, given?: string[]): string[] {
  if (given) {
    if (given.length !== k) {
      throw new Error(`--classes names ${given.length} classes, model has ${k}`);
    }
    return given;
  }
  return Array.from({ length: k }, (_, i) => `c${i}`);
}

export function constantModel(probs: number[], opts: ModelOptions): AdapterConfig {
  return {
    classes: defaultClasses(probs.length, opts.classes),
    width: opts.width,
    height: opts.height,
    channels: opts.channels,
    concurrent: opts.concurrent ?? false,
    predict: () => probs,
  };
}

export interface LinearWeights {
  k: number;
  d: number;
  weights: number[][]; // k rows of d
  bias: number[];
}

/** Parse the LSW1 text format: `LSW1 K D`, then K rows of D+1 decimals. */
export function parseLsw1(text: string): LinearWeights {
  const tokens = text.trim().split(/\s+/);
  if (tokens[0] !== "LSW1" || tokens.length < 3) {
    throw new Error("not an LSW1 weights file");
  }
  const k = Number(tokens[1]);
  const d = Number(tokens[2]);
  const values = tokens.slice(3).map(Number);
  if (values.length !== k * (d + 1) || values.some((v) => !Number.isFinite(v))) {
    throw new Error(`LSW1 body must hold ${k}x${d + 1} finite values`);
  }
  const weights: number[][] = [];
  const bias: number[] = [];
  for (let row = 0; row < k; row++) {
    const start = row * (d + 1);
    weights.push(values.slice(start, start + d));
    bias.push(values[start + d]);
  }
  return { k, d, weights, bias };
}

export function softmax(logits: number[]): number[] {
  const max = Math.max(...logits);
  const exp = logits.map((z) => Math.exp(z - max));
  const total = exp.reduce((a, b) => a + b, 0);
  return exp.map((e) => e / total);
}

export function linearModel(path: string, opts: ModelOptions): AdapterConfig {
  const { k, d, weights, bias } = parseLsw1(readFileSync(path, "utf8"));
  const expected = opts.width * opts.height * opts.channels;
  if (d !== expected) {
    throw new Error(
      `weights expect ${d} features but ${opts.width}x${opts.height}x${opts.channels} gives ${expected}`,
    );
  }
  return {
    classes: defaultClasses(k, opts.classes),
    width: opts.width,
    height: opts.height,
    channels: opts.channels,
    concurrent: opts.concurrent ?? false,
    predict: (pixels) => {
      const logits = bias.slice();
      for (let row = 0; row < k; row++) {
        const w = weights[row];
        let acc = logits[row];
        for (let j = 0; j < d; j++) {
          acc += w[j] * pixels[j];
        }
        logits[row] = acc;
      }
      return softmax(logits);
    },
  };
}

async function moduleModel(path: string, opts: Partial<ModelOptions>): Promise<AdapterConfig> {
  const mod = await import(pathToFileURL(path).href);
  const config: AdapterConfig = mod.default ?? mod;
  for (const field of ["classes", "width", "height", "channels", "predict"] as const) {
    if (config[field] === undefined) {
      throw new Error(`module model is missing '${field}'`);
    }
  }
  return { concurrent: false, ...config, ...optsOverride(opts) };
}

function optsOverride(opts: Partial<ModelOptions>): Partial<AdapterConfig> {
  const out: Partial<AdapterConfig> = {};
  if (opts.concurrent !== undefined) out.concurrent = opts.concurrent;
  return out;
}

export async function loadModel(
  spec: string,
  opts: ModelOptions,
): Promise<AdapterConfig> {
  const sep = spec.indexOf(":");
  const kind = sep < 0 ? spec : spec.slice(0, sep);
  const rest = sep < 0 ? "" : spec.slice(sep + 1);
  switch (kind) {
    case "constant": {
      const probs = rest.split(",").map(Number);
      if (probs.length < 2 || probs.some((p) => !Number.isFinite(p))) {
        throw new Error(`bad constant distribution '${rest}'`);
      }
      return constantModel(probs, opts);
    }
    case "linear":
      return linearModel(rest, opts);
    case "module":
      return moduleModel(rest, opts);
    default:
      throw new Error(`unknown model spec '${spec}' (constant:, linear:, module:)`);
  }
}
