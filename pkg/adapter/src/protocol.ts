/**
 * Wire protocol types and pixel-buffer codecs.
 *
 * One JSON object per line on stdin/stdout:
 *
 *   -> {"type":"hello","version":1}
 *   <- {"type":"hello","version":1,"classes":[...],"width":W,"height":H,
 *       "channels":C,"concurrent":false}
 *   -> {"type":"classify","id":n,"images":[<base64 float32 LE>, ...]}
 *   <- {"type":"result","id":n,"probs":[[...], ...]}
 *   -> {"type":"shutdown"}   (process exits 0)
 *
 * Pixel buffers are row-major, channel-interleaved little-endian float32.
 */

export const PROTOCOL_VERSION = 1;

export interface HelloRequest {
  type: "hello";
  version: number;
}

export interface ClassifyRequest {
  type: "classify";
  id: number;
  images: string[];
}

export interface ShutdownRequest {
  type: "shutdown";
}

export type Request = HelloRequest | ClassifyRequest | ShutdownRequest;

export interface HelloReply {
  type: "hello";
  version: number;
  classes: string[];
  width: number;
  height: number;
  channels: number;
  concurrent: boolean;
}

export interface ResultReply {
  type: "result";
  id: number;
  probs: number[][];
}

export interface ErrorReply {
  type: "error";
  id: number | null;
  message: string;
}

export type Reply = HelloReply | ResultReply | ErrorReply;

const BASE64_STRICT = /^[A-Za-z0-9+/]*={0,2}$/;

/** Decode a base64 pixel buffer, checking shape and value sanity. */
export function decodePixels(b64: string, pixelCount: number): Float32Array {
  if (!BASE64_STRICT.test(b64) || b64.length % 4 !== 0) {
    throw new Error("pixel buffer is not valid base64");
  }
  const raw = Buffer.from(b64, "base64");
  if (raw.length !== pixelCount * 4) {
    throw new Error(
      `pixel buffer has ${raw.length} bytes, expected ${pixelCount * 4}`,
    );
  }
  // Copy to a fresh ArrayBuffer so the Float32Array view is aligned.
  const aligned = new Uint8Array(raw).buffer;
  const pixels = new Float32Array(aligned);
  for (const v of pixels) {
    if (!Number.isFinite(v)) {
      throw new Error("pixel buffer contains non-finite values");
    }
  }
  return pixels;
}

export function encodePixels(pixels: Float32Array): string {
  return Buffer.from(pixels.buffer, pixels.byteOffset, pixels.byteLength).toString(
    "base64",
  );
}

/** A distribution is finite, nonnegative, and sums to 1 within 1e-6. */
export function checkDistribution(probs: number[], k: number): number[] {
  if (probs.length !== k) {
    throw new Error(`predict returned ${probs.length} probabilities, expected ${k}`);
  }
  let total = 0;
  for (const p of probs) {
    if (!Number.isFinite(p) || p < 0) {
      throw new Error(`predict returned an invalid probability ${p}`);
    }
    total += p;
  }
  if (Math.abs(total - 1) > 1e-6) {
    throw new Error(`predict distribution sums to ${total}, not 1 within 1e-6`);
  }
  return probs;
}
