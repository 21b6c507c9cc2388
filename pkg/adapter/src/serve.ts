/**
 * Request loop: read line-delimited JSON requests from stdin, answer on
 * stdout, exit 0 on shutdown. Requests are handled one at a time; a predict
 * failure produces an error reply carrying the request id and the loop
 * keeps serving.
 */

import * as readline from "node:readline";
import type { AdapterConfig } from "./models.js";
import {
  PROTOCOL_VERSION,
  Reply,
  checkDistribution,
  decodePixels,
} from "./protocol.js";

function writeReply(out: NodeJS.WritableStream, reply: Reply): void {
  out.write(`${JSON.stringify(reply)}\n`);
}

export async function serve(
  config: AdapterConfig,
  input: NodeJS.ReadableStream = process.stdin,
  output: NodeJS.WritableStream = process.stdout,
): Promise<void> {
  const pixelCount = config.width * config.height * config.channels;
  const rl = readline.createInterface({ input, crlfDelay: Infinity });

  for await (const line of rl) {
    if (!line.trim()) {
      continue;
    }
    let message: any;
    try {
      message = JSON.parse(line);
    } catch {
      writeReply(output, { type: "error", id: null, message: "invalid JSON" });
      continue;
    }
    const id = typeof message?.id === "number" ? message.id : null;
    switch (message?.type) {
      case "hello":
        if (message.version !== PROTOCOL_VERSION) {
          writeReply(output, {
            type: "error",
            id,
            message: `unsupported protocol version ${message.version}`,
          });
          break;
        }
        writeReply(output, {
          type: "hello",
          version: PROTOCOL_VERSION,
          classes: config.classes,
          width: config.width,
          height: config.height,
          channels: config.channels,
          concurrent: config.concurrent ?? false,
        });
        break;
      case "classify": {
        try {
          if (!Array.isArray(message.images)) {
            throw new Error("classify request has no images array");
          }
          const probs: number[][] = [];
          for (const b64 of message.images) {
            if (typeof b64 !== "string") {
              throw new Error("image entries must be base64 strings");
            }
            const pixels = decodePixels(b64, pixelCount);
            const raw = await config.predict(pixels);
            probs.push(checkDistribution(Array.from(raw), config.classes.length));
          }
          writeReply(output, { type: "result", id: id ?? -1, probs });
        } catch (err) {
          writeReply(output, { type: "error", id, message: String(err) });
        }
        break;
      }
      case "shutdown":
        rl.close();
        return;
      default:
        writeReply(output, {
          type: "error",
          id,
          message: `unknown request type '${message?.type}'`,
        });
    }
  }
}
