#!/usr/bin/env node
/**
 * Entry point: `pda-adapter <model-spec> [options]`
 *
 *   pda-adapter constant:0.2,0.8 --classes bg,fg --width 32 --height 32
 *   pda-adapter linear:weights.lsw --width 32 --height 32 --channels 1
 *   pda-adapter module:./my-model.mjs
 *
 * The process then speaks the classifier protocol on stdin/stdout until it
 * receives a shutdown request.
 */

import { loadModel } from "./models.js";
import { serve } from "./serve.js";

interface CliArgs {
  spec: string;
  classes?: string[];
  width: number;
  height: number;
  channels: number;
  concurrent?: boolean;
}

const USAGE =
  "usage: pda-adapter <constant:p1,p2,..|linear:FILE|module:FILE> " +
  "[--classes a,b,..] [--width N] [--height N] [--channels N] [--concurrent]";

function parseArgs(argv: string[]): CliArgs {
  const args: CliArgs = { spec: "", width: 32, height: 32, channels: 1 };
  const positional: string[] = [];
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) throw new Error(`${arg} needs a value`);
      return argv[++i];
    };
    switch (arg) {
      case "--classes":
        args.classes = next().split(",");
        break;
      case "--width":
        args.width = Number(next());
        break;
      case "--height":
        args.height = Number(next());
        break;
      case "--channels":
        args.channels = Number(next());
        break;
      case "--concurrent":
        args.concurrent = true;
        break;
      case "--help":
      case "-h":
        console.log(USAGE);
        process.exit(0);
        break;
      default:
        positional.push(arg);
    }
  }
  if (positional.length !== 1) {
    throw new Error(USAGE);
  }
  args.spec = positional[0];
  for (const dim of ["width", "height", "channels"] as const) {
    if (!Number.isInteger(args[dim]) || args[dim] < 1) {
      throw new Error(`--${dim} must be a positive integer`);
    }
  }
  return args;
}

async function main(): Promise<number> {
  try {
    const args = parseArgs(process.argv.slice(2));
    const config = await loadModel(args.spec, {
      classes: args.classes,
      width: args.width,
      height: args.height,
      channels: args.channels,
      concurrent: args.concurrent,
    });
    console.error(
      `adapter ready: K=${config.classes.length} ` +
        `${config.width}x${config.height}x${config.channels}`,
    );
    await serve(config);
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
}

main().then((code) => process.exit(code));
