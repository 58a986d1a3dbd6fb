#!/usr/bin/env node
/**
 * xmodal-export --manifest manifest.jsonl --out corpus.cmxe
 *               [--checkpoint hash-512] [--batch-size 32]
 */

import { ExportError, runExport } from "./export.js";
import { EncoderError } from "./encoder.js";
import { ManifestError } from "./manifest.js";

function parseArgs(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith("--") || value === undefined) {
      throw new Error(`expected --flag value pairs, got ${JSON.stringify(argv)}`);
    }
    flags.set(key.slice(2), value);
  }
  return flags;
}

export function main(argv: string[]): number {
  let flags: Map<string, string>;
  try {
    flags = parseArgs(argv);
  } catch (error) {
    console.error((error as Error).message);
    console.error("usage: xmodal-export --manifest FILE --out FILE [--checkpoint hash-512] [--batch-size 32]");
    return 1;
  }
  const manifest = flags.get("manifest");
  const out = flags.get("out");
  if (!manifest || !out) {
    console.error("usage: xmodal-export --manifest FILE --out FILE [--checkpoint hash-512] [--batch-size 32]");
    return 1;
  }
  try {
    const result = runExport({
      manifestPath: manifest,
      outPath: out,
      checkpointId: flags.get("checkpoint") ?? "hash-512",
      batchSize: flags.has("batch-size") ? Number(flags.get("batch-size")) : undefined,
    });
    console.log(
      `wrote ${result.written} records to ${result.outPath} ` +
        `(${result.skipped.length} skipped); metadata in ${result.sidecarPath}`
    );
    return 0;
  } catch (error) {
    if (error instanceof ExportError || error instanceof EncoderError || error instanceof ManifestError) {
      console.error(`error: ${(error as Error).message}`);
      return 2;
    }
    throw error;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
