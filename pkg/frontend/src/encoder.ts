/**
 * Pluggable pair encoders. The export pipeline only depends on this
 * interface; checkpoint-backed encoders (CLIP-family vision/text pairs)
 * plug in behind resolveEncoder without touching the pipeline.
 *
 * The built-in "hash-512" encoder is a fully offline, deterministic
 * stand-in: it expands a content digest into a 512-dim pseudo-random
 * vector. It carries no semantics but exercises the entire pipeline,
 * file format, and downstream toolkit, and identical inputs always map
 * to identical vectors.
 */

import { createHash } from "node:crypto";

export interface PairEncoder {
  readonly id: string;
  readonly dim: number;
  encodeImage(imageBytes: Buffer): Float32Array;
  encodeText(text: string): Float32Array;
  preprocessing(): string;
}

export class EncoderError extends Error {}

/** Expand a seed digest into `dim` floats in (-1, 1) via counter-mode hashing. */
function digestToVector(seed: Buffer, dim: number): Float32Array {
  const out = new Float32Array(dim);
  let filled = 0;
  let counter = 0;
  while (filled < dim) {
    const block = createHash("sha256")
      .update(seed)
      .update(Buffer.from(String(counter)))
      .digest();
    for (let offset = 0; offset + 4 <= block.length && filled < dim; offset += 4) {
      const raw = block.readUInt32LE(offset);
      out[filled] = (raw / 0xffffffff) * 2 - 1;
      filled += 1;
    }
    counter += 1;
  }
  return out;
}

export class DeterministicHashEncoder implements PairEncoder {
  readonly id = "hash-512";
  readonly dim = 512;

  encodeImage(imageBytes: Buffer): Float32Array {
    if (imageBytes.length === 0) {
      throw new EncoderError("empty image file");
    }
    const seed = createHash("sha256").update("image").update(imageBytes).digest();
    return digestToVector(seed, this.dim);
  }

  encodeText(text: string): Float32Array {
    const normalized = text.replace(/\s+/g, " ").trim().toLowerCase();
    if (!normalized) {
      throw new EncoderError("empty caption");
    }
    const seed = createHash("sha256").update("text").update(normalized, "utf-8").digest();
    return digestToVector(seed, this.dim);
  }

  preprocessing(): string {
    return "raw image bytes and whitespace-normalized lowercased caption, sha256 content fingerprint expanded to 512 floats";
  }
}

export function resolveEncoder(checkpointId: string): PairEncoder {
  if (checkpointId === "hash-512") {
    return new DeterministicHashEncoder();
  }
  throw new EncoderError(
    `checkpoint ${JSON.stringify(checkpointId)} requires model assets that are not bundled; ` +
      "implement PairEncoder for it or use 'hash-512' for offline runs"
  );
}
