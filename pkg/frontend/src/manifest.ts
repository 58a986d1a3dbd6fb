/** JSONL manifest of {study_id, image_path, report_path} entries. */

import { readFileSync } from "node:fs";

export interface ManifestEntry {
  study_id: string;
  report_path: string;
  image_path?: string;
}

export class ManifestError extends Error {}

export function readManifest(path: string): ManifestEntry[] {
  const entries: ManifestEntry[] = [];
  const lines = readFileSync(path, "utf-8").split("\n");
  lines.forEach((line, index) => {
    const trimmed = line.trim();
    if (!trimmed) return;
    let parsed: unknown;
    try {
      parsed = JSON.parse(trimmed);
    } catch {
      throw new ManifestError(`manifest line ${index + 1} is not valid JSON`);
    }
    const entry = parsed as Record<string, unknown>;
    if (typeof entry.study_id !== "string" || typeof entry.report_path !== "string") {
      throw new ManifestError(`manifest line ${index + 1} needs string study_id and report_path`);
    }
    entries.push({
      study_id: entry.study_id,
      report_path: entry.report_path,
      image_path: typeof entry.image_path === "string" ? entry.image_path : undefined,
    });
  });
  return entries;
}
