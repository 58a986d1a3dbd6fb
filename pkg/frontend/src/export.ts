/**
 * The export job: manifest in, CMXE plus a sidecar metadata file out.
 * Unreadable or unusable records are skipped with a logged id; records
 * are written strictly in manifest order so re-runs are byte-identical.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { EmbeddingRecord, encodeCmxe } from "./cmxe.js";
import { EncoderError, PairEncoder, resolveEncoder } from "./encoder.js";
import { ManifestEntry, readManifest } from "./manifest.js";
import { parseReport, ReportError } from "./report.js";

export interface ExportJob {
  manifestPath: string;
  checkpointId: string;
  outPath: string;
  batchSize?: number;
}

export interface ExportResult {
  written: number;
  skipped: string[];
  outPath: string;
  sidecarPath: string;
}

export class ExportError extends Error {}

export type Logger = (message: string) => void;

function encodeEntry(encoder: PairEncoder, entry: ManifestEntry): EmbeddingRecord {
  const xml = readFileSync(entry.report_path, "utf-8");
  const report = parseReport(xml);
  const imageBytes = entry.image_path !== undefined ? readFileSync(entry.image_path) : Buffer.alloc(0);
  return {
    studyId: entry.study_id,
    label: report.label,
    image: encoder.encodeImage(imageBytes),
    text: encoder.encodeText(report.caption),
  };
}

export function runExport(job: ExportJob, log: Logger = console.error): ExportResult {
  const encoder = resolveEncoder(job.checkpointId);
  const entries = readManifest(job.manifestPath);
  const batchSize = job.batchSize ?? 32;

  const records: EmbeddingRecord[] = [];
  const skipped: string[] = [];
  // Records land in manifest order regardless of batch boundaries.
  for (let start = 0; start < entries.length; start += batchSize) {
    for (const entry of entries.slice(start, start + batchSize)) {
      try {
        records.push(encodeEntry(encoder, entry));
      } catch (error) {
        if (error instanceof ReportError || error instanceof EncoderError || isFsError(error)) {
          skipped.push(entry.study_id);
          log(`skipping ${entry.study_id}: ${(error as Error).message}`);
        } else {
          throw error;
        }
      }
    }
  }

  if (records.length === 0) {
    throw new ExportError("no exportable records in manifest");
  }

  writeFileSync(job.outPath, encodeCmxe(encoder.dim, records));
  const sidecarPath = `${job.outPath}.meta.json`;
  const sidecar = {
    checkpoint: encoder.id,
    dim: encoder.dim,
    preprocessing: encoder.preprocessing(),
    exported_at: new Date().toISOString(),
    records: records.length,
    skipped,
  };
  writeFileSync(sidecarPath, `${JSON.stringify(sidecar, null, 2)}\n`);
  return { written: records.length, skipped, outPath: job.outPath, sidecarPath };
}

function isFsError(error: unknown): boolean {
  return typeof error === "object" && error !== null && "code" in error;
}
