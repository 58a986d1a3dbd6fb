export { decodeCmxe, encodeCmxe, FormatError } from "./cmxe.js";
export type { EmbeddingRecord } from "./cmxe.js";
export { DeterministicHashEncoder, EncoderError, resolveEncoder } from "./encoder.js";
export type { PairEncoder } from "./encoder.js";
export { readManifest, ManifestError } from "./manifest.js";
export type { ManifestEntry } from "./manifest.js";
export { parseReport, ReportError } from "./report.js";
export type { ParsedReport } from "./report.js";
export { runExport, ExportError } from "./export.js";
export type { ExportJob, ExportResult } from "./export.js";
