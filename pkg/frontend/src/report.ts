/**
 * OpenI-style report extraction: findings/impression sections from
 * AbstractText elements, binary label from major indexing terms.
 * Mirrors the rules of the Python toolkit so both sides agree on
 * captions and labels.
 */

export interface ParsedReport {
  findings: string;
  impression: string;
  caption: string;
  /** 0 = normal, 1 = abnormal */
  label: 0 | 1;
}

export class ReportError extends Error {}

const ENTITIES: Record<string, string> = {
  "&amp;": "&",
  "&lt;": "<",
  "&gt;": ">",
  "&quot;": '"',
  "&apos;": "'",
};

function decodeEntities(text: string): string {
  return text
    .replace(/&#x([0-9a-fA-F]+);/g, (_, hex) => String.fromCodePoint(parseInt(hex, 16)))
    .replace(/&#(\d+);/g, (_, dec) => String.fromCodePoint(parseInt(dec, 10)))
    .replace(/&(amp|lt|gt|quot|apos);/g, (m) => ENTITIES[m]);
}

function squashWhitespace(text: string): string {
  return text.replace(/\s+/g, " ").trim();
}

function stripTags(text: string): string {
  return text.replace(/<[^>]*>/g, " ");
}

/** All inner texts of elements with the given tag name (case-insensitive). */
function elementTexts(xml: string, tag: string): string[] {
  const pattern = new RegExp(`<${tag}\\b[^>]*>([\\s\\S]*?)</${tag}>`, "gi");
  const out: string[] = [];
  for (const match of xml.matchAll(pattern)) {
    out.push(squashWhitespace(decodeEntities(stripTags(match[1]))));
  }
  return out;
}

/** Inner texts of AbstractText elements whose label attribute matches. */
function sectionTexts(xml: string, label: string): string[] {
  const pattern = /<AbstractText\b([^>]*)>([\s\S]*?)<\/AbstractText>/gi;
  const out: string[] = [];
  for (const match of xml.matchAll(pattern)) {
    const attr = /\blabel\s*=\s*["']([^"']*)["']/i.exec(match[1]);
    if (attr && attr[1].toUpperCase() === label) {
      const text = squashWhitespace(decodeEntities(stripTags(match[2])));
      if (text) out.push(text);
    }
  }
  return out;
}

export function parseReport(xml: string): ParsedReport {
  if (!/</.test(xml)) {
    throw new ReportError("report does not look like markup");
  }
  const findings = sectionTexts(xml, "FINDINGS").join(" ");
  const impression = sectionTexts(xml, "IMPRESSION").join(" ");
  if (!findings && !impression) {
    throw new ReportError("report has neither findings nor impression text");
  }
  const captionParts: string[] = [];
  if (findings) captionParts.push(`FINDINGS: ${findings}`);
  if (impression) captionParts.push(`IMPRESSION: ${impression}`);

  const majors = elementTexts(xml, "major");
  const label: 0 | 1 = majors.some((term) => term.toLowerCase() === "normal") ? 0 : 1;
  return { findings, impression, caption: captionParts.join(" "), label };
}
