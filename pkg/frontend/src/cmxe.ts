/**
 * CMXE binary writer/reader (little-endian), byte-compatible with the
 * Python toolkit:
 *   "CMXE", u16 version=1, u16 reserved=0, u32 dim, u64 count, then per
 *   record: u16 id length, utf-8 id, u8 label, dim f32 image, dim f32 text.
 */

export interface EmbeddingRecord {
  studyId: string;
  /** 0 normal, 1 abnormal, 255 unlabeled */
  label: number;
  image: Float32Array;
  text: Float32Array;
}

export class FormatError extends Error {}

const MAGIC = Buffer.from("CMXE", "ascii");
const VERSION = 1;

export function encodeCmxe(dim: number, records: EmbeddingRecord[]): Buffer {
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(20);
  MAGIC.copy(header, 0);
  header.writeUInt16LE(VERSION, 4);
  header.writeUInt16LE(0, 6);
  header.writeUInt32LE(dim, 8);
  header.writeBigUInt64LE(BigInt(records.length), 12);
  chunks.push(header);

  for (const record of records) {
    if (record.image.length !== dim || record.text.length !== dim) {
      throw new FormatError(`record ${record.studyId} has wrong dimension`);
    }
    const idBytes = Buffer.from(record.studyId, "utf-8");
    if (idBytes.length > 0xffff) {
      throw new FormatError(`study id too long (${idBytes.length} bytes)`);
    }
    const head = Buffer.alloc(2 + idBytes.length + 1);
    head.writeUInt16LE(idBytes.length, 0);
    idBytes.copy(head, 2);
    head.writeUInt8(record.label, 2 + idBytes.length);
    chunks.push(head);

    const vectors = Buffer.alloc(8 * dim);
    for (let i = 0; i < dim; i += 1) {
      vectors.writeFloatLE(record.image[i], 4 * i);
    }
    for (let i = 0; i < dim; i += 1) {
      vectors.writeFloatLE(record.text[i], 4 * dim + 4 * i);
    }
    chunks.push(vectors);
  }
  return Buffer.concat(chunks);
}

export function decodeCmxe(blob: Buffer): { dim: number; records: EmbeddingRecord[] } {
  if (blob.length < 20) throw new FormatError("file truncated before header");
  if (!blob.subarray(0, 4).equals(MAGIC)) {
    throw new FormatError(`bad magic ${JSON.stringify(blob.subarray(0, 4).toString("latin1"))}`);
  }
  const version = blob.readUInt16LE(4);
  if (version !== VERSION) throw new FormatError(`unsupported version ${version}`);
  if (blob.readUInt16LE(6) !== 0) throw new FormatError("reserved field must be 0");
  const dim = blob.readUInt32LE(8);
  const count = Number(blob.readBigUInt64LE(12));

  const records: EmbeddingRecord[] = [];
  let offset = 20;
  for (let i = 0; i < count; i += 1) {
    if (offset + 2 > blob.length) throw new FormatError(`file ends inside record ${i}`);
    const idLen = blob.readUInt16LE(offset);
    offset += 2;
    if (offset + idLen + 1 + 8 * dim > blob.length) throw new FormatError(`file ends inside record ${i}`);
    const studyId = blob.subarray(offset, offset + idLen).toString("utf-8");
    offset += idLen;
    const label = blob.readUInt8(offset);
    offset += 1;
    const image = new Float32Array(dim);
    const text = new Float32Array(dim);
    for (let j = 0; j < dim; j += 1) {
      image[j] = blob.readFloatLE(offset + 4 * j);
      text[j] = blob.readFloatLE(offset + 4 * dim + 4 * j);
    }
    offset += 8 * dim;
    records.push({ studyId, label, image, text });
  }
  if (offset !== blob.length) {
    throw new FormatError(`${blob.length - offset} trailing bytes after ${count} records`);
  }
  return { dim, records };
}
