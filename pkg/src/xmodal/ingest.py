"""Corpus ingestion: report parsing, labeling, splits, and embedding I/O.

Reports are OpenI-style XML. Findings/impression come from abstract-text
elements whose label attribute matches case-insensitively; the binary
label is normal iff any major indexing term equals "normal". Embeddings
travel in the CMXE binary format described at the bottom of this module.
"""

from __future__ import annotations

import json
import struct
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyReportError, FormatError, NotFoundError, ParseError, SplitError

NORMAL, ABNORMAL, UNLABELED = 0, 1, 255

EMBEDDING_MAGIC = b"CMXE"
EMBEDDING_VERSION = 1


@dataclass(frozen=True)
class StudyRecord:
    study_id: str
    findings: str
    impression: str
    caption: str
    label: int  # 0 normal, 1 abnormal

    def to_dict(self) -> dict:
        return {
            "study_id": self.study_id,
            "findings": self.findings,
            "impression": self.impression,
            "caption": self.caption,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StudyRecord":
        return cls(
            study_id=d["study_id"],
            findings=d["findings"],
            impression=d["impression"],
            caption=d["caption"],
            label=int(d["label"]),
        )


@dataclass
class EmbeddingSet:
    """Paired image/text vectors with study ids and binary labels."""

    study_ids: list
    labels: np.ndarray   # (N,), values in {0, 1, 255}
    images: np.ndarray   # (N, D) float64
    texts: np.ndarray    # (N, D) float64

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.images = np.asarray(self.images, dtype=np.float64)
        self.texts = np.asarray(self.texts, dtype=np.float64)
        n = len(self.study_ids)
        if self.images.ndim != 2 or self.images.shape[0] != n:
            raise DataError(f"images shape {self.images.shape} does not match {n} records")
        if self.texts.shape != self.images.shape:
            raise DataError(f"texts shape {self.texts.shape} does not match images {self.images.shape}")
        if self.labels.shape != (n,):
            raise DataError(f"labels shape {self.labels.shape} does not match {n} records")
        if not np.all(np.isin(self.labels, (NORMAL, ABNORMAL, UNLABELED))):
            raise DataError("labels must be 0 (normal), 1 (abnormal), or 255 (unlabeled)")
        if not (np.all(np.isfinite(self.images)) and np.all(np.isfinite(self.texts))):
            raise DataError("embedding vectors must be finite")
        if len(set(self.study_ids)) != n:
            raise DataError("study ids must be unique")

    def __len__(self) -> int:
        return len(self.study_ids)

    @property
    def dim(self) -> int:
        return self.images.shape[1]

    def subset(self, indices) -> "EmbeddingSet":
        idx = np.asarray(indices, dtype=np.int64)
        return EmbeddingSet(
            study_ids=[self.study_ids[i] for i in idx],
            labels=self.labels[idx].copy(),
            images=self.images[idx].copy(),
            texts=self.texts[idx].copy(),
        )

    def index_of(self, study_id: str) -> int:
        try:
            return self.study_ids.index(study_id)
        except ValueError:
            raise NotFoundError(f"study id {study_id!r} not in embedding set") from None


@dataclass(frozen=True)
class SplitSpec:
    test_per_class: int = 200
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.test_per_class < 0:
            raise SplitError("test_per_class must be nonnegative")
        if not 0 < self.val_fraction < 1:
            raise SplitError(f"val_fraction must be in (0, 1), got {self.val_fraction}")


def _squash_whitespace(text: str) -> str:
    return " ".join(text.split())


def parse_report(xml_text: str, study_id: str | None = None) -> StudyRecord:
    """Parse one report document into a labeled study record.

    Raises :class:`ParseError` (with position) on malformed markup and
    :class:`EmptyReportError` when neither section carries text.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, column = exc.position
        raise ParseError(f"malformed report XML: {exc.msg if hasattr(exc, 'msg') else exc}", line, column) from exc

    findings_parts, impression_parts, major_terms = [], [], []
    parsed_id = None
    for el in root.iter():
        tag = el.tag.rsplit("}", 1)[-1].lower()
        if tag == "abstracttext":
            label = next((v for k, v in el.attrib.items() if k.rsplit("}", 1)[-1].lower() == "label"), "")
            text = _squash_whitespace("".join(el.itertext()))
            if label.upper() == "FINDINGS" and text:
                findings_parts.append(text)
            elif label.upper() == "IMPRESSION" and text:
                impression_parts.append(text)
        elif tag == "major":
            major_terms.append(_squash_whitespace("".join(el.itertext())))
        elif tag in ("uid", "pmcid") and parsed_id is None:
            parsed_id = el.attrib.get("id") or _squash_whitespace("".join(el.itertext())) or None

    findings = " ".join(findings_parts)
    impression = " ".join(impression_parts)
    if not findings and not impression:
        raise EmptyReportError("report has neither findings nor impression text")

    caption_parts = []
    if findings:
        caption_parts.append(f"FINDINGS: {findings}")
    if impression:
        caption_parts.append(f"IMPRESSION: {impression}")

    label = NORMAL if any(term.lower() == "normal" for term in major_terms) else ABNORMAL
    return StudyRecord(
        study_id=study_id if study_id is not None else (parsed_id or ""),
        findings=findings,
        impression=impression,
        caption=" ".join(caption_parts),
        label=label,
    )


def split_corpus(embeddings: EmbeddingSet, spec: SplitSpec):
    """Reserve a balanced test set, then split the rest into train/val.

    Test membership comes from one seeded shuffle per class; the
    train/val division from a second seeded shuffle of the remainder.
    Partitions preserve the corpus order of their members.
    """
    labels = embeddings.labels
    if np.any(labels == UNLABELED):
        raise SplitError("cannot split a corpus with unlabeled records")
    rng_test = np.random.default_rng(spec.seed)
    test_idx = []
    for cls in (NORMAL, ABNORMAL):
        members = np.flatnonzero(labels == cls)
        if members.size < spec.test_per_class:
            raise SplitError(
                f"class {cls} has {members.size} records, fewer than test_per_class={spec.test_per_class}"
            )
        chosen = rng_test.permutation(members)[: spec.test_per_class]
        test_idx.extend(int(i) for i in chosen)

    test_set = set(test_idx)
    remaining = [i for i in range(len(embeddings)) if i not in test_set]
    rng_val = np.random.default_rng([spec.seed, 1])
    shuffled = rng_val.permutation(len(remaining))
    n_val = int(round(spec.val_fraction * len(remaining)))
    val_idx = [remaining[i] for i in shuffled[:n_val]]
    train_idx = [remaining[i] for i in shuffled[n_val:]]

    return (
        embeddings.subset(sorted(train_idx)),
        embeddings.subset(sorted(val_idx)),
        embeddings.subset(sorted(test_idx)),
    )


def write_embeddings(embeddings: EmbeddingSet, path) -> None:
    """Serialize to CMXE: header then per-record id, label, f32 vectors."""
    blob = bytearray()
    blob += EMBEDDING_MAGIC
    blob += struct.pack("<HHIQ", EMBEDDING_VERSION, 0, embeddings.dim, len(embeddings))
    for i, study_id in enumerate(embeddings.study_ids):
        id_bytes = study_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise FormatError(f"study id too long ({len(id_bytes)} bytes)")
        blob += struct.pack("<H", len(id_bytes))
        blob += id_bytes
        blob += struct.pack("<B", int(embeddings.labels[i]))
        blob += np.ascontiguousarray(embeddings.images[i], dtype="<f4").tobytes()
        blob += np.ascontiguousarray(embeddings.texts[i], dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def read_embeddings(path) -> EmbeddingSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 20:
        raise FormatError("embedding file truncated before header")
    if blob[:4] != EMBEDDING_MAGIC:
        raise FormatError(f"bad embedding-file magic {blob[:4]!r}")
    version, reserved, dim, count = struct.unpack("<HHIQ", blob[4:20])
    if version != EMBEDDING_VERSION:
        raise FormatError(f"unsupported embedding-file version {version}")
    if reserved != 0:
        raise FormatError(f"reserved header field must be 0, got {reserved}")
    if dim < 1:
        raise FormatError(f"invalid dimension {dim}")

    offset = 20
    vec_bytes = 4 * dim
    study_ids, labels = [], []
    images = np.empty((count, dim), dtype=np.float64)
    texts = np.empty((count, dim), dtype=np.float64)
    for i in range(count):
        if offset + 2 > len(blob):
            raise FormatError(f"file ends inside record {i} (declared count {count})")
        (id_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + id_len + 1 + 2 * vec_bytes > len(blob):
            raise FormatError(f"file ends inside record {i} (declared count {count})")
        study_ids.append(blob[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        label = blob[offset]
        offset += 1
        if label not in (NORMAL, ABNORMAL, UNLABELED):
            raise FormatError(f"record {i} has invalid label {label}")
        labels.append(label)
        images[i] = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
        texts[i] = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after {count} declared records")
    if not (np.all(np.isfinite(images)) and np.all(np.isfinite(texts))):
        raise FormatError("embedding file contains non-finite values")
    return EmbeddingSet(study_ids=study_ids, labels=np.array(labels), images=images, texts=texts)


def read_manifest(path) -> list:
    """Manifest lines are objects {study_id, image_path, report_path}."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"manifest line {lineno} is not valid JSON: {exc}") from exc
            missing = {"study_id", "report_path"} - obj.keys()
            if missing:
                raise FormatError(f"manifest line {lineno} missing fields {sorted(missing)}")
            entries.append(obj)
    return entries


def write_study_corpus(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_study_corpus(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(StudyRecord.from_dict(json.loads(line)))
    return records
