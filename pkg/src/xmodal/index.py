"""Flat exact cosine index over fused image-text vectors.

Each study is stored once as the re-normalized average of its normalized
(adapted) image and text embeddings, so dot products against a normalized
query are true cosine similarities and either modality can query the same
space. Search is an exhaustive scan; ties break by insertion order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateVectorError, FormatError, ParameterError
from .ingest import ABNORMAL, NORMAL, UNLABELED, EmbeddingSet
from .model import ModelParams, apply_adapter
from .numerics import DEGENERATE_NORM, as_matrix, l2_normalize, row_norms

INDEX_MAGIC = b"CMXI"
INDEX_VERSION = 1
UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class SearchHit:
    study_id: str
    label: int
    score: float


@dataclass
class FusedIndex:
    study_ids: list
    labels: np.ndarray   # (N,)
    vectors: np.ndarray  # (N, D), unit rows

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.vectors = as_matrix(self.vectors)
        n = len(self.study_ids)
        if self.vectors.shape[0] != n or self.labels.shape != (n,):
            raise DataError("index entry counts are inconsistent")
        if n == 0:
            raise DataError("index must contain at least one entry")
        norms = row_norms(self.vectors)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise DataError(f"entry {self.study_ids[bad]!r} has norm {norms[bad]:.8f}, not unit")

    def __len__(self) -> int:
        return len(self.study_ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _normalized_rows_named(raw: np.ndarray, study_ids, stage: str) -> np.ndarray:
    norms = row_norms(raw)
    if np.any(norms < DEGENERATE_NORM):
        bad = int(np.argmin(norms))
        raise DegenerateVectorError(f"study {study_ids[bad]!r}: degenerate {stage} vector (norm {norms[bad]:g})")
    return raw / norms[:, None]


def fused_vectors(params: ModelParams | None, embeddings: EmbeddingSet) -> np.ndarray:
    """Unit-norm fused rows: normalize((norm(V) + norm(T)) / 2) per study.

    ``params=None`` skips the adapters and fuses the raw backbone
    embeddings (the pretrained-baseline path).
    """
    v = apply_adapter(params, embeddings.images, "image") if params is not None else embeddings.images
    t = apply_adapter(params, embeddings.texts, "text") if params is not None else embeddings.texts
    v_norm = _normalized_rows_named(v, embeddings.study_ids, "image")
    t_norm = _normalized_rows_named(t, embeddings.study_ids, "text")
    return _normalized_rows_named((v_norm + t_norm) / 2.0, embeddings.study_ids, "fused")


def modality_vectors(params: ModelParams | None, embeddings: EmbeddingSet, modality: str) -> np.ndarray:
    """Unit-norm single-modality query rows (adapted when params given)."""
    if modality not in ("image", "text"):
        raise ParameterError(f"modality must be 'image' or 'text', got {modality!r}")
    raw = embeddings.images if modality == "image" else embeddings.texts
    adapted = apply_adapter(params, raw, modality) if params is not None else raw
    return _normalized_rows_named(adapted, embeddings.study_ids, modality)


def build_index(params: ModelParams | None, embeddings: EmbeddingSet) -> FusedIndex:
    if len(embeddings) == 0:
        raise DataError("cannot build an index from an empty embedding set")
    return FusedIndex(
        study_ids=list(embeddings.study_ids),
        labels=embeddings.labels.copy(),
        vectors=fused_vectors(params, embeddings),
    )


def search(index: FusedIndex, query, k: int, exclude_id: str | None = None):
    """Exact top-k by dot product against the internally normalized query.

    Returns at most ``k`` hits (all entries when k exceeds the index size),
    scores nonincreasing, ties resolved by ascending insertion order.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    q = l2_normalize(query)
    if q.shape[0] != index.dim:
        raise ParameterError(f"query dimension {q.shape[0]} does not match index dimension {index.dim}")
    scores = index.vectors @ q
    order = np.argsort(-scores, kind="stable")
    hits = []
    for i in order:
        if exclude_id is not None and index.study_ids[i] == exclude_id:
            continue
        hits.append(SearchHit(study_id=index.study_ids[i], label=int(index.labels[i]), score=float(scores[i])))
        if len(hits) == k:
            break
    return hits


def query_by_id(
    index: FusedIndex,
    embeddings: EmbeddingSet,
    params: ModelParams | None,
    study_id: str,
    modality: str,
    k: int,
    exclude_self: bool = False,
):
    """Build the single-modality query for a known study and search."""
    row = embeddings.index_of(study_id)
    if modality not in ("image", "text"):
        raise ParameterError(f"modality must be 'image' or 'text', got {modality!r}")
    raw = embeddings.images[row] if modality == "image" else embeddings.texts[row]
    query = apply_adapter(params, raw[None, :], modality)[0] if params is not None else raw
    return search(index, query, k, exclude_id=study_id if exclude_self else None)


def save_index(index: FusedIndex, path) -> None:
    blob = bytearray()
    blob += INDEX_MAGIC
    blob += struct.pack("<HIQ", INDEX_VERSION, index.dim, len(index))
    for i, study_id in enumerate(index.study_ids):
        id_bytes = study_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise FormatError(f"study id too long ({len(id_bytes)} bytes)")
        blob += struct.pack("<H", len(id_bytes))
        blob += id_bytes
        blob += struct.pack("<B", int(index.labels[i]))
        blob += np.ascontiguousarray(index.vectors[i], dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_index(path) -> FusedIndex:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 18:
        raise FormatError("index file truncated before header")
    if blob[:4] != INDEX_MAGIC:
        raise FormatError(f"bad index-file magic {blob[:4]!r}")
    version, dim, count = struct.unpack("<HIQ", blob[4:18])
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported index-file version {version}")
    if dim < 1:
        raise FormatError(f"invalid dimension {dim}")

    offset = 18
    vec_bytes = 4 * dim
    study_ids, labels = [], []
    vectors = np.empty((count, dim), dtype=np.float64)
    for i in range(count):
        if offset + 2 > len(blob):
            raise FormatError(f"file ends inside entry {i} (declared count {count})")
        (id_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + id_len + 1 + vec_bytes > len(blob):
            raise FormatError(f"file ends inside entry {i} (declared count {count})")
        study_ids.append(blob[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        label = blob[offset]
        offset += 1
        if label not in (NORMAL, ABNORMAL, UNLABELED):
            raise FormatError(f"entry {i} has invalid label {label}")
        labels.append(label)
        vectors[i] = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after {count} declared entries")
    if not np.all(np.isfinite(vectors)):
        raise FormatError("index file contains non-finite values")
    return FusedIndex(study_ids=study_ids, labels=np.array(labels), vectors=vectors)
