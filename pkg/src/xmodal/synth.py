"""Seeded synthetic paired-embedding corpora for tests and demos.

Two Gaussian classes (means +-class_sep/2 along a random direction, unit
within-class noise) share a latent vector per study; the image and text
views each add noise inside their own fixed random subspace, so an affine
adapter can strip it and cross-modal alignment is genuinely learnable.
Values are rounded to f32 so a write/read cycle through the embedding
file format is exact.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .ingest import ABNORMAL, NORMAL, EmbeddingSet


def make_synthetic_set(
    n: int,
    dim: int,
    seed: int,
    class_sep: float = 6.0,
    modality_noise: float = 0.1,
    normal_frac: float = 0.5,
    id_prefix: str = "synth",
) -> EmbeddingSet:
    if n < 2:
        raise ParameterError(f"need at least 2 records, got {n}")
    if dim < 1:
        raise ParameterError(f"dimension must be >= 1, got {dim}")
    if not 0 <= normal_frac <= 1:
        raise ParameterError(f"normal_frac must be in [0, 1], got {normal_frac}")

    rng = np.random.default_rng(seed)
    direction = rng.normal(size=dim)
    direction /= np.sqrt(np.dot(direction, direction))
    means = {NORMAL: -0.5 * class_sep * direction, ABNORMAL: +0.5 * class_sep * direction}

    n_normal = int(round(n * normal_frac))
    labels = np.array([NORMAL] * n_normal + [ABNORMAL] * (n - n_normal))
    labels = labels[rng.permutation(n)]

    latent = np.empty((n, dim))
    for i in range(n):
        latent[i] = means[int(labels[i])] + rng.normal(size=dim)

    nuisance_rank = max(1, dim // 4)
    if 2 * nuisance_rank <= dim:
        basis = np.linalg.qr(rng.normal(size=(dim, 2 * nuisance_rank)))[0]
        image_basis, text_basis = basis[:, :nuisance_rank], basis[:, nuisance_rank:]
    else:
        # Too few dims for disjoint subspaces; fall back to isotropic noise.
        nuisance_rank = dim
        image_basis = text_basis = np.eye(dim)
    images = latent + modality_noise * rng.normal(size=(n, nuisance_rank)) @ image_basis.T
    texts = latent + modality_noise * rng.normal(size=(n, nuisance_rank)) @ text_basis.T

    width = max(4, len(str(n - 1)))
    return EmbeddingSet(
        study_ids=[f"{id_prefix}-{i:0{width}d}" for i in range(n)],
        labels=labels,
        images=images.astype(np.float32).astype(np.float64),
        texts=texts.astype(np.float32).astype(np.float64),
    )
