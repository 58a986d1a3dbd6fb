"""The three training objectives and their weighted composite.

Each loss returns its value together with the analytic gradient with
respect to the arrays it consumes, so the model's backward pass can chain
them without any autodiff machinery:

  * symmetric image-text contrastive loss (both retrieval directions),
  * supervised contrastive loss with all same-label batch members as
    positives and a self-excluded denominator,
  * mean binary cross-entropy over logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, LabelError, ParameterError
from .numerics import as_matrix, as_vector, l2_normalize_rows, log_softmax_rows, row_norms

NORMALIZED_ROW_TOL = 1e-6


@dataclass(frozen=True)
class LossWeights:
    """Composite-loss coefficients plus the contrastive temperature."""

    lambda1: float = 0.69
    lambda2: float = 1.97
    lambda3: float = 0.46
    tau: float = 0.07

    def __post_init__(self):
        if self.tau <= 0:
            raise ParameterError(f"temperature must be positive, got {self.tau}")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ParameterError("loss weights must be nonnegative")
        if max(self.lambda1, self.lambda2, self.lambda3) == 0:
            raise ParameterError("at least one loss weight must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    binary: float
    supcon: float
    clip: float
    total: float

    def to_dict(self) -> dict:
        return {"binary": self.binary, "supcon": self.supcon, "clip": self.clip, "total": self.total}


def clip_loss(image, text, tau: float):
    """Symmetric cross-modal contrastive loss over a batch of paired rows.

    Rows are L2-normalized internally and gradients flow through the
    normalization, so callers pass raw (adapted) embeddings. Returns
    ``(loss, grad_image, grad_text)`` with gradients taken with respect
    to the unnormalized inputs.
    """
    if tau <= 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    raw_v = as_matrix(image)
    raw_t = as_matrix(text)
    if raw_v.shape != raw_t.shape:
        raise ParameterError(f"image/text shape mismatch: {raw_v.shape} vs {raw_t.shape}")
    n = raw_v.shape[0]
    if n < 1:
        raise DataError("empty batch")

    v = l2_normalize_rows(raw_v)
    t = l2_normalize_rows(raw_t)
    sim = (v @ t.T) / tau

    log_p_rows = log_softmax_rows(sim)      # image -> text
    log_p_cols = log_softmax_rows(sim.T)    # text -> image
    loss = -(np.sum(np.diag(log_p_rows)) + np.sum(np.diag(log_p_cols))) / (2 * n)

    eye = np.eye(n)
    d_sim = ((np.exp(log_p_rows) - eye) + (np.exp(log_p_cols).T - eye)) / (2 * n)
    grad_v = (d_sim @ t) / tau
    grad_t = (d_sim.T @ v) / tau
    return float(loss), _through_row_normalization(grad_v, v, raw_v), _through_row_normalization(grad_t, t, raw_t)


def _through_row_normalization(grad: np.ndarray, unit: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Map d(loss)/d(normalized rows) back to the unnormalized rows."""
    norms = row_norms(raw)
    radial = np.einsum("ij,ij->i", grad, unit)
    return (grad - radial[:, None] * unit) / norms[:, None]


def supcon_loss(features, labels, tau: float):
    """Supervised contrastive loss over pre-normalized feature rows.

    Every same-label batch member is a positive; the denominator runs over
    all other rows. A sample whose positive set is empty (a class singleton
    in the batch) contributes 0 but still counts in the 1/N average.
    Returns ``(loss, grad_features)``.
    """
    if tau <= 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    f = as_matrix(features)
    y = np.asarray(labels)
    n = f.shape[0]
    if n < 2:
        raise DataError(f"supervised contrastive loss needs at least 2 samples, got {n}")
    if y.shape != (n,):
        raise ParameterError(f"labels shape {y.shape} does not match batch size {n}")
    norms = row_norms(f)
    if np.any(np.abs(norms - 1.0) > NORMALIZED_ROW_TOL):
        bad = int(np.argmax(np.abs(norms - 1.0)))
        raise ParameterError(f"row {bad} has norm {norms[bad]:.8f}; rows must be L2-normalized")

    sim = (f @ f.T) / tau
    off_diag = ~np.eye(n, dtype=bool)
    positives = (y[:, None] == y[None, :]) & off_diag
    pos_counts = positives.sum(axis=1)

    # Self-excluded log-sum-exp per row, stabilized over off-diagonal entries.
    masked = np.where(off_diag, sim, -np.inf)
    row_max = masked.max(axis=1, keepdims=True)
    exp_shifted = np.where(off_diag, np.exp(sim - row_max), 0.0)
    z = exp_shifted.sum(axis=1)
    log_z = row_max[:, 0] + np.log(z)

    active = pos_counts > 0
    per_sample = np.zeros(n)
    per_sample[active] = (
        pos_counts[active] * log_z[active] - np.sum(np.where(positives, sim, 0.0), axis=1)[active]
    ) / pos_counts[active]
    loss = float(per_sample.sum() / n)

    softmax_excl = exp_shifted / z[:, None]
    w = np.zeros((n, n))
    w[active] = softmax_excl[active] - positives[active] / pos_counts[active, None]
    w /= n
    grad = ((w + w.T) @ f) / tau
    return loss, grad


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy on raw logits, in the stable softplus form.

    Returns ``(loss, grad)`` with grad_i = (sigmoid(x_i) - y_i) / N.
    """
    x = as_vector(logits)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != x.shape:
        raise ParameterError(f"labels shape {y.shape} does not match logits shape {x.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise LabelError("labels must be 0 or 1")
    n = x.shape[0]
    loss = float(np.mean(np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))))
    exp_neg_abs = np.exp(-np.abs(x))
    sigma = np.where(x >= 0, 1.0 / (1.0 + exp_neg_abs), exp_neg_abs / (1.0 + exp_neg_abs))
    return loss, (sigma - y) / n


def composite_loss(binary: float, supcon: float, clip: float, weights: LossWeights) -> LossBreakdown:
    """Weighted sum of the three components."""
    total = weights.lambda1 * binary + weights.lambda2 * supcon + weights.lambda3 * clip
    return LossBreakdown(binary=float(binary), supcon=float(supcon), clip=float(clip), total=float(total))
