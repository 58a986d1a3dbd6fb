"""Multi-task training loop: batches, composite loss, AdamW, per-epoch
validation, and structured epoch logs.

Runs are bit-reproducible for a fixed seed: batch order, dropout masks,
and head initialization all derive from it, and logged totals are
recomposed from the logged component means so the weighted-sum identity
holds exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, ParameterError, ShapeError
from .index import build_index, search
from .ingest import UNLABELED, EmbeddingSet
from .losses import LossBreakdown, LossWeights, bce_with_logits, clip_loss, composite_loss, supcon_loss
from .model import LossGrads, ModelParams, apply_adapter, backward, forward, init_params
from .optim import OptimConfig, ScheduleConfig, adamw_step, init_state, lr_scale_at

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    weights: LossWeights = field(default_factory=LossWeights)
    dropout_p: float = 0.1
    seed: int = 0
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    schedule: ScheduleConfig | None = None  # derived from the data when None
    warmup_fraction: float = 0.1
    log_path: str | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 2:
            raise ParameterError(f"batch_size must be >= 2 (pair losses need pairs), got {self.batch_size}")


@dataclass(frozen=True)
class ValidationReport:
    loss: LossBreakdown
    accuracy: float
    top1_i2t: float
    top1_t2i: float


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: LossBreakdown
    val_loss: LossBreakdown
    val_accuracy: float
    val_top1_i2t: float
    val_top1_t2i: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss.to_dict(),
            "val_loss": self.val_loss.to_dict(),
            "val_accuracy": self.val_accuracy,
            "val_top1_i2t": self.val_top1_i2t,
            "val_top1_t2i": self.val_top1_t2i,
        }


def _require_labeled(split: EmbeddingSet, name: str) -> None:
    if len(split) == 0:
        raise DataError(f"{name} split is empty")
    if np.any(split.labels == UNLABELED):
        raise DataError(f"{name} split contains unlabeled records")


def batch_losses(params: ModelParams, acts, labels, weights: LossWeights):
    """Composite loss of one forward pass plus the weighted upstream grads."""
    bce, g_logits = bce_with_logits(acts.logits, labels)
    if len(labels) >= 2:
        sup, g_fused = supcon_loss(acts.fused_norm, labels, weights.tau)
    else:
        sup, g_fused = 0.0, np.zeros_like(acts.fused_norm)  # pair loss undefined for singletons
    clip, g_img, g_txt = clip_loss(acts.image_adapted, acts.text_adapted, weights.tau)
    breakdown = composite_loss(bce, sup, clip, weights)
    grads = LossGrads(
        d_logits=weights.lambda1 * g_logits if weights.lambda1 > 0 else None,
        d_fused=weights.lambda2 * g_fused if weights.lambda2 > 0 else None,
        d_image=weights.lambda3 * g_img if weights.lambda3 > 0 else None,
        d_text=weights.lambda3 * g_txt if weights.lambda3 > 0 else None,
    )
    return breakdown, grads


def evaluate_split(params: ModelParams, data: EmbeddingSet, weights: LossWeights) -> ValidationReport:
    """Eval-mode losses, logit-sign accuracy, and top-1 self-retrieval.

    A logit of exactly 0 predicts normal. Top-1 retrieval builds a
    temporary fused index over the split and queries each record in both
    modalities (self-matches included).
    """
    _require_labeled(data, "evaluation")
    acts = forward(params, data.images, data.texts, dropout_p=0.0, mode="eval")
    breakdown, _ = batch_losses(params, acts, data.labels, weights)

    predictions = (acts.logits > 0).astype(np.int64)
    accuracy = float(np.mean(predictions == data.labels))

    idx = build_index(params, data)
    top1 = {}
    for modality in ("image", "text"):
        raw = data.images if modality == "image" else data.texts
        adapted = apply_adapter(params, raw, modality)
        hits = sum(
            1 for row in range(len(data)) if search(idx, adapted[row], 1)[0].study_id == data.study_ids[row]
        )
        top1[modality] = hits / len(data)
    return ValidationReport(
        loss=breakdown, accuracy=accuracy, top1_i2t=top1["image"], top1_t2i=top1["text"]
    )


def planned_batches(n_records: int, batch_size: int) -> int:
    """Batches per epoch after dropping a final batch smaller than 2."""
    full, rest = divmod(n_records, batch_size)
    return full + (1 if rest >= 2 else 0)


def train(data: EmbeddingSet, val: EmbeddingSet, cfg: TrainConfig):
    """Fit adapters and head on ``data``, validating on ``val`` each epoch.

    Returns the final parameters and the per-epoch logs. Batch order is
    reshuffled per epoch by a seeded generator; the last batch of an epoch
    is dropped when it has fewer than 2 samples. With ``epochs=0`` the
    identity-initialized parameters are returned untouched.
    """
    _require_labeled(data, "train")
    _require_labeled(val, "validation")
    if data.dim != val.dim:
        raise ShapeError(f"train dim {data.dim} does not match validation dim {val.dim}")
    if len(np.unique(data.labels)) < 2:
        logger.warning("training split has a single class; supervised contrastive pairs are all-positive")

    params = init_params(data.dim, cfg.seed)
    if cfg.epochs == 0:
        return params, []

    n_batches = planned_batches(len(data), cfg.batch_size)
    if n_batches == 0:
        raise DataError(f"{len(data)} records cannot form a batch of at least 2")
    schedule = cfg.schedule or ScheduleConfig(
        total_steps=cfg.epochs * n_batches, warmup_fraction=cfg.warmup_fraction
    )

    state = init_state(params)
    shuffle_rng = np.random.default_rng([cfg.seed, 0])
    dropout_rng = np.random.default_rng([cfg.seed, 1])
    log_file = open(cfg.log_path, "w", encoding="utf-8") if cfg.log_path else None

    logs = []
    global_step = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = shuffle_rng.permutation(len(data))
            sums = np.zeros(3)  # binary, supcon, clip
            batches = 0
            for start in range(0, len(data), cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                if batch.size < 2:
                    continue
                step_seed = int(dropout_rng.integers(0, 2**63))
                acts = forward(
                    params,
                    data.images[batch],
                    data.texts[batch],
                    dropout_p=cfg.dropout_p,
                    mode="train",
                    seed=step_seed,
                )
                breakdown, loss_grads = batch_losses(params, acts, data.labels[batch], cfg.weights)
                model_grads = backward(params, acts, loss_grads)
                scale = lr_scale_at(min(global_step, schedule.total_steps), schedule)
                adamw_step(params, model_grads, state, cfg.optimizer, scale)
                global_step += 1
                sums += (breakdown.binary, breakdown.supcon, breakdown.clip)
                batches += 1

            train_loss = composite_loss(*(sums / batches), cfg.weights)
            report = evaluate_split(params, val, cfg.weights)
            entry = EpochLog(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=report.loss,
                val_accuracy=report.accuracy,
                val_top1_i2t=report.top1_i2t,
                val_top1_t2i=report.top1_t2i,
            )
            logs.append(entry)
            if log_file:
                log_file.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
                log_file.flush()
    finally:
        if log_file:
            log_file.close()
    return params, logs


def shortened(cfg: TrainConfig, epochs: int, weights: LossWeights) -> TrainConfig:
    """Per-trial variant of a config for hyperparameter search."""
    return replace(cfg, epochs=epochs, weights=weights, schedule=None, log_path=None)
