"""Multi-task cross-modal fine-tuning and fused-vector retrieval toolkit."""

from .errors import XmodalError
from .ingest import EmbeddingSet, SplitSpec, StudyRecord, read_embeddings, split_corpus, write_embeddings
from .index import FusedIndex, SearchHit, build_index, load_index, query_by_id, save_index, search
from .losses import LossBreakdown, LossWeights, bce_with_logits, clip_loss, composite_loss, supcon_loss
from .metrics import MetricsReport, full_report, render_report
from .model import ModelParams, forward, init_params, load_params, save_params
from .optim import OptimConfig, ScheduleConfig, adamw_step, lr_scale_at
from .synth import make_synthetic_set
from .trainer import EpochLog, TrainConfig, evaluate_split, train
from .tuner import SearchSpace, TrialResult, tune

__version__ = "0.1.0"

__all__ = [
    "EmbeddingSet",
    "EpochLog",
    "FusedIndex",
    "LossBreakdown",
    "LossWeights",
    "MetricsReport",
    "ModelParams",
    "OptimConfig",
    "ScheduleConfig",
    "SearchHit",
    "SearchSpace",
    "SplitSpec",
    "StudyRecord",
    "TrainConfig",
    "TrialResult",
    "XmodalError",
    "adamw_step",
    "bce_with_logits",
    "build_index",
    "clip_loss",
    "composite_loss",
    "evaluate_split",
    "forward",
    "full_report",
    "init_params",
    "load_index",
    "load_params",
    "lr_scale_at",
    "make_synthetic_set",
    "query_by_id",
    "read_embeddings",
    "render_report",
    "save_index",
    "save_params",
    "search",
    "split_corpus",
    "supcon_loss",
    "train",
    "tune",
    "write_embeddings",
]
