"""AdamW with decoupled weight decay, two parameter groups, and the
linear-warmup / cosine-annealing step schedule.

Adapters train at the backbone learning rate, the classification head at
its own (typically 10x larger) rate; both are scaled per step by
:func:`lr_scale_at`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import GradientError, ParameterError
from .model import ModelGrads, ModelParams

ADAPTER_FIELDS = ("image_weight", "image_bias", "text_weight", "text_bias")
HEAD_FIELDS = ("head_weight", "head_bias")


@dataclass(frozen=True)
class OptimConfig:
    lr_backbone: float = 1e-5
    lr_head: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.lr_backbone <= 0 or self.lr_head <= 0:
            raise ParameterError("learning rates must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ParameterError("betas must be in (0, 1)")
        if self.epsilon <= 0:
            raise ParameterError("epsilon must be positive")
        if self.weight_decay < 0:
            raise ParameterError("weight decay must be nonnegative")


@dataclass(frozen=True)
class ScheduleConfig:
    total_steps: int
    warmup_fraction: float = 0.1

    def __post_init__(self):
        if self.total_steps < 1:
            raise ParameterError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0 <= self.warmup_fraction < 1:
            raise ParameterError(f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}")
        if self.warmup_steps >= self.total_steps:
            raise ParameterError("warmup must end before the final step")

    @property
    def warmup_steps(self) -> int:
        return int(round(self.warmup_fraction * self.total_steps))


@dataclass
class OptimState:
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def init_state(params: ModelParams) -> OptimState:
    state = OptimState()
    for f in fields(ModelParams):
        value = getattr(params, f.name)
        zero = np.zeros_like(value) if isinstance(value, np.ndarray) else 0.0
        state.first_moment[f.name] = zero
        state.second_moment[f.name] = np.zeros_like(zero) if isinstance(zero, np.ndarray) else 0.0
    return state


def lr_scale_at(step: int, sched: ScheduleConfig) -> float:
    """Linear ramp over the warmup steps, then a half cosine down to 0."""
    if not 0 <= step <= sched.total_steps:
        raise ParameterError(f"step {step} outside [0, {sched.total_steps}]")
    warmup = sched.warmup_steps
    if step < warmup:
        return step / warmup
    span = sched.total_steps - warmup
    return float(0.5 * (1.0 + np.cos(np.pi * (step - warmup) / span)))


def adamw_step(
    params: ModelParams,
    grads: ModelGrads,
    state: OptimState,
    cfg: OptimConfig,
    lr_scale: float = 1.0,
) -> tuple[ModelParams, OptimState]:
    """One AdamW update, in place; decay is decoupled and applied first.

    The moment-based step divides by sqrt(v_hat + epsilon), matching the
    bias-corrected update this codebase is validated against.
    """
    if not 0 <= lr_scale <= 1:
        raise ParameterError(f"lr_scale must be in [0, 1], got {lr_scale}")
    state.step += 1
    bias1 = 1.0 - cfg.beta1 ** state.step
    bias2 = 1.0 - cfg.beta2 ** state.step

    for f in fields(ModelParams):
        name = f.name
        lr = cfg.lr_head if name in HEAD_FIELDS else cfg.lr_backbone
        lr_eff = lr * lr_scale
        p = np.asarray(getattr(params, name), dtype=np.float64)
        g = np.asarray(getattr(grads, name), dtype=np.float64)
        if g.shape != p.shape:
            raise GradientError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient for parameter {name}")

        if cfg.weight_decay > 0:
            p = p - lr_eff * cfg.weight_decay * p
        m = cfg.beta1 * state.first_moment[name] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.second_moment[name] + (1.0 - cfg.beta2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        p = p - lr_eff * (m / bias1) / np.sqrt(v / bias2 + cfg.epsilon)

        setattr(params, name, float(p) if name == "head_bias" else p)
    return params, state
