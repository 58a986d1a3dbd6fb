"""Search over the three composite-loss weights inside their box bounds.

Two strategies share the same trial loop: a seeded low-discrepancy
(shifted Halton) sweep, and a sequential surrogate that fits an isotropic
Gaussian-process regressor on the observed trials and proposes the
expected-improvement maximizer over a fresh seeded candidate grid. The
objective defaults to mean bidirectional validation top-1 retrieval
accuracy from a shortened training run.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from math import erf

import numpy as np

from .errors import ParameterError, XmodalError
from .losses import LossWeights
from .trainer import TrainConfig, shortened, train

logger = logging.getLogger(__name__)

HALTON_BASES = (2, 3, 5)
CANDIDATE_GRID = 1024
DUPLICATE_TOL = 1e-9
KERNEL_DIAG_FRACTION = 0.25
OBSERVATION_NOISE = 1e-6


@dataclass(frozen=True)
class SearchSpace:
    lambda1_bounds: tuple = (0.1, 1.0)
    lambda2_bounds: tuple = (0.2, 2.0)
    lambda3_bounds: tuple = (0.2, 2.0)
    trials: int = 20

    def __post_init__(self):
        for lo, hi in (self.lambda1_bounds, self.lambda2_bounds, self.lambda3_bounds):
            if not lo < hi:
                raise ParameterError(f"bounds must satisfy lower < upper, got ({lo}, {hi})")
        if self.trials < 1:
            raise ParameterError(f"trials must be >= 1, got {self.trials}")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.lambda1_bounds[0], self.lambda2_bounds[0], self.lambda3_bounds[0]])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.lambda1_bounds[1], self.lambda2_bounds[1], self.lambda3_bounds[1]])

    def contains(self, point) -> bool:
        p = np.asarray(point)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))


@dataclass
class TrialResult:
    index: int
    weights: LossWeights
    objective: float
    logs: list = field(default_factory=list)
    failed: bool = False

    def to_dict(self) -> dict:
        return {
            "trial": self.index,
            "lambda1": self.weights.lambda1,
            "lambda2": self.weights.lambda2,
            "lambda3": self.weights.lambda3,
            "objective": self.objective,
            "failed": self.failed,
        }


def _radical_inverse(base: int, index: int) -> float:
    value, denom = 0.0, 1.0
    while index > 0:
        index, digit = divmod(index, base)
        denom *= base
        value += digit / denom
    return value


def halton_points(count: int, space: SearchSpace, seed: int) -> np.ndarray:
    """Shifted Halton sequence mapped into the search box."""
    shift = np.random.default_rng([seed, 0]).random(3)
    unit = np.array(
        [[_radical_inverse(b, i + 1) for b in HALTON_BASES] for i in range(count)]
    )
    unit = (unit + shift) % 1.0
    return space.lower + unit * (space.upper - space.lower)


def _norm_cdf(z: np.ndarray) -> np.ndarray:
    return np.array([0.5 * (1.0 + erf(v / np.sqrt(2.0))) for v in z])


def _gp_posterior(observed_x: np.ndarray, observed_y: np.ndarray, candidates: np.ndarray, lengthscale: float):
    def kernel(a, b):
        sq = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
        return np.exp(-sq / (2.0 * lengthscale**2))

    k_xx = kernel(observed_x, observed_x) + OBSERVATION_NOISE * np.eye(len(observed_x))
    k_xc = kernel(observed_x, candidates)
    solve = np.linalg.solve(k_xx, np.column_stack([observed_y, k_xc]))
    alpha, v = solve[:, 0], solve[:, 1:]
    mean = k_xc.T @ alpha
    var = 1.0 - np.einsum("ij,ij->j", k_xc, v)
    return mean, np.sqrt(np.maximum(var, 0.0))


def expected_improvement(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
    ei = np.zeros_like(mean)
    active = std > 1e-15
    z = (mean[active] - best) / std[active]
    ei[active] = std[active] * (z * _norm_cdf(z) + np.exp(-0.5 * z**2) / np.sqrt(2.0 * np.pi))
    return ei


def _propose_surrogate(evaluated_x: list, evaluated_y: list, space: SearchSpace, cand_rng) -> np.ndarray:
    candidates = space.lower + cand_rng.random((CANDIDATE_GRID, 3)) * (space.upper - space.lower)
    seen = np.array(evaluated_x)
    duplicate = np.zeros(len(candidates), dtype=bool)
    for row in seen:
        duplicate |= np.all(np.abs(candidates - row) <= DUPLICATE_TOL, axis=1)
    candidates = candidates[~duplicate]
    if len(candidates) == 0:
        raise ParameterError("candidate grid exhausted by duplicates")

    y = np.array(evaluated_y)
    y_std = y.std()
    y_normed = (y - y.mean()) / y_std if y_std > 0 else y - y.mean()
    lengthscale = KERNEL_DIAG_FRACTION * float(np.linalg.norm(space.upper - space.lower))
    mean, std = _gp_posterior(seen, y_normed, candidates, lengthscale)
    ei = expected_improvement(mean, std, float(y_normed.max()))
    if np.all(ei <= 0):
        # Surrogate is certain everywhere; fall back to the least explored candidate.
        dists = np.min(
            np.sum((candidates[:, None, :] - seen[None, :, :]) ** 2, axis=-1), axis=1
        )
        return candidates[int(np.argmax(dists))]
    return candidates[int(np.argmax(ei))]


def default_objective(data, val, base_cfg: TrainConfig, trial_epochs: int, trial_seed: int):
    """Train with the candidate weights and score bidirectional top-1."""

    def run(weights: LossWeights):
        cfg = shortened(base_cfg, trial_epochs, weights)
        _, logs = train(data, val, cfg)
        if not logs:
            raise ParameterError("trial training produced no epochs to score")
        last = logs[-1]
        return 0.5 * (last.val_top1_i2t + last.val_top1_t2i), [log.to_dict() for log in logs]

    return run


def tune(
    data,
    val,
    base_cfg: TrainConfig,
    space: SearchSpace,
    strategy: str = "surrogate",
    seed: int = 0,
    trial_epochs: int = 5,
    objective=None,
    ledger_path: str | None = None,
):
    """Run ``space.trials`` trials and return (best, all trials).

    ``objective`` maps a LossWeights to a float (higher is better); when
    omitted, each trial trains for ``trial_epochs`` epochs and scores mean
    bidirectional validation top-1 retrieval accuracy. Failed trials are
    recorded and excluded from the argmax; ties break toward the earlier
    trial. Fixing the seed reproduces the whole trial sequence.
    """
    if strategy not in ("quasirandom", "surrogate"):
        raise ParameterError(f"strategy must be 'quasirandom' or 'surrogate', got {strategy!r}")
    if objective is not None:
        def run(weights):
            return float(objective(weights)), []
    else:
        run = default_objective(data, val, base_cfg, trial_epochs, seed)

    halton = halton_points(space.trials, space, seed)
    cand_rng = np.random.default_rng([seed, 1])

    results = []
    evaluated_x, evaluated_y = [], []
    ledger = open(ledger_path, "w", encoding="utf-8") if ledger_path else None
    try:
        for trial in range(space.trials):
            if strategy == "quasirandom" or trial < min(5, space.trials):
                point = halton[trial]
            else:
                point = _propose_surrogate(evaluated_x, evaluated_y, space, cand_rng)
            weights = LossWeights(
                lambda1=float(point[0]),
                lambda2=float(point[1]),
                lambda3=float(point[2]),
                tau=base_cfg.weights.tau,
            )
            logs = []
            try:
                value, logs = run(weights)
                failed = False
            except XmodalError as exc:
                logger.warning("trial %d failed: %s", trial, exc)
                value, failed = float("nan"), True
            results.append(TrialResult(index=trial, weights=weights, objective=value, logs=logs, failed=failed))
            if ledger:
                ledger.write(json.dumps(results[-1].to_dict(), sort_keys=True) + "\n")
                ledger.flush()
            evaluated_x.append(np.asarray(point, dtype=np.float64))
            # Failed trials stay in the duplicate filter, pinned to the
            # running worst observation for the surrogate fit.
            if failed:
                finite = [y for y in evaluated_y if np.isfinite(y)]
                evaluated_y.append(min(finite) if finite else 0.0)
            else:
                evaluated_y.append(value)
    finally:
        if ledger:
            ledger.close()

    succeeded = [r for r in results if not r.failed]
    if not succeeded:
        raise ParameterError("all trials failed; nothing to select")
    best = succeeded[0]
    for r in succeeded[1:]:
        if r.objective > best.objective:
            best = r
    return best, results
