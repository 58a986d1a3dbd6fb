"""Trainable head over frozen backbone embeddings.

The frozen encoders are represented by the input embeddings themselves;
what trains is a per-modality affine adapter (identity-initialized, so an
untrained model reproduces the raw embeddings exactly), average fusion
with inverted dropout, and a single-logit linear classification head.

``forward`` records every intermediate needed by ``backward``, which
chains the loss gradients through the head, dropout, fusion, and the
row normalizations analytically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields

import numpy as np

from .errors import FormatError, ParameterError, ShapeError
from .numerics import as_matrix, l2_normalize_rows, row_norms

CHECKPOINT_MAGIC = b"CMXM"
CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    image_weight: np.ndarray  # (D, D)
    image_bias: np.ndarray    # (D,)
    text_weight: np.ndarray   # (D, D)
    text_bias: np.ndarray     # (D,)
    head_weight: np.ndarray   # (D,)
    head_bias: float

    @property
    def dim(self) -> int:
        return self.image_weight.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(
            image_weight=self.image_weight.copy(),
            image_bias=self.image_bias.copy(),
            text_weight=self.text_weight.copy(),
            text_bias=self.text_bias.copy(),
            head_weight=self.head_weight.copy(),
            head_bias=float(self.head_bias),
        )


@dataclass
class ModelGrads:
    image_weight: np.ndarray
    image_bias: np.ndarray
    text_weight: np.ndarray
    text_bias: np.ndarray
    head_weight: np.ndarray
    head_bias: float


@dataclass
class ForwardActivations:
    image_in: np.ndarray       # raw backbone image embeddings (N, D)
    text_in: np.ndarray        # raw backbone text embeddings (N, D)
    image_adapted: np.ndarray  # V
    text_adapted: np.ndarray   # T_emb
    fused_dropout: np.ndarray  # H, dropout-masked (V + T_emb) / 2
    logits: np.ndarray         # (N,)
    image_norm: np.ndarray     # V normalized rowwise
    text_norm: np.ndarray      # T_emb normalized rowwise
    fused_norm: np.ndarray     # F, re-normalized (image_norm + text_norm) / 2
    dropout_mask: np.ndarray   # binary (N, D)
    dropout_p: float
    mode: str


@dataclass
class LossGrads:
    """Upstream gradients, already scaled by their composite weights.

    Any field left ``None`` is treated as zero (its loss term is off).
    ``d_image``/``d_text`` are with respect to the unnormalized adapted
    embeddings, ``d_fused`` with respect to the normalized fused rows.
    """

    d_logits: np.ndarray | None = None
    d_fused: np.ndarray | None = None
    d_image: np.ndarray | None = None
    d_text: np.ndarray | None = None


def init_params(dim: int, seed: int) -> ModelParams:
    """Identity adapters, zero biases, seeded uniform head in +-1/sqrt(D)."""
    if dim < 1:
        raise ParameterError(f"dimension must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)
    return ModelParams(
        image_weight=np.eye(dim),
        image_bias=np.zeros(dim),
        text_weight=np.eye(dim),
        text_bias=np.zeros(dim),
        head_weight=rng.uniform(-bound, bound, size=dim),
        head_bias=0.0,
    )


def apply_adapter(params: ModelParams, x, modality: str) -> np.ndarray:
    x = as_matrix(x)
    if modality == "image":
        return x @ params.image_weight + params.image_bias
    if modality == "text":
        return x @ params.text_weight + params.text_bias
    raise ParameterError(f"unknown modality {modality!r}")


def forward(
    params: ModelParams,
    image,
    text,
    dropout_p: float = 0.1,
    mode: str = "eval",
    seed: int = 0,
) -> ForwardActivations:
    """Run adapters, fusion, dropout, head, and the normalized branches.

    In eval mode the dropout mask is all ones and H = (V + T_emb) / 2
    exactly; in train mode entries are zeroed independently with
    probability ``dropout_p`` and survivors scaled by 1 / (1 - p).
    """
    if not 0 <= dropout_p < 1:
        raise ParameterError(f"dropout probability must be in [0, 1), got {dropout_p}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    image = as_matrix(image)
    text = as_matrix(text)
    if image.shape != text.shape:
        raise ShapeError(f"image/text shape mismatch: {image.shape} vs {text.shape}")
    if image.shape[1] != params.dim:
        raise ShapeError(f"embedding dim {image.shape[1]} does not match model dim {params.dim}")

    v = apply_adapter(params, image, "image")
    t = apply_adapter(params, text, "text")
    fused_mean = (v + t) / 2.0

    if mode == "train" and dropout_p > 0:
        rng = np.random.default_rng(seed)
        mask = (rng.random(fused_mean.shape) >= dropout_p).astype(np.float64)
        h = mask * fused_mean / (1.0 - dropout_p)
    else:
        mask = np.ones_like(fused_mean)
        h = fused_mean

    logits = h @ params.head_weight + params.head_bias
    v_norm = l2_normalize_rows(v)
    t_norm = l2_normalize_rows(t)
    fused_norm = l2_normalize_rows((v_norm + t_norm) / 2.0)

    return ForwardActivations(
        image_in=image,
        text_in=text,
        image_adapted=v,
        text_adapted=t,
        fused_dropout=h,
        logits=logits,
        image_norm=v_norm,
        text_norm=t_norm,
        fused_norm=fused_norm,
        dropout_mask=mask,
        dropout_p=dropout_p,
        mode=mode,
    )


def _normalization_vjp(grad: np.ndarray, unit: np.ndarray, raw_norms: np.ndarray) -> np.ndarray:
    radial = np.einsum("ij,ij->i", grad, unit)
    return (grad - radial[:, None] * unit) / raw_norms[:, None]


def backward(params: ModelParams, acts: ForwardActivations, grads: LossGrads) -> ModelGrads:
    """Exact gradients of the composite loss with respect to all parameters."""
    n, d = acts.image_adapted.shape
    d_v = np.zeros((n, d))
    d_t = np.zeros((n, d))

    if grads.d_logits is not None:
        g = np.asarray(grads.d_logits, dtype=np.float64)
        if g.shape != (n,):
            raise ShapeError(f"logit gradient shape {g.shape} does not match batch {n}")
        d_head_w = acts.fused_dropout.T @ g
        d_head_b = float(g.sum())
        d_h = np.outer(g, params.head_weight)
        scale = 1.0 / (1.0 - acts.dropout_p) if acts.mode == "train" and acts.dropout_p > 0 else 1.0
        d_mean = d_h * acts.dropout_mask * scale
        d_v += d_mean / 2.0
        d_t += d_mean / 2.0
    else:
        d_head_w = np.zeros(d)
        d_head_b = 0.0

    if grads.d_fused is not None:
        d_f = np.asarray(grads.d_fused, dtype=np.float64)
        if d_f.shape != (n, d):
            raise ShapeError(f"fused gradient shape {d_f.shape} does not match {(n, d)}")
        pre = (acts.image_norm + acts.text_norm) / 2.0
        d_pre = _normalization_vjp(d_f, acts.fused_norm, row_norms(pre))
        d_v += _normalization_vjp(d_pre / 2.0, acts.image_norm, row_norms(acts.image_adapted))
        d_t += _normalization_vjp(d_pre / 2.0, acts.text_norm, row_norms(acts.text_adapted))

    if grads.d_image is not None:
        d_v += np.asarray(grads.d_image, dtype=np.float64)
    if grads.d_text is not None:
        d_t += np.asarray(grads.d_text, dtype=np.float64)

    return ModelGrads(
        image_weight=acts.image_in.T @ d_v,
        image_bias=d_v.sum(axis=0),
        text_weight=acts.text_in.T @ d_t,
        text_bias=d_t.sum(axis=0),
        head_weight=d_head_w,
        head_bias=d_head_b,
    )


def save_params(params: ModelParams, path) -> None:
    d = params.dim
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<HI", CHECKPOINT_VERSION, d)
    for arr in (
        params.image_weight,
        params.image_bias,
        params.text_weight,
        params.text_bias,
        params.head_weight,
        np.array([params.head_bias]),
    ):
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 10:
        raise FormatError("checkpoint file truncated before header")
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:4]!r}")
    version, d = struct.unpack("<HI", blob[4:10])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if d < 1:
        raise FormatError(f"invalid dimension {d}")
    expected = 10 + 8 * (2 * d * d + 3 * d + 1)
    if len(blob) != expected:
        raise FormatError(f"checkpoint length {len(blob)} does not match expected {expected} for dim {d}")
    values = np.frombuffer(blob, dtype="<f8", offset=10)
    if not np.all(np.isfinite(values)):
        raise FormatError("checkpoint contains non-finite values")
    offset = 0

    def take(count, shape):
        nonlocal offset
        out = values[offset : offset + count].reshape(shape).astype(np.float64)
        offset += count
        return out

    return ModelParams(
        image_weight=take(d * d, (d, d)),
        image_bias=take(d, (d,)),
        text_weight=take(d * d, (d, d)),
        text_bias=take(d, (d,)),
        head_weight=take(d, (d,)),
        head_bias=float(values[offset]),
    )


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    for f in fields(ModelParams):
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, np.ndarray):
            if not np.array_equal(x, y):
                return False
        elif x != y:
            return False
    return True
