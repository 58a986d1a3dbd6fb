"""Dense linear-algebra primitives shared by the losses, model, and index.

All computation is float64; inputs are validated to be finite. Vectors are
1-D numpy arrays, matrices are 2-D. Norms below ``DEGENERATE_NORM`` signal
an all-zero embedding and raise instead of silently dividing.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateVectorError, InsufficientDataError, ShapeError

DEGENERATE_NORM = 1e-12


def as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("vector contains non-finite values")
    return arr


def as_matrix(m) -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("matrix contains non-finite values")
    return arr


def l2_normalize(v) -> np.ndarray:
    """Scale a vector to unit Euclidean norm, preserving direction."""
    arr = as_vector(v)
    norm = float(np.sqrt(np.dot(arr, arr)))
    if norm < DEGENERATE_NORM:
        raise DegenerateVectorError(f"vector norm {norm:g} is below {DEGENERATE_NORM:g}")
    return arr / norm


def row_norms(m: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", m, m))


def l2_normalize_rows(m) -> np.ndarray:
    """Row-wise :func:`l2_normalize`; raises if any row is degenerate."""
    arr = as_matrix(m)
    norms = row_norms(arr)
    if np.any(norms < DEGENERATE_NORM):
        bad = int(np.argmin(norms))
        raise DegenerateVectorError(f"row {bad} has norm {norms[bad]:g}, below {DEGENERATE_NORM:g}")
    return arr / norms[:, None]


def cosine_matrix(a, b) -> np.ndarray:
    """Pairwise dot products of pre-normalized rows: out[i, j] = a_i . b_j."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a @ b.T


def log_softmax_rows(m) -> np.ndarray:
    """Row-wise log-softmax, stabilized by per-row max subtraction."""
    arr = as_matrix(m)
    shifted = arr - arr.max(axis=1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def log_softmax_row(m, row: int) -> np.ndarray:
    arr = as_matrix(m)
    if not 0 <= row < arr.shape[0]:
        raise ShapeError(f"row {row} out of bounds for {arr.shape[0]} rows")
    return log_softmax_rows(arr[row : row + 1])[0]


def pca_project_2d(x) -> np.ndarray:
    """Project rows of ``x`` onto the top-2 principal directions.

    Mean-centers the data, takes the leading right singular vectors, and
    fixes each component's sign so its first nonzero loading is positive.
    Used as the 2-D cluster export in place of a stochastic embedding.
    """
    arr = as_matrix(x)
    if arr.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 rows for a 2-D projection, got {arr.shape[0]}")
    centered = arr - arr.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = np.zeros((2, arr.shape[1]))
    components[: vt.shape[0]] = vt[:2]
    for i in range(components.shape[0]):
        nonzero = np.nonzero(np.abs(components[i]) > DEGENERATE_NORM)[0]
        if nonzero.size and components[i, nonzero[0]] < 0:
            components[i] = -components[i]
    return centered @ components.T
