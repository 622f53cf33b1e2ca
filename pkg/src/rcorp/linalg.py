"""Small dense linear-algebra helpers shared across modules."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ShapeMismatch
from .tolerances import RANK_RTOL

__all__ = ["as_matrix", "rank_svd", "spectral_radius", "eig_match_distance"]


def as_matrix(values, name: str) -> np.ndarray:
    """Coerce to a read-only 2-D float array."""
    arr = np.array(values, dtype=float)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    arr.setflags(write=False)
    return arr


def rank_svd(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Numerical rank via SVD with a scale-relative threshold."""
    if M.size == 0:
        return 0
    svals = np.linalg.svd(M, compute_uv=False)
    top = svals[0]
    if top == 0:
        return 0
    return int(np.count_nonzero(svals > rtol * top))


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus."""
    return float(np.abs(np.linalg.eigvals(np.asarray(M, dtype=float))).max())


def eig_match_distance(a, b) -> float:
    """Largest pairing distance between two eigenvalue multisets.

    Uses an optimal assignment so the comparison is insensitive to ordering
    and to ties among nearly equal eigenvalues.
    """
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    if a.size != b.size:
        raise ShapeMismatch(
            f"eigenvalue multisets differ in size ({a.size} vs {b.size})"
        )
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())
