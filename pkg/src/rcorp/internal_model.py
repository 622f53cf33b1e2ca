"""Replicated-mode controller blocks.

Each agent's controller embeds p reachable companion blocks whose
characteristic polynomial equals the minimal polynomial of the exosystem
matrix, so every exosystem mode is reproduced in every error channel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .linalg import as_matrix, rank_svd
from .tolerances import MINPOLY_RTOL

__all__ = [
    "InternalModel",
    "PCopyBlocks",
    "minimal_polynomial",
    "companion",
    "build_p_copy",
    "verify_p_copy",
]


def minimal_polynomial(A0, rtol: float = MINPOLY_RTOL) -> np.ndarray:
    """Monic minimal polynomial of a square matrix.

    Returns the coefficient vector in ascending order, [c_0, ..., c_{h-1}, 1]
    for m(x) = c_0 + c_1 x + ... + x**h.  The degree h is the smallest for
    which {I, A0, ..., A0**h} is linearly dependent; dependence is decided
    by the relative least-squares residual of expressing A0**h in the lower
    powers (threshold ``rtol``), which is robust at the matrix sizes used
    here (n0 up to ~10).
    """
    A0 = as_matrix(A0, "A0")
    if A0.shape[0] != A0.shape[1]:
        raise DimensionMismatch(f"A0 must be square, got {A0.shape}")
    n = A0.shape[0]
    powers = [np.eye(n)]
    for _ in range(n):
        powers.append(powers[-1] @ A0)
    scale = max(1.0, float(np.linalg.norm(A0)))
    for h in range(1, n + 1):
        basis = np.stack([p.ravel() for p in powers[:h]], axis=1)
        target = powers[h].ravel()
        coeffs, *_ = np.linalg.lstsq(basis, target, rcond=None)
        residual = np.linalg.norm(basis @ coeffs - target)
        if residual <= rtol * scale**h:
            return np.concatenate([-coeffs, [1.0]])
    # Cayley-Hamilton guarantees h <= n, so the h = n case cannot miss; if
    # it does, the lstsq threshold was too tight for this scaling.
    coeffs, *_ = np.linalg.lstsq(
        np.stack([p.ravel() for p in powers[:n]], axis=1),
        powers[n].ravel(),
        rcond=None,
    )
    return np.concatenate([-coeffs, [1.0]])


def companion(coeffs) -> np.ndarray:
    """Companion matrix of a monic polynomial given in ascending
    coefficients [c_0, ..., c_{h-1}, 1]: unit subdiagonal, last column
    -(c_0, ..., c_{h-1})."""
    coeffs = np.asarray(coeffs, dtype=float)
    h = coeffs.size - 1
    if h < 1:
        raise ValueError("polynomial must have degree >= 1")
    if coeffs[-1] != 1.0:
        raise ValueError("polynomial must be monic")
    C = np.zeros((h, h))
    C[1:, :-1] = np.eye(h - 1)
    C[:, -1] = -coeffs[:-1]
    return C


def char_poly(M: np.ndarray) -> np.ndarray:
    """Characteristic polynomial, ascending monic coefficients."""
    return np.poly(M)[::-1].copy()


@dataclass(frozen=True)
class PCopyBlocks:
    """One agent's controller pair assembled from p identical companion
    blocks: G1 = diag(alpha, ..., alpha), G2 stacks beta block-diagonally."""

    alpha: np.ndarray
    beta: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    h: int
    p: int


def build_p_copy(A0, p: int) -> PCopyBlocks:
    """Construct the canonical replicated-mode pair for an exosystem matrix.

    alpha is the companion matrix of the minimal polynomial of A0 and beta
    the last unit vector, which is always a reachable pair.  The same block
    is used for each of the p copies.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    coeffs = minimal_polynomial(A0)
    alpha = companion(coeffs)
    h = alpha.shape[0]
    beta = np.zeros((h, 1))
    beta[-1, 0] = 1.0
    G1 = np.kron(np.eye(p), alpha)
    G2 = np.zeros((p * h, p))
    for ell in range(p):
        G2[ell * h:(ell + 1) * h, ell:ell + 1] = beta
    return PCopyBlocks(alpha=alpha, beta=beta, G1=G1, G2=G2, h=h, p=p)


@dataclass(frozen=True)
class InternalModel:
    """Per-agent controller pairs (G1_i, G2_i), all of the same size."""

    G1: tuple[np.ndarray, ...]
    G2: tuple[np.ndarray, ...]

    def __post_init__(self):
        G1 = tuple(as_matrix(m, "G1") for m in self.G1)
        G2 = tuple(as_matrix(m, "G2") for m in self.G2)
        if len(G1) != len(G2) or not G1:
            raise DimensionMismatch("G1/G2 lists must be nonempty and equal length")
        n_z = G1[0].shape[0]
        p = G2[0].shape[1]
        for i, (g1, g2) in enumerate(zip(G1, G2)):
            if g1.shape != (n_z, n_z):
                raise DimensionMismatch(
                    f"agent {i}: G1 must be {n_z}x{n_z}, got {g1.shape}"
                )
            if g2.shape != (n_z, p):
                raise DimensionMismatch(
                    f"agent {i}: G2 must be {n_z}x{p}, got {g2.shape}"
                )
        object.__setattr__(self, "G1", G1)
        object.__setattr__(self, "G2", G2)

    @property
    def n_agents(self) -> int:
        return len(self.G1)

    @property
    def n_z(self) -> int:
        return self.G1[0].shape[0]

    @property
    def p(self) -> int:
        return self.G2[0].shape[1]

    @classmethod
    def build(cls, A0, p: int, n_agents: int) -> "InternalModel":
        """Auto-built model: the canonical pair replicated for every agent."""
        blocks = build_p_copy(A0, p)
        return cls(G1=(blocks.G1,) * n_agents, G2=(blocks.G2,) * n_agents)


def _verify_pair(G1: np.ndarray, G2: np.ndarray, minpoly: np.ndarray,
                 rtol: float) -> bool:
    h = minpoly.size - 1
    p = G2.shape[1]
    if G1.shape[0] != p * h:
        return False
    scale1 = max(1.0, float(np.abs(G1).max()))
    scale2 = max(1.0, float(np.abs(G2).max()))
    coeff_scale = max(1.0, float(np.abs(minpoly).max()))
    for ell in range(p):
        rows = slice(ell * h, (ell + 1) * h)
        alpha = G1[rows, rows]
        beta = G2[rows, ell:ell + 1]
        # off-block entries must vanish
        off1 = G1[rows, :].copy()
        off1[:, rows] = 0.0
        off2 = G2[rows, :].copy()
        off2[:, ell] = 0.0
        if np.abs(off1).max(initial=0.0) > rtol * scale1:
            return False
        if np.abs(off2).max(initial=0.0) > rtol * scale2:
            return False
        if np.abs(char_poly(alpha) - minpoly).max() > rtol * coeff_scale:
            return False
        reach = np.hstack([np.linalg.matrix_power(alpha, k) @ beta for k in range(h)])
        if rank_svd(reach) != h:
            return False
    return True


def verify_p_copy(im: InternalModel, A0, rtol: float = MINPOLY_RTOL) -> bool:
    """Check that every agent's pair embeds the exosystem modes.

    Each G1_i must be block-diagonal with p blocks whose characteristic
    polynomial matches the minimal polynomial of A0 coefficient-wise, each
    paired with a reachable input column in G2_i.  Accepts any valid pair,
    not only the canonical construction.
    """
    minpoly = minimal_polynomial(A0)
    h = minpoly.size - 1
    if im.n_z != im.p * h:
        return False
    return all(
        _verify_pair(g1, g2, minpoly, rtol) for g1, g2 in zip(im.G1, im.G2)
    )
