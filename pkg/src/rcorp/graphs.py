"""Leader-follower digraph model and the graph-derived synthesis data.

Follower i receives information from follower j when the adjacency weight
a_ij is positive, and from the leader when the pinning gain g_i is positive.
Row i of the adjacency matrix therefore lists the *incoming* weights of
follower i.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import AllPinned, DegenerateNode
from .tolerances import SINGULAR_VALUE_RTOL

__all__ = [
    "AugmentedGraph",
    "GraphMatrices",
    "CycleDetected",
    "build_graph_matrices",
    "has_spanning_tree",
    "topological_order",
]


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AugmentedGraph:
    """Follower digraph plus leader pinning gains.

    adjacency : (N, N) array, a_ij >= 0 with zero diagonal; row i holds the
        incoming weights of follower i.
    pinning : (N,) array, g_i >= 0; positive exactly for the followers that
        observe the leader.

    Construction enforces shapes, nonnegativity, and the no-self-loop rule.
    The analytic requirements d_i + g_i > 0 and "not every follower pinned"
    are checked by :func:`build_graph_matrices`, through which every numeric
    pipeline passes; reachability queries remain legal on graphs that
    violate them.
    """

    adjacency: np.ndarray
    pinning: np.ndarray

    def __post_init__(self):
        adj = _frozen_array(self.adjacency)
        pin = _frozen_array(self.pinning)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        n = adj.shape[0]
        if n < 1:
            raise ValueError("a graph needs at least one follower")
        if pin.shape != (n,):
            raise ValueError(
                f"pinning must have length {n}, got shape {pin.shape}"
            )
        if np.any(adj < 0) or np.any(pin < 0):
            raise ValueError("adjacency weights and pinning gains must be >= 0")
        if np.any(np.diag(adj) != 0):
            raise ValueError("self-loops are not allowed (a_ii must be 0)")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "pinning", pin)

    @property
    def n_followers(self) -> int:
        return self.adjacency.shape[0]

    @property
    def in_degrees(self) -> np.ndarray:
        """d_i = sum_j a_ij."""
        return self.adjacency.sum(axis=1)


class CycleDetected:
    """Marker returned by :func:`topological_order` for cyclic graphs."""

    def __init__(self, remaining):
        # follower indices that could not be ordered (they lie on or behind
        # a directed cycle)
        self.remaining = tuple(int(i) for i in remaining)

    def __repr__(self):
        return f"CycleDetected(remaining={self.remaining})"


@dataclass(frozen=True)
class GraphMatrices:
    """Derived matrices and scalars for a fixed augmented graph and output
    dimension p.

    F : diag(1 / (d_i + g_i))
    FA : F @ adjacency
    W : (I_N - FA) kron I_p
    sigma_max : largest singular value of FA
    sigma_min_nz : smallest *nonzero* singular value of FA
    r_threshold : sigma_max**3 / sigma_min_nz, the lower bound every
        coupling-gain parameter r_i must respect
    """

    graph: AugmentedGraph
    p: int
    F: np.ndarray
    FA: np.ndarray
    W: np.ndarray
    sigma_max: float
    sigma_min_nz: float
    r_threshold: float


def build_graph_matrices(graph: AugmentedGraph, p: int) -> GraphMatrices:
    """Compute all graph-derived quantities used by assembly and synthesis.

    Rejects degenerate followers (d_i + g_i = 0, which would make the
    neighborhood averaging undefined) and fully pinned graphs (the local
    design bounds need at least one nonzero off-leader coupling, which also
    guarantees FA a nonzero singular value).
    """
    if p < 1:
        raise ValueError(f"output dimension p must be >= 1, got {p}")
    n = graph.n_followers
    scale = graph.in_degrees + graph.pinning
    dead = np.flatnonzero(scale <= 0)
    if dead.size:
        raise DegenerateNode(
            f"followers {dead.tolist()} have d_i + g_i = 0; every follower "
            "needs an incoming edge or a pinning gain"
        )
    if np.all(graph.pinning > 0):
        raise AllPinned(
            "every follower is pinned to the leader; the local design "
            "theory requires at least one unpinned follower"
        )
    F = np.diag(1.0 / scale)
    FA = F @ graph.adjacency
    W = np.kron(np.eye(n) - FA, np.eye(p))
    svals = np.linalg.svd(FA, compute_uv=False)
    sigma_max = float(svals[0])
    nonzero = svals[svals > SINGULAR_VALUE_RTOL * sigma_max]
    sigma_min_nz = float(nonzero[-1])
    for arr in (F, FA, W):
        arr.setflags(write=False)
    return GraphMatrices(
        graph=graph,
        p=int(p),
        F=F,
        FA=FA,
        W=W,
        sigma_max=sigma_max,
        sigma_min_nz=sigma_min_nz,
        r_threshold=sigma_max**3 / sigma_min_nz,
    )


def has_spanning_tree(graph: AugmentedGraph) -> bool:
    """True iff every follower is reachable from the leader.

    Breadth-first search over the unweighted support of the augmented
    digraph: leader -> i when g_i > 0 and j -> i when a_ij > 0.
    """
    n = graph.n_followers
    seen = np.zeros(n, dtype=bool)
    queue = deque(np.flatnonzero(graph.pinning > 0))
    seen[list(queue)] = True
    while queue:
        j = queue.popleft()
        for i in np.flatnonzero(graph.adjacency[:, j] > 0):
            if not seen[i]:
                seen[i] = True
                queue.append(i)
    return bool(seen.all())


def topological_order(graph: AugmentedGraph):
    """Order the followers so the permuted adjacency is strictly lower
    triangular, or report a cycle.

    Returns a list of follower indices (ancestors first) or a
    :class:`CycleDetected` marker.  The marker is data, not an error: it
    routes the caller to the cyclic design path.
    """
    n = graph.n_followers
    support = graph.adjacency > 0
    # in-degree of follower i within the follower digraph (edges j -> i)
    indeg = support.sum(axis=1)
    ready = sorted(np.flatnonzero(indeg == 0))
    order: list[int] = []
    indeg = indeg.copy()
    while ready:
        j = ready.pop(0)
        order.append(int(j))
        for i in np.flatnonzero(support[:, j]):
            indeg[i] -= 1
            if indeg[i] == 0:
                # insert keeping 'ready' sorted for a deterministic order
                lo = 0
                while lo < len(ready) and ready[lo] < i:
                    lo += 1
                ready.insert(lo, int(i))
    if len(order) < n:
        return CycleDetected(set(range(n)) - set(order))
    return order
