"""Closed-loop matrix assembly.

Two state orderings appear throughout:

* global ordering  [x_1, ..., x_N, z_1, ..., z_N]  -- used by the stacked
  matrices A, B, the structured gain K = [diag(K1_i)  diag(K2_i)], and the
  bordered Lyapunov-variable pattern;
* agent ordering   [x_1, z_1, x_2, z_2, ...]       -- used by the per-agent
  local matrices.

The permutation T maps global to agent ordering (T v reorders v), and
T (A + B K) T' equals the block-coupled form
diag(A_f_i) + diag(B_f_i) (FA kron I_p) diag(C_f_i).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .errors import DimensionMismatch, ShapeMismatch, StructureViolation
from .graphs import GraphMatrices
from .internal_model import InternalModel
from .linalg import as_matrix, rank_svd
from .plant import ExogenousChannels, MasModel, UncertaintyDelta, apply_uncertainty
from .tolerances import EIG_MODULUS_TOL

__all__ = [
    "Dimensions",
    "GainSet",
    "GlobalAssembly",
    "LocalAssembly",
    "PbhReport",
    "assemble_global",
    "assemble_local",
    "closed_loop",
    "check_pair_stabilizable",
    "permutation_matrix",
    "permutation_similarity",
    "structured_mask",
    "gain_mask",
    "coupled_local_form",
]


@dataclass(frozen=True)
class Dimensions:
    """Per-agent state/input sizes plus the shared output and controller
    sizes."""

    n: tuple[int, ...]
    m: tuple[int, ...]
    p: int
    n_z: int

    @property
    def n_agents(self) -> int:
        return len(self.n)

    @property
    def n_bar(self) -> int:
        return sum(self.n)

    @property
    def m_bar(self) -> int:
        return sum(self.m)

    @property
    def nz_total(self) -> int:
        return self.n_agents * self.n_z

    @property
    def total(self) -> int:
        return self.n_bar + self.nz_total

    def x_slice(self, i: int) -> slice:
        off = sum(self.n[:i])
        return slice(off, off + self.n[i])

    def z_slice(self, i: int) -> slice:
        off = self.n_bar + i * self.n_z
        return slice(off, off + self.n_z)

    def m_slice(self, i: int) -> slice:
        off = sum(self.m[:i])
        return slice(off, off + self.m[i])

    def agent_slice(self, i: int) -> slice:
        """Rows of agent i in the agent ordering [x_1, z_1, x_2, z_2, ...]."""
        off = sum(self.n[:i]) + i * self.n_z
        return slice(off, off + self.n[i] + self.n_z)

    @classmethod
    def of(cls, model: MasModel, im: InternalModel) -> "Dimensions":
        if im.n_agents != model.n_agents:
            raise DimensionMismatch(
                f"internal model covers {im.n_agents} agents, model has "
                f"{model.n_agents}"
            )
        if im.p != model.p:
            raise DimensionMismatch(
                f"internal model output dimension {im.p} != plant p {model.p}"
            )
        return cls(
            n=tuple(a.n for a in model.agents),
            m=tuple(a.m for a in model.agents),
            p=model.p,
            n_z=im.n_z,
        )


@dataclass(frozen=True)
class GainSet:
    """Structured feedback gain: state blocks K1_i and controller blocks
    K2_i, assembled globally as K = [diag(K1_i)  diag(K2_i)]."""

    K1: tuple[np.ndarray, ...]
    K2: tuple[np.ndarray, ...]

    def __post_init__(self):
        K1 = tuple(as_matrix(k, "K1") for k in self.K1)
        K2 = tuple(as_matrix(k, "K2") for k in self.K2)
        if len(K1) != len(K2) or not K1:
            raise ShapeMismatch("K1/K2 lists must be nonempty and equal length")
        for i, (k1, k2) in enumerate(zip(K1, K2)):
            if k1.shape[0] != k2.shape[0]:
                raise ShapeMismatch(
                    f"agent {i}: K1 and K2 row counts differ "
                    f"({k1.shape[0]} vs {k2.shape[0]})"
                )
        object.__setattr__(self, "K1", K1)
        object.__setattr__(self, "K2", K2)

    @property
    def n_agents(self) -> int:
        return len(self.K1)

    def agent(self, i: int) -> np.ndarray:
        """Local gain [K1_i  K2_i]."""
        return np.hstack([self.K1[i], self.K2[i]])

    def dense(self, dims: Dimensions) -> np.ndarray:
        """Assemble the structured global gain matrix."""
        self._check_dims(dims)
        K = np.zeros((dims.m_bar, dims.total))
        for i in range(dims.n_agents):
            K[dims.m_slice(i), dims.x_slice(i)] = self.K1[i]
            K[dims.m_slice(i), dims.z_slice(i)] = self.K2[i]
        return K

    def _check_dims(self, dims: Dimensions):
        if self.n_agents != dims.n_agents:
            raise ShapeMismatch(
                f"gain set covers {self.n_agents} agents, expected "
                f"{dims.n_agents}"
            )
        for i in range(dims.n_agents):
            if self.K1[i].shape != (dims.m[i], dims.n[i]):
                raise ShapeMismatch(
                    f"agent {i}: K1 must be {dims.m[i]}x{dims.n[i]}, got "
                    f"{self.K1[i].shape}"
                )
            if self.K2[i].shape != (dims.m[i], dims.n_z):
                raise ShapeMismatch(
                    f"agent {i}: K2 must be {dims.m[i]}x{dims.n_z}, got "
                    f"{self.K2[i].shape}"
                )

    @classmethod
    def from_dense(cls, K, dims: Dimensions) -> "GainSet":
        """Split a dense gain along the block pattern.

        Entries outside the pattern must be exactly zero; anything else is
        rejected rather than silently zeroed.
        """
        K = np.asarray(K, dtype=float)
        if K.shape != (dims.m_bar, dims.total):
            raise ShapeMismatch(
                f"dense gain must be {dims.m_bar}x{dims.total}, got {K.shape}"
            )
        offenders = K[~gain_mask(dims)]
        if np.any(offenders != 0.0):
            raise StructureViolation(
                "dense gain has nonzero entries outside the block-diagonal "
                "feedback pattern"
            )
        return cls(
            K1=tuple(K[dims.m_slice(i), dims.x_slice(i)] for i in range(dims.n_agents)),
            K2=tuple(K[dims.m_slice(i), dims.z_slice(i)] for i in range(dims.n_agents)),
        )

    def to_payload(self) -> dict:
        return {
            "agents": [
                {"K1": self.K1[i].tolist(), "K2": self.K2[i].tolist()}
                for i in range(self.n_agents)
            ]
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "GainSet":
        try:
            agents = payload["agents"]
            return cls(
                K1=tuple(np.array(a["K1"], dtype=float) for a in agents),
                K2=tuple(np.array(a["K2"], dtype=float) for a in agents),
            )
        except (KeyError, TypeError) as exc:
            raise ShapeMismatch(f"malformed gain payload: {exc}") from exc


def gain_mask(dims: Dimensions) -> np.ndarray:
    """Boolean support of the structured gain."""
    mask = np.zeros((dims.m_bar, dims.total), dtype=bool)
    for i in range(dims.n_agents):
        mask[dims.m_slice(i), dims.x_slice(i)] = True
        mask[dims.m_slice(i), dims.z_slice(i)] = True
    return mask


def structured_mask(dims: Dimensions) -> np.ndarray:
    """Boolean support of the bordered Lyapunov-variable pattern
    [[diag(P1_i), diag(Po_i)], [diag(Po_i'), diag(P2_i)]] in the global
    ordering."""
    mask = np.zeros((dims.total, dims.total), dtype=bool)
    for i in range(dims.n_agents):
        xs, zs = dims.x_slice(i), dims.z_slice(i)
        mask[xs, xs] = True
        mask[zs, zs] = True
        mask[xs, zs] = True
        mask[zs, xs] = True
    return mask


def permutation_matrix(dims: Dimensions) -> np.ndarray:
    """Permutation T with T v mapping the global ordering to the agent
    ordering."""
    order = []
    for i in range(dims.n_agents):
        xs = dims.x_slice(i)
        zs = dims.z_slice(i)
        order.extend(range(xs.start, xs.stop))
        order.extend(range(zs.start, zs.stop))
    T = np.eye(dims.total)[order, :]
    T.setflags(write=False)
    return T


@dataclass(frozen=True)
class GlobalAssembly:
    """Stacked nominal matrices of the interconnected closed loop."""

    model: MasModel
    im: InternalModel
    gm: GraphMatrices
    dims: Dimensions
    A: np.ndarray
    B: np.ndarray
    T: np.ndarray

    def closed_loop(self, K) -> tuple[np.ndarray, np.ndarray]:
        return closed_loop(self, K)

    def perturbed(self, delta: UncertaintyDelta) -> tuple[np.ndarray, np.ndarray]:
        """Uncertain stacked matrices (A-bar, B-bar) for a perturbation."""
        return _stack(apply_uncertainty(self.model, delta), self.im, self.gm)

    def output_matrix(self, K: GainSet, delta: UncertaintyDelta | None = None) -> np.ndarray:
        """Tracking-error output matrix [diag(C_i + D_i K1_i)  diag(D_i K2_i)]
        (perturbed C_i, D_i when a delta is given)."""
        model = self.model if delta is None else apply_uncertainty(self.model, delta)
        K._check_dims(self.dims)
        left = block_diag(*[
            ag.C + ag.D @ K.K1[i] for i, ag in enumerate(model.agents)
        ])
        right = block_diag(*[ag.D @ K.K2[i] for i, ag in enumerate(model.agents)])
        return np.hstack([left, right])

    def exo_input(self, channels: ExogenousChannels) -> tuple[np.ndarray, np.ndarray]:
        """Exogenous channel matrices (B_g, D_g) for given (E_i, F_ref)."""
        channels = ExogenousChannels.validated(self.model, channels.E, channels.F_ref)
        N = self.dims.n_agents
        Fa = np.kron(np.eye(N), channels.F_ref)
        dG2 = block_diag(*self.im.G2)
        B_g = np.vstack([block_diag(*channels.E), -dG2 @ self.gm.W @ Fa])
        D_g = -Fa
        return B_g, D_g

    @property
    def A0a(self) -> np.ndarray:
        """Stacked exosystem I_N kron A0 driving v_a = 1_N kron v."""
        return np.kron(np.eye(self.dims.n_agents), self.model.exo.A0)


def _stack(model: MasModel, im: InternalModel, gm: GraphMatrices):
    dA = block_diag(*[a.A for a in model.agents])
    dB = block_diag(*[a.B for a in model.agents])
    dC = block_diag(*[a.C for a in model.agents])
    dD = block_diag(*[a.D for a in model.agents])
    dG1 = block_diag(*im.G1)
    dG2 = block_diag(*im.G2)
    n_bar = dA.shape[0]
    nz_total = dG1.shape[0]
    A = np.block([
        [dA, np.zeros((n_bar, nz_total))],
        [dG2 @ gm.W @ dC, dG1],
    ])
    B = np.vstack([dB, dG2 @ gm.W @ dD])
    return A, B


def assemble_global(model: MasModel, im: InternalModel, gm: GraphMatrices) -> GlobalAssembly:
    """Build the nominal stacked matrices, the permutation T, and the
    dimension bookkeeping for one (model, internal model, graph) triple."""
    dims = Dimensions.of(model, im)
    if gm.graph.n_followers != model.n_agents:
        raise DimensionMismatch(
            f"graph has {gm.graph.n_followers} followers, model has "
            f"{model.n_agents} agents"
        )
    if gm.p != model.p:
        raise DimensionMismatch(
            f"graph matrices built for p={gm.p}, model has p={model.p}"
        )
    A, B = _stack(model, im, gm)
    A.setflags(write=False)
    B.setflags(write=False)
    return GlobalAssembly(
        model=model, im=im, gm=gm, dims=dims, A=A, B=B,
        T=permutation_matrix(dims),
    )


def closed_loop(ga: GlobalAssembly, K) -> tuple[np.ndarray, np.ndarray]:
    """Nominal closed-loop pair (A_g, C_g) = (A + B K, output matrix).

    ``K`` may be a GainSet or a dense matrix; a dense candidate must be
    exactly zero outside the block pattern (StructureViolation otherwise).
    """
    if not isinstance(K, GainSet):
        K = GainSet.from_dense(K, ga.dims)
    K._check_dims(ga.dims)
    A_g = ga.A + ga.B @ K.dense(ga.dims)
    C_g = ga.output_matrix(K)
    return A_g, C_g


@dataclass(frozen=True)
class LocalAssembly:
    """One agent's controller-augmented matrices in the agent ordering
    [x_i, z_i]:

    A_o = [[A, 0], [G2 C, G1]],  B_o = [B; G2 D],  B_f = [0; -G2],
    C_o = [C  0].
    """

    index: int
    A_o: np.ndarray
    B_o: np.ndarray
    B_f: np.ndarray
    C_o: np.ndarray
    D: np.ndarray
    n: int
    n_z: int

    def closed_A(self, K_i) -> np.ndarray:
        """A_f = A_o + B_o K_i for a local gain [K1_i  K2_i]."""
        return self.A_o + self.B_o @ np.atleast_2d(np.asarray(K_i, dtype=float))

    def closed_C(self, K_i) -> np.ndarray:
        """C_f = C_o + D K_i."""
        return self.C_o + self.D @ np.atleast_2d(np.asarray(K_i, dtype=float))


def assemble_local(model: MasModel, im: InternalModel) -> list[LocalAssembly]:
    """Per-agent controller-augmented matrices."""
    dims = Dimensions.of(model, im)
    out = []
    for i, ag in enumerate(model.agents):
        G1, G2 = im.G1[i], im.G2[i]
        A_o = np.block([
            [ag.A, np.zeros((ag.n, dims.n_z))],
            [G2 @ ag.C, G1],
        ])
        B_o = np.vstack([ag.B, G2 @ ag.D])
        B_f = np.vstack([np.zeros((ag.n, dims.p)), -G2])
        C_o = np.hstack([ag.C, np.zeros((dims.p, dims.n_z))])
        out.append(
            LocalAssembly(
                index=i, A_o=A_o, B_o=B_o, B_f=B_f, C_o=C_o, D=ag.D,
                n=ag.n, n_z=dims.n_z,
            )
        )
    return out


def coupled_local_form(la: list[LocalAssembly], gm: GraphMatrices, K: GainSet) -> np.ndarray:
    """diag(A_f_i) + diag(B_f_i) (FA kron I_p) diag(C_f_i), the closed loop
    in the agent ordering."""
    A_f = block_diag(*[a.closed_A(K.agent(a.index)) for a in la])
    B_f = block_diag(*[a.B_f for a in la])
    C_f = block_diag(*[a.closed_C(K.agent(a.index)) for a in la])
    return A_f + B_f @ np.kron(gm.FA, np.eye(gm.p)) @ C_f


def permutation_similarity(ga: GlobalAssembly, la: list[LocalAssembly], K) -> float:
    """Frobenius residual of T (A + B K) T' against the block-coupled local
    form; zero up to roundoff for consistent inputs."""
    if not isinstance(K, GainSet):
        K = GainSet.from_dense(K, ga.dims)
    A_g, _ = closed_loop(ga, K)
    return float(np.linalg.norm(ga.T @ A_g @ ga.T.T - coupled_local_form(la, ga.gm, K)))


@dataclass(frozen=True)
class PbhFailure:
    eigenvalue: complex
    rank: int
    required: int


@dataclass(frozen=True)
class PbhReport:
    """Outcome of the stabilizability rank test on the stacked pair (A, B).

    Truthiness follows ``ok``; ``failures`` lists every unstable eigenvalue
    at which [A - lambda I, B] drops rank, as a constructive certificate."""

    ok: bool
    dimension: int
    failures: tuple[PbhFailure, ...]

    def __bool__(self) -> bool:
        return self.ok


def check_pair_stabilizable(ga: GlobalAssembly, tol: float = EIG_MODULUS_TOL) -> PbhReport:
    """PBH test on the stacked pair: rank [A - lambda I, B] must be full at
    every eigenvalue of A with |lambda| >= 1."""
    n_total = ga.dims.total
    failures = []
    for lam in np.linalg.eigvals(ga.A):
        if abs(lam) < 1.0 - tol:
            continue
        M = np.hstack([ga.A - lam * np.eye(n_total), ga.B.astype(complex)])
        r = rank_svd(M)
        if r != n_total:
            failures.append(PbhFailure(eigenvalue=complex(lam), rank=r, required=n_total))
    return PbhReport(ok=not failures, dimension=n_total, failures=tuple(failures))
