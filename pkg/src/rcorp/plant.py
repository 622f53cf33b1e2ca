"""Heterogeneous agent dynamics, the exosystem, and the classical
solvability checks (antistable exosystem, transmission rank, per-agent
stabilizability)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ShapeMismatch
from .linalg import as_matrix, rank_svd
from .tolerances import EIG_MODULUS_TOL

__all__ = [
    "AgentPlant",
    "Exosystem",
    "MasModel",
    "UncertaintyDelta",
    "ExogenousChannels",
    "check_exosystem_antistable",
    "check_transmission_rank",
    "check_agent_stabilizable",
    "apply_uncertainty",
]


@dataclass(frozen=True)
class AgentPlant:
    """One follower's nominal state-space matrices (A, B, C, D)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        D = as_matrix(self.D, "D")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionMismatch(f"C has {C.shape[1]} cols, expected {n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch(
                f"D must be {C.shape[0]}x{B.shape[1]}, got {D.shape}"
            )
        for field, arr in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, field, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class Exosystem:
    """Autonomous reference/disturbance generator v+ = A0 v."""

    A0: np.ndarray

    def __post_init__(self):
        A0 = as_matrix(self.A0, "A0")
        if A0.shape[0] != A0.shape[1]:
            raise DimensionMismatch(f"A0 must be square, got {A0.shape}")
        object.__setattr__(self, "A0", A0)

    @property
    def n0(self) -> int:
        return self.A0.shape[0]


@dataclass(frozen=True)
class MasModel:
    """Ordered follower plants plus the shared exosystem."""

    agents: tuple[AgentPlant, ...]
    exo: Exosystem

    def __post_init__(self):
        agents = tuple(self.agents)
        if not agents:
            raise DimensionMismatch("a model needs at least one agent")
        p = agents[0].p
        for i, ag in enumerate(agents):
            if ag.p != p:
                raise DimensionMismatch(
                    f"agent {i} has p={ag.p}, expected {p} (shared output "
                    "dimension)"
                )
        object.__setattr__(self, "agents", agents)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def p(self) -> int:
        return self.agents[0].p


@dataclass(frozen=True)
class UncertaintyDelta:
    """Additive perturbations of every agent's (A, B, C, D)."""

    dA: tuple[np.ndarray, ...]
    dB: tuple[np.ndarray, ...]
    dC: tuple[np.ndarray, ...]
    dD: tuple[np.ndarray, ...]

    def __post_init__(self):
        for field in ("dA", "dB", "dC", "dD"):
            mats = tuple(as_matrix(m, field) for m in getattr(self, field))
            object.__setattr__(self, field, mats)
        counts = {len(self.dA), len(self.dB), len(self.dC), len(self.dD)}
        if len(counts) != 1:
            raise ShapeMismatch("per-agent perturbation lists differ in length")

    @classmethod
    def zero(cls, model: MasModel) -> "UncertaintyDelta":
        return cls(
            dA=tuple(np.zeros_like(a.A) for a in model.agents),
            dB=tuple(np.zeros_like(a.B) for a in model.agents),
            dC=tuple(np.zeros_like(a.C) for a in model.agents),
            dD=tuple(np.zeros_like(a.D) for a in model.agents),
        )

    @classmethod
    def sample(cls, model: MasModel, rho: float, rng: np.random.Generator):
        """Entrywise uniform perturbations on [-rho, rho]."""
        def draw(shape):
            return rng.uniform(-rho, rho, size=shape)

        return cls(
            dA=tuple(draw(a.A.shape) for a in model.agents),
            dB=tuple(draw(a.B.shape) for a in model.agents),
            dC=tuple(draw(a.C.shape) for a in model.agents),
            dD=tuple(draw(a.D.shape) for a in model.agents),
        )

    def negated(self) -> "UncertaintyDelta":
        return UncertaintyDelta(
            dA=tuple(-m for m in self.dA),
            dB=tuple(-m for m in self.dB),
            dC=tuple(-m for m in self.dC),
            dD=tuple(-m for m in self.dD),
        )


@dataclass(frozen=True)
class ExogenousChannels:
    """Disturbance injections E_i and the tracked reference map F_ref."""

    E: tuple[np.ndarray, ...]
    F_ref: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "E", tuple(as_matrix(m, "E") for m in self.E)
        )
        object.__setattr__(self, "F_ref", as_matrix(self.F_ref, "F_ref"))

    @classmethod
    def validated(cls, model: MasModel, E, F_ref) -> "ExogenousChannels":
        ch = cls(E=tuple(E), F_ref=F_ref)
        n0 = model.exo.n0
        if len(ch.E) != model.n_agents:
            raise ShapeMismatch(
                f"expected {model.n_agents} disturbance matrices, got {len(ch.E)}"
            )
        for i, (Ei, ag) in enumerate(zip(ch.E, model.agents)):
            if Ei.shape != (ag.n, n0):
                raise ShapeMismatch(
                    f"E[{i}] must be {ag.n}x{n0}, got {Ei.shape}"
                )
        if ch.F_ref.shape != (model.p, n0):
            raise ShapeMismatch(
                f"F_ref must be {model.p}x{n0}, got {ch.F_ref.shape}"
            )
        return ch


def check_exosystem_antistable(exo: Exosystem, tol: float = EIG_MODULUS_TOL) -> bool:
    """True iff every exosystem eigenvalue has modulus >= 1 - tol."""
    return bool(np.all(np.abs(np.linalg.eigvals(exo.A0)) >= 1.0 - tol))


def check_transmission_rank(agent: AgentPlant, exo: Exosystem) -> bool:
    """Full-rank test of [[A - lambda I, B], [C, D]] at every exosystem
    eigenvalue (complex SVD rank)."""
    n, p = agent.n, agent.p
    for lam in np.linalg.eigvals(exo.A0):
        M = np.block(
            [
                [agent.A - lam * np.eye(n), agent.B.astype(complex)],
                [agent.C.astype(complex), agent.D.astype(complex)],
            ]
        )
        if rank_svd(M) != n + p:
            return False
    return True


def check_agent_stabilizable(agent: AgentPlant, tol: float = EIG_MODULUS_TOL) -> bool:
    """PBH test: rank [A - lambda I, B] = n at every eigenvalue with
    |lambda| >= 1."""
    n = agent.n
    for lam in np.linalg.eigvals(agent.A):
        if abs(lam) < 1.0 - tol:
            continue
        M = np.hstack([agent.A - lam * np.eye(n), agent.B.astype(complex)])
        if rank_svd(M) != n:
            return False
    return True


def apply_uncertainty(model: MasModel, delta: UncertaintyDelta) -> MasModel:
    """Return the perturbed model (A + dA, ...); the input is untouched."""
    if len(delta.dA) != model.n_agents:
        raise ShapeMismatch(
            f"delta covers {len(delta.dA)} agents, model has {model.n_agents}"
        )
    perturbed = []
    for i, ag in enumerate(model.agents):
        for name, nom, d in (
            ("A", ag.A, delta.dA[i]),
            ("B", ag.B, delta.dB[i]),
            ("C", ag.C, delta.dC[i]),
            ("D", ag.D, delta.dD[i]),
        ):
            if nom.shape != d.shape:
                raise ShapeMismatch(
                    f"agent {i}: delta {name} has shape {d.shape}, "
                    f"expected {nom.shape}"
                )
        perturbed.append(
            AgentPlant(
                A=ag.A + delta.dA[i],
                B=ag.B + delta.dB[i],
                C=ag.C + delta.dC[i],
                D=ag.D + delta.dD[i],
            )
        )
    return MasModel(agents=tuple(perturbed), exo=model.exo)
