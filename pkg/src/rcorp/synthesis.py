"""Gain synthesis: global structured design, agent-wise convex local design
(zero feedthrough), acyclic per-agent stabilization, and the agent-wise
certificate check for a given gain.

The global path searches a bordered-structured Lyapunov variable Q together
with a block gain surrogate Y, then recovers per-agent gains from the
per-agent blocks of (Y, Q).  The local paths work entirely on each agent's
controller-augmented matrices; their per-agent certificates compose into a
structured Lyapunov function for the full interconnection.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .assembly import (
    Dimensions,
    GainSet,
    GlobalAssembly,
    LocalAssembly,
    assemble_global,
    assemble_local,
    closed_loop,
    coupled_local_form,
    gain_mask,
    permutation_matrix,
    structured_mask,
)
from .errors import (
    BadThreshold,
    GraphHasCycle,
    NonzeroD,
    NumericallyInfeasible,
    RiccatiDiverged,
)
from .graphs import CycleDetected, GraphMatrices, topological_order
from .internal_model import InternalModel
from .linalg import eig_match_distance, spectral_radius
from .lmi import LmiConstraint, LmiVariable, solve_feasibility
from .plant import MasModel
from .tolerances import RICCATI_MAX_ITER, RICCATI_TOL, SCHUR_TOL

__all__ = [
    "GlobalSynthesisResult",
    "AgentLocalResult",
    "LocalSynthesisResult",
    "AgentCertificate",
    "CertificateReport",
    "synthesize_global",
    "synthesize_local",
    "check_certificate",
    "synthesize_acyclic",
    "riccati_iteration",
    "lqr_gain",
    "global_design_problem",
    "local_design_problem",
    "certificate_problem",
]

log = logging.getLogger(__name__)

# The global design program is jointly homogeneous in (Q, Y); capping Q
# pins the free scale without affecting feasibility and keeps the
# maximized margin a meaningful contraction certificate.
GLOBAL_SCALE_CAP = 100.0

# Steering stage keeps this fraction of the first-stage margin.
_STEER_MARGIN_FRACTION = 0.5


def riccati_iteration(A, B, *, tol: float = RICCATI_TOL,
                      max_iter: int = RICCATI_MAX_ITER) -> np.ndarray:
    """Fixed-point solution of the discrete Riccati equation with identity
    weights: X = A'XA - A'XB (I + B'XB)^-1 B'XA + I, started from X = I.

    Raises RiccatiDiverged when the iterate blows up or the budget runs out
    (the pair is then not stabilizable, or numerically hopeless).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = A.shape[0], B.shape[1]
    X = np.eye(n)
    for _ in range(max_iter):
        gain = np.linalg.solve(np.eye(m) + B.T @ X @ B, B.T @ X @ A)
        X_next = A.T @ X @ A - A.T @ X @ B @ gain + np.eye(n)
        step = np.linalg.norm(X_next - X)
        X = X_next
        if step < tol:
            return X
        if np.linalg.norm(X) > 1e12:
            raise RiccatiDiverged("Riccati iterate exceeded 1e12")
    raise RiccatiDiverged(f"no convergence within {max_iter} iterations")


def lqr_gain(A, B) -> np.ndarray:
    """Stabilizing state-feedback gain from the identity-weight Riccati
    solution: K = -(I + B'XB)^-1 B'XA."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    X = riccati_iteration(A, B)
    return -np.linalg.solve(np.eye(B.shape[1]) + B.T @ X @ B, B.T @ X @ A)


# ---------------------------------------------------------------------------
# problem builders


def global_design_problem(ga: GlobalAssembly, scale_cap: float | None = GLOBAL_SCALE_CAP):
    """Variables and constraints of the global structured design program:
    bordered Q > 0 and block Y with
    [[-Q, AQ + BY], [QA' + Y'B', -Q]] < 0."""
    dims = ga.dims
    ntot = dims.total
    A, B = ga.A, ga.B
    Q = LmiVariable("Q", (ntot, ntot), symmetric=True, mask=structured_mask(dims))
    Y = LmiVariable("Y", (dims.m_bar, ntot), mask=gain_mask(dims))

    def schur_block(v):
        AQBY = A @ v["Q"] + B @ v["Y"]
        return np.block([[-v["Q"], AQBY], [AQBY.T, -v["Q"]]])

    constraints = [
        LmiConstraint("Q positive definite", lambda v: v["Q"], ">=", strict=True),
        LmiConstraint("stability block", schur_block, "<=", strict=True),
    ]
    if scale_cap is not None:
        constraints.append(
            LmiConstraint(
                "Q scale cap",
                lambda v: scale_cap * np.eye(ntot) - v["Q"],
                ">=",
                strict=False,
            )
        )
    return [Q, Y], constraints


def local_design_problem(la: LocalAssembly, gm: GraphMatrices, r: float):
    """Variables and constraints of one agent's convex design program
    (zero feedthrough): P > 0, [[Theta, Y], [Y', P]] >= 0, the coupled
    stability block < 0, and the output-window bounds
    sigma_min I <= C_o P C_o' <= sigma_max I."""
    n = la.A_o.shape[0]
    m = la.B_o.shape[1]
    p = la.C_o.shape[0]
    A_o, B_o, B_f, C_o = la.A_o, la.B_o, la.B_f, la.C_o
    smin, smax = gm.sigma_min_nz, gm.sigma_max
    P = LmiVariable("P", (n, n), symmetric=True)
    Y = LmiVariable("Y", (m, n))
    Theta = LmiVariable("Theta", (m, m), symmetric=True)

    def gain_energy(v):
        return np.block([[v["Theta"], v["Y"]], [v["Y"].T, v["P"]]])

    def stability_block(v):
        P_, Y_ = v["P"], v["Y"]
        occ = (
            A_o @ P_ @ A_o.T + B_o @ Y_ @ A_o.T + A_o @ Y_.T @ B_o.T
            + B_o @ v["Theta"] @ B_o.T - P_
            + r * (B_f @ B_f.T) + r * (B_f @ C_o @ P_ @ C_o.T @ B_f.T)
        )
        cross = (A_o @ P_ + B_o @ Y_) @ C_o.T
        return np.block([[occ, cross], [cross.T, -np.eye(p)]])

    constraints = [
        LmiConstraint("P positive definite", lambda v: v["P"], ">=", strict=True),
        LmiConstraint("gain energy bound", gain_energy, ">=", strict=False),
        LmiConstraint("stability block", stability_block, "<=", strict=True),
        LmiConstraint(
            "output window lower",
            lambda v: C_o @ v["P"] @ C_o.T - smin * np.eye(p),
            ">=",
            strict=False,
        ),
        LmiConstraint(
            "output window upper",
            lambda v: smax * np.eye(p) - C_o @ v["P"] @ C_o.T,
            ">=",
            strict=False,
        ),
    ]
    return [P, Y, Theta], constraints


def certificate_problem(la: LocalAssembly, K_i, gm: GraphMatrices, r: float):
    """Variables and constraints of one agent's certificate for a *given*
    local gain (any feedthrough): P > 0 with
    [[A_f P A_f' - P + r B_f (I + C_f P C_f') B_f', A_f P C_f'],
     [C_f P A_f', -I]] < 0 and the output-window bounds on C_f P C_f'."""
    A_f = la.closed_A(K_i)
    C_f = la.closed_C(K_i)
    B_f = la.B_f
    n = A_f.shape[0]
    p = C_f.shape[0]
    smin, smax = gm.sigma_min_nz, gm.sigma_max
    P = LmiVariable("P", (n, n), symmetric=True)

    def stability_block(v):
        P_ = v["P"]
        occ = (
            A_f @ P_ @ A_f.T - P_
            + r * (B_f @ (np.eye(p) + C_f @ P_ @ C_f.T) @ B_f.T)
        )
        cross = A_f @ P_ @ C_f.T
        return np.block([[occ, cross], [cross.T, -np.eye(p)]])

    constraints = [
        LmiConstraint("P positive definite", lambda v: v["P"], ">=", strict=True),
        LmiConstraint("stability block", stability_block, "<=", strict=True),
        LmiConstraint(
            "output window lower",
            lambda v: C_f @ v["P"] @ C_f.T - smin * np.eye(p),
            ">=",
            strict=False,
        ),
        LmiConstraint(
            "output window upper",
            lambda v: smax * np.eye(p) - C_f @ v["P"] @ C_f.T,
            ">=",
            strict=False,
        ),
    ]
    return [P], constraints


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class GlobalSynthesisResult:
    gains: GainSet
    Q: np.ndarray
    Y: np.ndarray
    margin: float
    radius: float
    recovery_residual: float


@dataclass(frozen=True)
class AgentLocalResult:
    index: int
    P: np.ndarray
    Y: np.ndarray
    Theta: np.ndarray
    r: float
    margin: float
    K: np.ndarray


@dataclass(frozen=True)
class LocalSynthesisResult:
    agents: tuple[AgentLocalResult, ...]
    gains: GainSet
    radius: float

    @property
    def margins(self) -> tuple[float, ...]:
        return tuple(a.margin for a in self.agents)

    @property
    def r(self) -> tuple[float, ...]:
        return tuple(a.r for a in self.agents)


@dataclass(frozen=True)
class AgentCertificate:
    index: int
    feasible: bool
    margin: float | None
    P: np.ndarray | None


@dataclass(frozen=True)
class CertificateReport:
    """Per-agent certificate outcomes plus, when every agent passed, the
    composed structured Lyapunov certificate for the interconnection."""

    agents: tuple[AgentCertificate, ...]
    r: tuple[float, ...]
    P_global: np.ndarray | None
    lyapunov_margin: float | None
    passed: bool

    @property
    def all_feasible(self) -> bool:
        return all(a.feasible for a in self.agents)


# ---------------------------------------------------------------------------
# synthesis paths


def synthesize_global(ga: GlobalAssembly, *, scale_cap: float | None = GLOBAL_SCALE_CAP,
                      solver: str | None = None) -> GlobalSynthesisResult:
    """Solve the global structured design program and recover per-agent
    gains from the per-agent blocks of (Y, Q).

    Raises NumericallyInfeasible when the program cannot be certified
    feasible (the structured-Lyapunov route is sufficient, not necessary,
    so a structured stabilizer may still exist) or when the recovered gain
    fails the final Schur check.
    """
    variables, constraints = global_design_problem(ga, scale_cap)
    sol = solve_feasibility(variables, constraints, solver=solver)
    if not sol.feasible:
        raise NumericallyInfeasible(
            "global structured design program not certified feasible",
            margin=sol.margin,
        )
    Q = sol.assignment["Q"]
    Y = sol.assignment["Y"]
    dims = ga.dims
    K1, K2 = [], []
    for i in range(dims.n_agents):
        xs, zs, ms = dims.x_slice(i), dims.z_slice(i), dims.m_slice(i)
        Q_blk = np.block([[Q[xs, xs], Q[xs, zs]], [Q[zs, xs], Q[zs, zs]]])
        Y_blk = np.hstack([Y[ms, xs], Y[ms, zs]])
        K_blk = np.linalg.solve(Q_blk, Y_blk.T).T
        K1.append(K_blk[:, : dims.n[i]])
        K2.append(K_blk[:, dims.n[i]:])
    gains = GainSet(K1=tuple(K1), K2=tuple(K2))
    residual = float(np.linalg.norm(Y - gains.dense(dims) @ Q))
    A_g, _ = closed_loop(ga, gains)
    radius = spectral_radius(A_g)
    if radius >= 1.0 - SCHUR_TOL:
        raise NumericallyInfeasible(
            f"recovered gain failed the Schur check (radius {radius:.6g})",
            margin=sol.margin,
        )
    return GlobalSynthesisResult(
        gains=gains, Q=Q, Y=Y, margin=sol.margin, radius=radius,
        recovery_residual=residual,
    )


def _resolve_r(r, gm: GraphMatrices, n_agents: int) -> tuple[float, ...]:
    if r is None:
        values = (gm.r_threshold,) * n_agents
    elif np.isscalar(r):
        values = (float(r),) * n_agents
    else:
        values = tuple(float(v) for v in r)
        if len(values) != n_agents:
            raise BadThreshold(
                f"expected {n_agents} coupling-gain values, got {len(values)}"
            )
    floor = gm.r_threshold * (1.0 - 1e-12)
    low = [v for v in values if v < floor]
    if low:
        raise BadThreshold(
            f"coupling-gain parameters {low} are below the graph bound "
            f"{gm.r_threshold:.6g}"
        )
    return values


def synthesize_local(model: MasModel, im: InternalModel, gm: GraphMatrices,
                     r=None, *, steer: bool = True,
                     solver: str | None = None) -> LocalSynthesisResult:
    """Agent-wise convex design for zero-feedthrough agents.

    Each agent's program is solved independently (any order gives the same
    result).  With ``steer`` on, a second solve per agent keeps half of the
    maximized margin and pulls the gain toward the agent's Riccati
    reference, which avoids the near-marginal gains the bare margin
    maximization tends to return.

    Raises NonzeroD when some agent has feedthrough (use the certificate
    check for given gains instead), BadThreshold for r below the graph
    bound, and NumericallyInfeasible listing the failing agents.
    """
    nonzero_d = [i for i, ag in enumerate(model.agents) if np.any(ag.D != 0)]
    if nonzero_d:
        raise NonzeroD(
            f"agents {nonzero_d} have nonzero feedthrough; the convex local "
            "design requires D_i = 0"
        )
    r_values = _resolve_r(r, gm, model.n_agents)
    la = assemble_local(model, im)
    results = []
    failed = []
    for agent, r_i in zip(la, r_values):
        variables, constraints = local_design_problem(agent, gm, r_i)
        sol = solve_feasibility(variables, constraints, solver=solver)
        if not sol.feasible:
            failed.append((agent.index, sol.margin))
            continue
        if steer:
            sol = _steer_local(agent, variables, constraints, sol, solver)
        P = sol.assignment["P"]
        K_i = np.linalg.solve(P, sol.assignment["Y"].T).T
        results.append(
            AgentLocalResult(
                index=agent.index, P=P, Y=sol.assignment["Y"],
                Theta=sol.assignment["Theta"], r=r_i, margin=sol.margin,
                K=K_i,
            )
        )
    if failed:
        raise NumericallyInfeasible(
            "local design program not certified feasible for agents "
            + ", ".join(f"{i} (margin {m})" for i, m in failed),
            agents=[i for i, _ in failed],
        )
    dims = Dimensions.of(model, im)
    gains = GainSet(
        K1=tuple(res.K[:, : dims.n[i]] for i, res in enumerate(results)),
        K2=tuple(res.K[:, dims.n[i]:] for i, res in enumerate(results)),
    )
    ga = assemble_global(model, im, gm)
    A_g, _ = closed_loop(ga, gains)
    radius = spectral_radius(A_g)
    if radius >= 1.0 - SCHUR_TOL:
        raise NumericallyInfeasible(
            f"assembled closed loop failed the Schur check (radius {radius:.6g})"
        )
    return LocalSynthesisResult(agents=tuple(results), gains=gains, radius=radius)


def _steer_local(agent: LocalAssembly, variables, constraints, sol, solver):
    """Re-solve the agent's program near its Riccati reference gain while
    keeping half of the maximized margin; falls back to the unsteered
    solution when the reference or the steered solve is unavailable."""
    try:
        K_ref = lqr_gain(agent.A_o, agent.B_o)
    except RiccatiDiverged:
        log.debug("agent %d: no Riccati reference, keeping margin solution",
                  agent.index)
        return sol
    steered = solve_feasibility(
        variables,
        constraints,
        minimize_map=lambda v: v["Y"] - K_ref @ v["P"],
        margin_floor=_STEER_MARGIN_FRACTION * sol.margin,
        solver=solver,
    )
    if steered.feasible:
        return steered
    log.debug("agent %d: steered solve failed (%s), keeping margin solution",
              agent.index, steered.detail)
    return sol


def check_certificate(la: list[LocalAssembly], K: GainSet, gm: GraphMatrices,
                      r=None, *, solver: str | None = None) -> CertificateReport:
    """Agent-wise certificate for a given structured gain (any feedthrough).

    Solves each agent's certificate program; when every agent is feasible,
    composes P = T' diag(P_i) T, checks it against the bordered structure
    pattern, and certifies the closed-loop Lyapunov decrement
    A_g P A_g' - P < 0.  ``passed`` reports the full chain.
    """
    r_values = _resolve_r(r, gm, len(la))
    agents = []
    for agent, r_i in zip(la, r_values):
        variables, constraints = certificate_problem(agent, K.agent(agent.index), gm, r_i)
        sol = solve_feasibility(variables, constraints, solver=solver)
        agents.append(
            AgentCertificate(
                index=agent.index,
                feasible=sol.feasible,
                margin=sol.margin,
                P=sol.assignment["P"] if sol.assignment else None,
            )
        )
    if not all(a.feasible for a in agents):
        return CertificateReport(
            agents=tuple(agents), r=r_values, P_global=None,
            lyapunov_margin=None, passed=False,
        )
    dims = Dimensions(
        n=tuple(a.n for a in la),
        m=tuple(K.K1[i].shape[0] for i in range(K.n_agents)),
        p=gm.p,
        n_z=la[0].n_z,
    )
    T = permutation_matrix(dims)
    P_global = T.T @ block_diag(*[a.P for a in agents]) @ T
    if np.any(P_global[~structured_mask(dims)] != 0.0):
        raise AssertionError("composed certificate left the bordered pattern")
    A_c = coupled_local_form(la, gm, K)
    A_g = T.T @ A_c @ T
    decrement = A_g @ P_global @ A_g.T - P_global
    lyap_margin = float(-np.linalg.eigvalsh(0.5 * (decrement + decrement.T)).max())
    return CertificateReport(
        agents=tuple(agents), r=r_values, P_global=P_global,
        lyapunov_margin=lyap_margin, passed=lyap_margin > 0.0,
    )


def synthesize_acyclic(model: MasModel, im: InternalModel,
                       gm: GraphMatrices) -> GainSet:
    """Per-agent Riccati design for acyclic follower graphs.

    On an acyclic graph the closed-loop spectrum is exactly the union of
    the per-agent spectra, so stabilizing each agent's controller-augmented
    pair stabilizes the interconnection.  Raises GraphHasCycle on cyclic
    graphs and RiccatiDiverged when some agent's pair is not stabilizable.
    """
    order = topological_order(gm.graph)
    if isinstance(order, CycleDetected):
        raise GraphHasCycle(
            f"follower digraph has a directed cycle (nodes {sorted(order.remaining)})"
        )
    la = assemble_local(model, im)
    K1, K2 = [], []
    spectra = []
    for agent in la:
        try:
            K_i = lqr_gain(agent.A_o, agent.B_o)
        except RiccatiDiverged as exc:
            raise RiccatiDiverged(f"agent {agent.index}: {exc}") from exc
        A_f = agent.closed_A(K_i)
        rad = spectral_radius(A_f)
        if rad >= 1.0 - SCHUR_TOL:
            raise RiccatiDiverged(
                f"agent {agent.index}: Riccati gain left radius {rad:.6g}"
            )
        spectra.append(np.linalg.eigvals(A_f))
        K1.append(K_i[:, : agent.n])
        K2.append(K_i[:, agent.n:])
    gains = GainSet(K1=tuple(K1), K2=tuple(K2))
    ga = assemble_global(model, im, gm)
    A_g, _ = closed_loop(ga, gains)
    mismatch = eig_match_distance(
        np.linalg.eigvals(A_g), np.concatenate(spectra)
    )
    if mismatch > 1e-6:
        raise AssertionError(
            f"acyclic spectrum identity violated (mismatch {mismatch:.3g})"
        )
    return gains
