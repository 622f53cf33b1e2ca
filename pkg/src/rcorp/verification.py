"""Executable stability and regulation checks: Schur tests, gain-set
membership (free / structured / per-agent Lyapunov certificates),
regulator-equation residuals, closed-loop simulation, and randomized
robustness sampling."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .assembly import (
    GainSet,
    GlobalAssembly,
    LocalAssembly,
    closed_loop,
    structured_mask,
)
from .errors import NotSchur, ShapeMismatch, SpectraOverlap
from .graphs import AugmentedGraph, GraphMatrices, has_spanning_tree
from .internal_model import InternalModel, verify_p_copy
from .linalg import spectral_radius
from .lmi import LmiConstraint, LmiVariable, solve_feasibility
from .plant import (
    ExogenousChannels,
    MasModel,
    UncertaintyDelta,
    apply_uncertainty,
    check_agent_stabilizable,
    check_exosystem_antistable,
    check_transmission_rank,
)
from .synthesis import check_certificate
from .tolerances import SCHUR_TOL, SPECTRA_GAP_TOL

__all__ = [
    "is_schur",
    "Verdict",
    "MembershipReport",
    "membership",
    "RegulatorSolution",
    "solve_regulator",
    "SimulationTrace",
    "simulate",
    "RobustnessReport",
    "robustness_sample",
    "suggested_horizon",
    "evaluate_conditions",
]

log = logging.getLogger(__name__)

# r-sweep used by the per-agent certificate membership test.
R_SWEEP_FACTORS = (1.0, 10.0, 100.0, 1000.0)

# The Lyapunov membership programs are homogeneous in P, so a scale cap is
# without loss of generality; it pins the free scale and conditions the
# margin maximization.
LYAPUNOV_SCALE_CAP = 100.0


def is_schur(M, tol: float = SCHUR_TOL) -> tuple[bool, float]:
    """(is stable, spectral radius); stable means radius < 1 - tol."""
    radius = spectral_radius(M)
    return radius < 1.0 - tol, radius


def evaluate_conditions(graph: AugmentedGraph, model: MasModel,
                        im: InternalModel) -> dict[str, tuple[bool, str]]:
    """The five solvability checks, each with a short diagnostic string:
    augmented spanning tree, antistable exosystem, replicated-mode
    controller pairs, per-agent transmission rank, per-agent
    stabilizability."""
    tree = has_spanning_tree(graph)
    exo = check_exosystem_antistable(model.exo)
    pcopy = verify_p_copy(im, model.exo.A0)
    bad_rank = [
        i for i, ag in enumerate(model.agents)
        if not check_transmission_rank(ag, model.exo)
    ]
    bad_stab = [
        i for i, ag in enumerate(model.agents)
        if not check_agent_stabilizable(ag)
    ]
    moduli = np.abs(np.linalg.eigvals(model.exo.A0))
    return {
        "spanning_tree": (tree, "augmented graph reaches every follower"
                          if tree else "some follower unreachable from the leader"),
        "exosystem_antistable": (
            exo, f"eigenvalue moduli {np.round(moduli, 6).tolist()}"
        ),
        "internal_model": (
            pcopy, "replicated-mode pairs verified" if pcopy
            else "controller pair fails the replicated-mode check"
        ),
        "transmission_rank": (
            not bad_rank, "full rank at every exosystem eigenvalue"
            if not bad_rank else f"rank drops for agents {bad_rank}"
        ),
        "agent_stabilizable": (
            not bad_stab, "all agent pairs stabilizable"
            if not bad_stab else f"unstabilizable agents {bad_stab}"
        ),
    }


@dataclass(frozen=True)
class Verdict:
    """Tri-state membership outcome with the best margin found.

    "yes" is certified; "numerically_no" is heuristic (no infeasibility
    proof); "undecided" means the solver produced nothing usable.
    """

    status: str
    margin: float | None = None
    detail: str = ""

    @property
    def yes(self) -> bool:
        return self.status == "yes"

    def as_dict(self) -> dict:
        return {"status": self.status, "margin": self.margin, "detail": self.detail}


@dataclass(frozen=True)
class MembershipReport:
    """Membership of one structured gain in the four certified gain sets."""

    in_KG: Verdict
    in_KS: Verdict
    in_KLA: Verdict
    in_KLC: Verdict

    def as_dict(self) -> dict:
        return {
            "K_G": self.in_KG.as_dict(),
            "K_S": self.in_KS.as_dict(),
            "K_LA": self.in_KLA.as_dict(),
            "K_LC": self.in_KLC.as_dict(),
        }


def _lyapunov_verdict(A_g: np.ndarray, mask=None, solver=None) -> Verdict:
    """Feasibility of P > 0, A_g P A_g' - P < 0, optionally with P
    restricted to a support mask."""
    n = A_g.shape[0]
    P = LmiVariable("P", (n, n), symmetric=True, mask=mask)
    constraints = [
        LmiConstraint("P positive definite", lambda v: v["P"], ">=", strict=True),
        LmiConstraint(
            "Lyapunov decrement",
            lambda v: A_g @ v["P"] @ A_g.T - v["P"],
            "<=",
            strict=True,
        ),
        LmiConstraint(
            "P scale cap",
            lambda v: LYAPUNOV_SCALE_CAP * np.eye(n) - v["P"],
            ">=",
            strict=False,
        ),
    ]
    sol = solve_feasibility([P], constraints, solver=solver)
    if sol.feasible:
        return Verdict("yes", margin=sol.margin)
    if sol.margin is None:
        return Verdict("undecided", detail=sol.detail)
    return Verdict("numerically_no", margin=sol.margin, detail=sol.detail)


def membership(ga: GlobalAssembly, la: list[LocalAssembly], K: GainSet,
               gm: GraphMatrices, *, r_sweep=R_SWEEP_FACTORS,
               solver: str | None = None) -> MembershipReport:
    """Test one gain against the four gain sets.

    Free and structured Lyapunov feasibility decide the first two; the
    third is the per-agent Schur check of the local closed loops; the
    fourth sweeps the per-agent certificate over r = factor * r_threshold
    until it passes (heuristically "no" after the sweep).
    """
    A_g, _ = closed_loop(ga, K)
    kg = _lyapunov_verdict(A_g, mask=None, solver=solver)
    ks = _lyapunov_verdict(A_g, mask=structured_mask(ga.dims), solver=solver)

    radii = [spectral_radius(a.closed_A(K.agent(a.index))) for a in la]
    worst = max(radii)
    kla = Verdict(
        "yes" if worst < 1.0 - SCHUR_TOL else "numerically_no",
        margin=1.0 - worst,
        detail=f"local spectral radii {[round(r, 6) for r in radii]}",
    )

    klc = Verdict("numerically_no", detail="certificate swept "
                  f"r/r_threshold in {tuple(r_sweep)}")
    best_margin = None
    for factor in r_sweep:
        report = check_certificate(la, K, gm, r=factor * gm.r_threshold,
                                   solver=solver)
        margins = [a.margin for a in report.agents if a.margin is not None]
        if margins:
            worst_agent = min(margins)
            if best_margin is None or worst_agent > best_margin:
                best_margin = worst_agent
        if report.passed:
            klc = Verdict(
                "yes",
                margin=report.lyapunov_margin,
                detail=f"r = {factor:g} * r_threshold",
            )
            break
    if not klc.yes:
        klc = Verdict("numerically_no", margin=best_margin, detail=klc.detail)
    return MembershipReport(in_KG=kg, in_KS=ks, in_KLA=kla, in_KLC=klc)


@dataclass(frozen=True)
class RegulatorSolution:
    """Solution of the closed-loop regulator equations.

    ``sylvester_residual`` measures the linear solve itself;
    ``output_residual`` is the tracked quantity: it vanishes exactly when
    the internal-model conditions hold.
    """

    X_g: np.ndarray
    sylvester_residual: float
    output_residual: float


def solve_regulator(ga: GlobalAssembly, K: GainSet, E, F_ref,
                    delta: UncertaintyDelta | None = None) -> RegulatorSolution:
    """Solve X_g A0a = A_g-bar X_g + B_g by Kronecker vectorization and
    report the output residual ||C_g-bar X_g + D_g||_F.

    Raises NotSchur when the (possibly perturbed) closed loop is unstable
    and SpectraOverlap when it shares an eigenvalue with the exosystem
    stack (the Sylvester operator is then singular).
    """
    channels = ExogenousChannels.validated(ga.model, E, F_ref)
    if delta is None:
        A_g, _ = closed_loop(ga, K)
        C_g = ga.output_matrix(K)
    else:
        A_bar, B_bar = ga.perturbed(delta)
        A_g = A_bar + B_bar @ K.dense(ga.dims)
        C_g = ga.output_matrix(K, delta)
    stable, radius = is_schur(A_g)
    if not stable:
        raise NotSchur(f"closed loop is not Schur (radius {radius:.6g})")
    A0a = ga.A0a
    gap = np.abs(
        np.linalg.eigvals(A_g)[:, None] - np.linalg.eigvals(A0a)[None, :]
    ).min()
    if gap <= SPECTRA_GAP_TOL:
        raise SpectraOverlap(
            f"closed-loop and exosystem spectra within {gap:.3g} of each other"
        )
    B_g, D_g = ga.exo_input(channels)
    n, q = B_g.shape
    op = np.kron(A0a.T, np.eye(n)) - np.kron(np.eye(q), A_g)
    X_g = np.linalg.solve(op, B_g.ravel(order="F")).reshape((n, q), order="F")
    return RegulatorSolution(
        X_g=X_g,
        sylvester_residual=float(np.linalg.norm(X_g @ A0a - A_g @ X_g - B_g)),
        output_residual=float(np.linalg.norm(C_g @ X_g + D_g)),
    )


@dataclass(frozen=True)
class SimulationTrace:
    """Closed-loop trajectories over t = 0..horizon (inclusive)."""

    x: tuple[np.ndarray, ...]      # per agent, (horizon+1, n_i)
    z: tuple[np.ndarray, ...]      # per agent, (horizon+1, n_z)
    v: np.ndarray                  # (horizon+1, n0)
    e: np.ndarray                  # (horizon+1, N, p)
    error_norms: np.ndarray        # (horizon+1,), max_i ||e_i(t)||

    @property
    def horizon(self) -> int:
        return self.v.shape[0] - 1


def simulate(model: MasModel, im: InternalModel, gm: GraphMatrices, K: GainSet,
             E, F_ref, x0, z0, v0, horizon: int) -> SimulationTrace:
    """Exact forward iteration of the interconnected closed loop.

    Synchronous update: at each step all tracking errors e_i, then all
    neighborhood errors e_v_i, then every state update.  Pass an already
    perturbed model to simulate under uncertainty.  Divergence is data,
    not an error.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    channels = ExogenousChannels.validated(model, E, F_ref)
    N = model.n_agents
    adj = gm.graph.adjacency
    scale = gm.graph.in_degrees + gm.graph.pinning
    if K.n_agents != N:
        raise ShapeMismatch(f"gain set covers {K.n_agents} agents, model has {N}")

    xs = [np.array(x, dtype=float).reshape(model.agents[i].n) for i, x in enumerate(x0)]
    zs = [np.array(z, dtype=float).reshape(im.n_z) for z in z0]
    v = np.array(v0, dtype=float).reshape(model.exo.n0)

    x_hist = [np.empty((horizon + 1, model.agents[i].n)) for i in range(N)]
    z_hist = [np.empty((horizon + 1, im.n_z)) for _ in range(N)]
    v_hist = np.empty((horizon + 1, model.exo.n0))
    e_hist = np.empty((horizon + 1, N, model.p))

    for t in range(horizon + 1):
        for i in range(N):
            x_hist[i][t] = xs[i]
            z_hist[i][t] = zs[i]
        v_hist[t] = v
        us = [K.K1[i] @ xs[i] + K.K2[i] @ zs[i] for i in range(N)]
        es = [
            model.agents[i].C @ xs[i] + model.agents[i].D @ us[i]
            - channels.F_ref @ v
            for i in range(N)
        ]
        e_hist[t] = np.stack(es)
        if t == horizon:
            break
        evs = []
        for i in range(N):
            acc = gm.graph.pinning[i] * es[i]
            for j in np.flatnonzero(adj[i]):
                acc = acc + adj[i, j] * (es[i] - es[j])
            evs.append(acc / scale[i])
        xs = [
            model.agents[i].A @ xs[i] + model.agents[i].B @ us[i]
            + channels.E[i] @ v
            for i in range(N)
        ]
        zs = [im.G1[i] @ zs[i] + im.G2[i] @ evs[i] for i in range(N)]
        v = model.exo.A0 @ v

    return SimulationTrace(
        x=tuple(x_hist),
        z=tuple(z_hist),
        v=v_hist,
        e=e_hist,
        error_norms=np.linalg.norm(e_hist, axis=2).max(axis=1),
    )


def suggested_horizon(radius: float, target: float = 1e-6,
                      floor: int = 200) -> int:
    """Horizon at which a geometric decay at ``radius`` reaches ``target``
    from unit scale; never below ``floor``."""
    if radius <= 0.95:
        return floor
    if radius >= 1.0:
        raise NotSchur(f"no finite horizon for radius {radius:.6g}")
    need = int(np.ceil(np.log(target) / np.log(radius)))
    return max(floor, need)


@dataclass(frozen=True)
class RobustnessReport:
    rho: float
    n_samples: int
    seed: int
    fraction_schur: float
    max_output_residual: float | None
    radii: tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "rho": self.rho,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "fraction_schur": self.fraction_schur,
            "max_output_residual": self.max_output_residual,
            "radii": list(self.radii),
        }


def robustness_sample(model: MasModel, im: InternalModel, gm: GraphMatrices,
                      K: GainSet, rho: float, n_samples: int, seed: int = 0,
                      E=None, F_ref=None) -> RobustnessReport:
    """Sample perturbations with entries uniform on [-rho, rho] and report
    the fraction keeping the closed loop Schur plus the worst regulator
    output residual among the stable samples.

    Each sample uses the derived seed (seed, index), so results do not
    depend on evaluation order.  When no exogenous channels are supplied,
    each sample draws its own standard-normal (E_i, F_ref); the output
    residual must vanish for any choice.
    """
    from .assembly import assemble_global

    ga = assemble_global(model, im, gm)
    A_g, _ = closed_loop(ga, K)
    stable, radius = is_schur(A_g)
    if not stable:
        raise NotSchur(f"nominal closed loop is not Schur (radius {radius:.6g})")

    n0 = model.exo.n0
    stable_count = 0
    worst_residual = None
    radii = []
    for k in range(n_samples):
        rng = np.random.default_rng([seed, k])
        delta = UncertaintyDelta.sample(model, rho, rng)
        perturbed = apply_uncertainty(model, delta)
        ga_k = assemble_global(perturbed, im, gm)
        A_bar, _ = closed_loop(ga_k, K)
        ok, rad = is_schur(A_bar)
        radii.append(rad)
        if not ok:
            continue
        stable_count += 1
        if E is None or F_ref is None:
            E_k = [rng.standard_normal((ag.n, n0)) for ag in model.agents]
            F_k = rng.standard_normal((model.p, n0))
        else:
            E_k, F_k = E, F_ref
        reg = solve_regulator(ga, K, E_k, F_k, delta=delta)
        if worst_residual is None or reg.output_residual > worst_residual:
            worst_residual = reg.output_residual
    return RobustnessReport(
        rho=rho,
        n_samples=n_samples,
        seed=seed,
        fraction_schur=stable_count / n_samples if n_samples else 0.0,
        max_output_residual=worst_residual,
        radii=tuple(radii),
    )
