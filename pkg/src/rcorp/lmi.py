"""Structured semidefinite feasibility engine.

Problems are posed as affine maps from a set of named, possibly
structure-masked matrix variables to symmetric constraint matrices, each
with a sense (positive or negative semidefinite) and a strictness flag.
Strict inequalities are solved as margin maximization: M >= t I, maximize
t, accept when t clears MARGIN_MIN.  Every candidate assignment is
re-certified by an independent eigenvalue computation before a feasible
verdict is reported; infeasibility is always heuristic ("numerically
infeasible"), never a proof.

The solve is delegated to an interior-point SDP solver (CLARABEL, falling
back to SCS) through cvxpy; the margin/certification contract here does
not depend on that choice.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping

import cvxpy as cp
import numpy as np

from .errors import MalformedProblem
from .tolerances import BOX_BOUND, MARGIN_MIN, PSD_TOL

__all__ = [
    "LmiVariable",
    "LmiConstraint",
    "ConstraintSlack",
    "SlackReport",
    "LmiSolution",
    "solve_feasibility",
    "certify",
    "problem_summary",
]

log = logging.getLogger(__name__)

_SOLVER_ORDER = ("CLARABEL", "SCS")
_AFFINITY_RTOL = 1e-8


@dataclass(frozen=True)
class LmiVariable:
    """A named decision matrix.

    Parameters
    ----------
    name : str
        Key under which constraint maps receive the value.
    shape : tuple of int
        Matrix shape (square for symmetric variables).
    symmetric : bool
        Symmetric variables are parametrized by their upper triangle and
        always returned exactly symmetric.
    mask : ndarray of bool, optional
        Support pattern; entries outside the mask are hard zeros.  The mask
        of a symmetric variable must itself be symmetric.  None means dense.
    """

    name: str
    shape: tuple[int, int]
    symmetric: bool = False
    mask: np.ndarray | None = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != 2:
            raise ValueError(f"{self.name}: shape must be 2-D, got {shape}")
        if self.symmetric and shape[0] != shape[1]:
            raise ValueError(f"{self.name}: symmetric variable must be square")
        mask = self.mask
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != shape:
                raise ValueError(f"{self.name}: mask shape {mask.shape} != {shape}")
            if self.symmetric and not np.array_equal(mask, mask.T):
                raise ValueError(f"{self.name}: symmetric variable needs a symmetric mask")
            mask = mask.copy()
            mask.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "mask", mask)

    @property
    def _coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Row/col indices of the free parameters."""
        rows, cols = self.shape
        if self.symmetric:
            ii, jj = np.triu_indices(rows)
        else:
            ii, jj = np.indices(self.shape)
            ii, jj = ii.ravel(), jj.ravel()
        if self.mask is not None:
            keep = self.mask[ii, jj]
            ii, jj = ii[keep], jj[keep]
        return ii, jj

    @property
    def n_params(self) -> int:
        return self._coords[0].size

    def unpack(self, params: np.ndarray) -> np.ndarray:
        """Materialize the matrix from its parameter vector; masked entries
        come out exactly zero."""
        out = np.zeros(self.shape)
        ii, jj = self._coords
        out[ii, jj] = params
        if self.symmetric:
            out[jj, ii] = params
        return out

    def pack(self, value: np.ndarray) -> np.ndarray:
        ii, jj = self._coords
        return np.asarray(value, dtype=float)[ii, jj]


@dataclass(frozen=True)
class LmiConstraint:
    """One affine matrix inequality.

    Parameters
    ----------
    name : str
        Label used in slack reports.
    matrix : callable
        Affine map from {variable name: ndarray} to a symmetric matrix.
    sense : {">=", "<="}
        Whether the map must be positive or negative semidefinite.
    strict : bool
        Strict constraints take part in margin maximization; non-strict
        ones must only clear -PSD_TOL at certification.
    """

    name: str
    matrix: Callable[[Mapping[str, np.ndarray]], np.ndarray]
    sense: str = ">="
    strict: bool = True

    def __post_init__(self):
        if self.sense not in (">=", "<="):
            raise ValueError(f"{self.name}: sense must be '>=' or '<=', got {self.sense!r}")

    def oriented(self, assignment: Mapping[str, np.ndarray]) -> np.ndarray:
        """Evaluate the map, oriented so that feasible means PSD."""
        M = np.asarray(self.matrix(assignment), dtype=float)
        return M if self.sense == ">=" else -M


@dataclass(frozen=True)
class ConstraintSlack:
    name: str
    strict: bool
    min_eig: float


@dataclass(frozen=True)
class SlackReport:
    """Per-constraint slack eigenvalues of one assignment."""

    constraints: tuple[ConstraintSlack, ...]

    @property
    def strict_margin(self) -> float:
        vals = [c.min_eig for c in self.constraints if c.strict]
        return min(vals) if vals else float("inf")

    @property
    def nonstrict_floor(self) -> float:
        vals = [c.min_eig for c in self.constraints if not c.strict]
        return min(vals) if vals else float("inf")

    @property
    def min_slack(self) -> float:
        return min((c.min_eig for c in self.constraints), default=float("inf"))

    def satisfied(self, margin_min: float = MARGIN_MIN, psd_tol: float = PSD_TOL) -> bool:
        return self.strict_margin > margin_min and self.nonstrict_floor >= -psd_tol


@dataclass(frozen=True)
class LmiSolution:
    """Outcome of a feasibility solve.

    ``status`` is "feasible" only when the independently certified strict
    margin exceeds MARGIN_MIN and every non-strict slack clears -PSD_TOL.
    "numerically_infeasible" carries the best margin found (None when the
    solver produced no usable iterate); it is heuristic, not a certificate
    of infeasibility.
    """

    status: str
    assignment: dict[str, np.ndarray] | None
    margin: float | None
    report: SlackReport | None
    solver: str
    detail: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def certify(assignment: Mapping[str, np.ndarray],
            constraints: list[LmiConstraint] | tuple[LmiConstraint, ...]) -> SlackReport:
    """Independent slack check of an assignment.

    Re-evaluates every constraint map from scratch on the given values and
    reports the minimum eigenvalue of each oriented constraint matrix; no
    solver state is consulted.
    """
    slacks = []
    for con in constraints:
        M = con.oriented(assignment)
        M = 0.5 * (M + M.T)
        slacks.append(
            ConstraintSlack(
                name=con.name,
                strict=con.strict,
                min_eig=float(np.linalg.eigvalsh(M).min()),
            )
        )
    return SlackReport(constraints=tuple(slacks))


@dataclass
class _Affine:
    """Cached affine representation M(x) = M0 + sum_k x_k Mk (oriented)."""

    M0: np.ndarray
    cols: np.ndarray  # (dim*dim, n_params), column k = vec(Mk)
    dim: int


def _affinize(variables, constraints, rng: np.random.Generator):
    """Extract the affine representation of every constraint and spot-check
    affinity and symmetry; raises MalformedProblem on violation."""
    n_params = sum(v.n_params for v in variables)

    def assign(vec: np.ndarray) -> dict[str, np.ndarray]:
        out, off = {}, 0
        for v in variables:
            out[v.name] = v.unpack(vec[off:off + v.n_params])
            off += v.n_params
        return out

    zero = assign(np.zeros(n_params))
    # affinity spot check: map(x + y) - map(x) - map(y) + map(0) == 0
    xa = rng.standard_normal(n_params)
    xb = rng.standard_normal(n_params)
    ax, bx, abx = assign(xa), assign(xb), assign(xa + xb)

    affine = []
    for con in constraints:
        M0 = con.oriented(zero)
        dim = M0.shape[0]
        if M0.shape != (dim, dim):
            raise MalformedProblem(f"{con.name}: constraint matrix is not square")
        scale = max(
            1.0,
            float(np.abs(con.oriented(ax)).max(initial=0.0)),
            float(np.abs(con.oriented(bx)).max(initial=0.0)),
        )
        resid = con.oriented(abx) - con.oriented(ax) - con.oriented(bx) + M0
        if np.abs(resid).max(initial=0.0) > _AFFINITY_RTOL * scale:
            raise MalformedProblem(f"{con.name}: constraint map is not affine")
        sym_err = np.abs(con.oriented(ax) - con.oriented(ax).T).max(initial=0.0)
        if sym_err > _AFFINITY_RTOL * scale:
            raise MalformedProblem(f"{con.name}: constraint map is not symmetric")
        cols = np.empty((dim * dim, n_params))
        basis = np.zeros(n_params)
        for k in range(n_params):
            basis[k] = 1.0
            Mk = con.oriented(assign(basis)) - M0
            Mk = 0.5 * (Mk + Mk.T)
            cols[:, k] = Mk.ravel(order="F")
            basis[k] = 0.0
        M0 = 0.5 * (M0 + M0.T)
        affine.append(_Affine(M0=M0, cols=cols, dim=dim))
    return n_params, assign, affine


def _affinize_map(variables, target, n_params, assign):
    """Affine representation of an arbitrary (possibly rectangular)
    objective map."""
    M0 = np.asarray(target(assign(np.zeros(n_params))), dtype=float)
    cols = np.empty((M0.size, n_params))
    basis = np.zeros(n_params)
    for k in range(n_params):
        basis[k] = 1.0
        cols[:, k] = (np.asarray(target(assign(basis)), dtype=float) - M0).ravel(order="F")
        basis[k] = 0.0
    return M0.ravel(order="F"), cols


def solve_feasibility(
    variables,
    constraints,
    *,
    margin_min: float = MARGIN_MIN,
    psd_tol: float = PSD_TOL,
    box_bound: float = BOX_BOUND,
    minimize_map: Callable[[Mapping[str, np.ndarray]], np.ndarray] | None = None,
    margin_floor: float | None = None,
    solver: str | None = None,
) -> LmiSolution:
    """Solve a structured semidefinite feasibility program.

    Parameters
    ----------
    variables : sequence of LmiVariable
    constraints : sequence of LmiConstraint
    margin_min : float
        Certified strict margin required for a "feasible" verdict.
    psd_tol : float
        Permitted dip below zero for non-strict constraints.
    box_bound : float
        Box bound |entry| <= box_bound on every decision parameter (the
        margin maximization needs a compact feasible set).
    minimize_map : callable, optional
        When given, the solve minimizes the Frobenius norm of this affine
        map instead of maximizing the margin; strict constraints are then
        held at ``margin_floor``.  Used to steer an otherwise free solution
        toward a preferred point.
    margin_floor : float, optional
        Strict-slack level enforced in steering mode (default margin_min).
    solver : str, optional
        Force a specific cvxpy solver; default tries CLARABEL then SCS.

    Returns
    -------
    LmiSolution
        Assignment plus independently certified slack report.  Masked
        entries of every returned variable are exactly zero.
    """
    variables = list(variables)
    constraints = list(constraints)
    if not variables:
        raise MalformedProblem("a problem needs at least one variable")
    rng = np.random.default_rng(12345)
    n_params, assign, affine = _affinize(variables, constraints, rng)

    x = cp.Variable(n_params) if n_params else None
    t = cp.Variable()
    cons = []
    for con, aff in zip(constraints, affine):
        if x is not None and aff.cols.any():
            flat = aff.cols @ x + aff.M0.ravel(order="F")
            expr = cp.reshape(flat, (aff.dim, aff.dim), order="F")
            expr = 0.5 * (expr + expr.T)
        else:
            expr = cp.Constant(aff.M0)
        if con.strict:
            cons.append(expr - t * np.eye(aff.dim) >> 0)
        else:
            cons.append(expr >> 0)
    if x is not None:
        cons += [x <= box_bound, x >= -box_bound]
    cons.append(t <= box_bound)

    if minimize_map is None:
        objective = cp.Maximize(t)
    else:
        floor = margin_min if margin_floor is None else margin_floor
        cons.append(t >= floor)
        m0, mcols = _affinize_map(variables, minimize_map, n_params, assign)
        vecexpr = (mcols @ x + m0) if x is not None else cp.Constant(m0)
        objective = cp.Minimize(cp.norm(vecexpr, 2))

    problem = cp.Problem(objective, cons)
    order = (solver,) if solver else _SOLVER_ORDER
    best: LmiSolution | None = None
    for name in order:
        try:
            with warnings.catch_warnings():
                # inaccurate-solution warnings are expected near feasibility
                # boundaries; certification below arbitrates them
                warnings.simplefilter("ignore", UserWarning)
                problem.solve(solver=name)
        except cp.SolverError as exc:
            log.debug("solver %s failed: %s", name, exc)
            continue
        status = problem.status
        if status in ("infeasible", "infeasible_inaccurate") or (
            x is not None and x.value is None
        ) or t.value is None:
            candidate = LmiSolution(
                status="numerically_infeasible", assignment=None, margin=None,
                report=None, solver=name,
                detail=f"solver status {status}; no usable iterate",
            )
            decisive = status == "infeasible"
        else:
            values = (assign(np.asarray(x.value).ravel()) if x is not None
                      else assign(np.zeros(0)))
            report = certify(values, constraints)
            ok = report.satisfied(margin_min=margin_min, psd_tol=psd_tol)
            candidate = LmiSolution(
                status="feasible" if ok else "numerically_infeasible",
                assignment=values,
                margin=report.strict_margin,
                report=report,
                solver=name,
                detail=f"solver status {status}",
            )
            if ok:
                return candidate
            # a clean optimum whose own objective already concedes the
            # margin is a decisive negative; anything else (inaccurate
            # status, or the solver claiming a margin the certificate
            # refutes) deserves a second opinion from the next solver
            claims_feasible = (minimize_map is not None
                               or float(t.value) > margin_min)
            decisive = status == "optimal" and not claims_feasible
        if best is None or (candidate.margin is not None
                            and (best.margin is None
                                 or candidate.margin > best.margin)):
            best = candidate
        if decisive:
            break
    if best is None:
        return LmiSolution(
            status="numerically_infeasible", assignment=None, margin=None,
            report=None, solver="none", detail="every solver errored out",
        )
    return best


def problem_summary(variables, constraints, report: SlackReport | None = None) -> dict:
    """JSON-ready diagnostic description of a problem (and optionally the
    slacks of a solved assignment)."""
    out = {
        "variables": [
            {
                "name": v.name,
                "shape": list(v.shape),
                "symmetric": v.symmetric,
                "free_parameters": v.n_params,
                "masked": v.mask is not None,
            }
            for v in variables
        ],
        "constraints": [
            {"name": c.name, "sense": c.sense, "strict": c.strict}
            for c in constraints
        ],
    }
    if report is not None:
        out["slacks"] = [
            {"name": s.name, "strict": s.strict, "min_eig": s.min_eig}
            for s in report.constraints
        ]
        out["strict_margin"] = report.strict_margin
    return out
