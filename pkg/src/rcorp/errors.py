"""Exception types shared across the toolkit."""


class RcorpError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(RcorpError):
    """Malformed or inconsistent run configuration."""


class ShapeMismatch(RcorpError):
    """Matrix shapes do not line up for the requested operation."""


class DimensionMismatch(ShapeMismatch):
    """Per-agent dimensions are inconsistent with the rest of the system."""


class DegenerateNode(RcorpError):
    """A follower with zero in-degree and zero pinning gain (d_i + g_i = 0)."""


class AllPinned(RcorpError):
    """Every follower is pinned to the leader; the local design theory
    requires at least one unpinned follower."""


class StructureViolation(RcorpError):
    """A dense gain matrix has nonzero entries outside the block-diagonal
    feedback pattern."""


class NonzeroD(RcorpError):
    """Agent feedthrough is nonzero where the convex local synthesis
    requires D_i = 0."""


class GraphHasCycle(RcorpError):
    """The follower digraph has a directed cycle, so the acyclic design
    path does not apply."""


class RiccatiDiverged(RcorpError):
    """The Riccati fixed-point iteration failed to converge (the pair is
    not stabilizable, or the iteration budget was exhausted)."""


class BadThreshold(RcorpError):
    """A coupling-gain parameter r_i was below the graph-derived lower
    bound sigma_max^3 / sigma_min_nz."""


class SpectraOverlap(RcorpError):
    """Closed-loop and exosystem spectra share an eigenvalue; the Sylvester
    equation is singular."""


class NotSchur(RcorpError):
    """A matrix that must be Schur stable is not."""


class MalformedProblem(RcorpError):
    """A matrix-inequality constraint map failed the affinity or symmetry
    check."""


class NumericallyInfeasible(RcorpError):
    """A semidefinite feasibility program could not be certified feasible.

    This is a heuristic verdict: no certificate of true infeasibility is
    claimed.  ``margin`` carries the best strict-constraint slack found
    (may be None when the solver produced no usable iterate).
    """

    def __init__(self, message: str, margin=None, agents=None):
        super().__init__(message)
        self.margin = margin
        self.agents = tuple(agents) if agents is not None else None
