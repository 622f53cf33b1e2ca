"""Robust cooperative output regulation toolkit for discrete-time
heterogeneous multi-agent systems: closed-loop assembly, solvability
checks, structured/local gain synthesis via semidefinite feasibility, and
verification (membership tests, regulator residuals, simulation,
robustness sampling)."""

from .assembly import (
    Dimensions,
    GainSet,
    GlobalAssembly,
    LocalAssembly,
    assemble_global,
    assemble_local,
    check_pair_stabilizable,
    closed_loop,
    permutation_matrix,
    permutation_similarity,
)
from .errors import (
    AllPinned,
    BadThreshold,
    ConfigError,
    DegenerateNode,
    DimensionMismatch,
    GraphHasCycle,
    MalformedProblem,
    NonzeroD,
    NotSchur,
    NumericallyInfeasible,
    RcorpError,
    RiccatiDiverged,
    ShapeMismatch,
    SpectraOverlap,
    StructureViolation,
)
from .graphs import (
    AugmentedGraph,
    CycleDetected,
    GraphMatrices,
    build_graph_matrices,
    has_spanning_tree,
    topological_order,
)
from .internal_model import (
    InternalModel,
    build_p_copy,
    minimal_polynomial,
    verify_p_copy,
)
from .lmi import (
    LmiConstraint,
    LmiSolution,
    LmiVariable,
    certify,
    solve_feasibility,
)
from .plant import (
    AgentPlant,
    ExogenousChannels,
    Exosystem,
    MasModel,
    UncertaintyDelta,
    apply_uncertainty,
    check_agent_stabilizable,
    check_exosystem_antistable,
    check_transmission_rank,
)
from .synthesis import (
    CertificateReport,
    GlobalSynthesisResult,
    LocalSynthesisResult,
    check_certificate,
    synthesize_acyclic,
    synthesize_global,
    synthesize_local,
)
from .verification import (
    MembershipReport,
    RegulatorSolution,
    SimulationTrace,
    evaluate_conditions,
    is_schur,
    membership,
    robustness_sample,
    simulate,
    solve_regulator,
)
from .config import RunConfig, load_config

__version__ = "0.1.0"
