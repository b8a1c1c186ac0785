"""Branching Brownian motion with variable speed: centering, simulation, F-KPP and diagnostics."""

__version__ = "0.1.0"

from .bbm_engine import (
    BranchingRun,
    OffspringLaw,
    PruningPolicy,
    RunEnsemble,
    many_to_one_check,
    martingale_series,
    simulate,
)
from .bridge import BridgeSpec, sample_bridges, stay_below_line_mc, stay_below_line_prob
from .centering import CenteringTerm, m_minus, m_plus, m_standard
from .diagnostics import (
    EmpiricalLaw,
    EnvelopeSpec,
    envelope_violation_rate,
    extremal_process_stats,
    limit_law_fit,
    slepian_dominance,
    universality_check,
)
from .errors import (
    ConstructionError,
    DomainError,
    EstimationError,
    NumericalError,
    PreconditionError,
    ResourceError,
    VsbbmError,
)
from .fkpp import FkppState, TailConstants, estimate_tail_constant, front_position, heaviside, solve, step
from .speed_profiles import (
    CaseBEnvelope,
    SpeedProfile,
    identity_profile,
    sandwich,
    two_speed_profile,
    validate_case_a,
    validate_case_b,
)
