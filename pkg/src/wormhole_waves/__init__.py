"""Numerical lab for equivariant wave maps on a wormhole.

Modules: ``model`` (parameters, grids, states, norms), ``harmonic``
(shooting for the harmonic maps Q), ``evolve`` (method-of-lines flows),
``analysis`` (exterior energy, projections, resolution diagnostic),
``cli`` (batch front door).
"""

from .errors import (
    BlowupError, BracketFailure, ConditioningWarning, DecayWarning, DomainError, DomainTooSmall,
    EmptyWindowWarning, FormMismatch, GridMismatch, IntegrationFailure, InvalidArgument,
    RejectedStep, TailTooShort, WormholeError,
)
from .model import FieldState, Form, ModelParams, RadialGrid, make_grid
from .harmonic import HarmonicMap, solve_prescribed, solve_Q
from .evolve import EvolutionLog, FlowKind, FlowSpec, Monitors, evolve, self_convergence
from .analysis import (
    certify_exterior_estimate, exterior_energy, project_exterior, project_exterior_fn,
    projection_constants, resolution_diagnostic, u_to_ue,
)

__version__ = "0.1.0"

__all__ = [
    "BlowupError", "BracketFailure", "ConditioningWarning", "DecayWarning", "DomainError",
    "DomainTooSmall", "EmptyWindowWarning", "FormMismatch", "GridMismatch",
    "IntegrationFailure", "InvalidArgument", "RejectedStep", "TailTooShort", "WormholeError",
    "FieldState", "Form", "ModelParams", "RadialGrid", "make_grid",
    "HarmonicMap", "solve_prescribed", "solve_Q",
    "EvolutionLog", "FlowKind", "FlowSpec", "Monitors", "evolve", "self_convergence",
    "certify_exterior_estimate", "exterior_energy", "project_exterior", "project_exterior_fn",
    "projection_constants", "resolution_diagnostic", "u_to_ue",
]
