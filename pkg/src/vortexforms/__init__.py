"""Vortex-lines equations i_γ' dσ = 0 for p-forms σ on extended phase space."""

from .dynamics import (IntegratorOptions, Trajectory, VortexDynamics, flow,
                       integrate_trajectory, velocity_at)
from .errors import (EvaluationError, ExpressionSyntaxError, IllPosedError, NumericalFailure,
                     UnknownIdentifierError)
from .expr import Expression, SpaceSpec, differentiate, evaluate, parse_expression
from .exterior import (Form, SpatialVector, compose, decompose, exterior_derivative,
                       form_rank_at, interior_product, wedge)
from .invariants import (ExpressionChain, GridChain, InvariantReport, MapChain, advect_chain,
                         check_absolute_invariant, check_liouville, check_relative_invariant,
                         integrate_over_chain, invariant_power, solution_tube)
from .systems import (HamiltonianSpec, NambuSpec, example4_sigma, hamiltonian_sigma,
                      nambu_sigma)
from .wellposed import Sampling, WellPosednessReport, analyze, check_degree

__version__ = "0.1.0"
