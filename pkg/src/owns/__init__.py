"""One-way marching of hyperbolic systems with recursive filters.

Builds the semi-discrete marching operator ``M(s)``, classifies its spectrum by
Briggs' criterion, approximates the one-way projection with the OWNS-P and OWNS-R
recursive filters, selects recursion parameters greedily and tracks them along
the marching coordinate.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .system import (
    CharacteristicForm,
    GridDirection,
    HyperbolicSystem,
    OperatorM,
    SingularReduction,
    TransverseDiscretization,
    assemble_operator,
    characteristic_form,
    operator_factory,
    operator_from_matrix,
    reduce_singular,
)
from .spectral import Spectrum, classify_briggs, full_spectrum, nearest_eigenpairs
from .filters import (
    FilterOWNSP,
    FilterOWNSR,
    OWNSPFilter,
    OWNSRFilter,
    RecursionParamSet,
    commutator_norm,
    exact_projection,
    ownsp_apply_filter,
    ownsp_matrix,
    ownsr_apply,
    ownsr_beta_star,
    ownsr_eigvals,
    ownsr_matrix,
)
from .selection import (
    ObjectiveReport,
    greedy_select,
    heuristic_select,
    minimal_set_ownsp,
    minimal_set_ownsr,
    nested_head,
    objectives,
    order_params,
)
from .marching import MarchResult, StationSequence, march, n_factor, track_params
from .diagnostics import (
    ErrorStudy,
    bound_values,
    filtered_spectrum_check,
    mode_error,
    polynomial_residual_error,
    projection_error,
    run_study,
)
