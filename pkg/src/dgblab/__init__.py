"""Pseudospectral toolkit for a dispersion-generalized Benjamin equation.

Simulation of the damped closed loop on the circle, verification of the
spectral structure behind it (multiplicities, gaps, resonances, modulation
spread), and exact-control synthesis with independent certificates.
"""

from .spectral import (
    GridField,
    SpectralField,
    apply_multiplier,
    constant_field,
    cosine_field,
    derivative_x,
    l2_inner,
    l2_norm,
    mean,
    nonlinear_term,
    project_mean_zero,
    random_field,
    sine_field,
    sobolev_norm,
    to_grid,
    to_spectral,
    zero_field,
)
from .symbols import (
    BENJAMIN,
    ModelParams,
    SymbolTable,
    build_symbols,
    gap_check,
    modulation_check,
    multiplicity_scan,
    resonance_check,
)
from .damping import (
    DampingProfile,
    apply_dissipation_part,
    apply_feedback,
    apply_gain,
    apply_mean_correction,
    apply_smoothing_remainder,
    decomposition_residual,
    dissipation_equivalence,
    dissipation_form,
    make_profile_bump,
    make_profile_global,
)
from .dynamics import (
    Etdrk4Integrator,
    LinearClosedLoop,
    TrajectoryRecord,
    build_closed_loop,
    decay_fit,
    energy_residual,
    linear_propagate,
    linear_trajectory,
    nonlinear_step,
    semigroup_apply,
    simulate,
    simulate_damped,
)
from .control import (
    ControlProblem,
    ControlSolution,
    biorthogonal_family,
    decay_rate_predict,
    gram_matrix,
    linear_control_global_modal,
    linear_control_gramian,
    nonlinear_control_global,
    observability_constant,
)

__version__ = "0.1.0"
