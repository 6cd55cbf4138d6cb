"""Classical stochastic-field simulation of single-qubit open-system dynamics."""

from .channels import (
    AmplitudeDampingParams,
    AmplitudeDampingTrajectory,
    InitialPureState,
    OhmicParams,
    OhmicTrajectory,
    RecurrenceParams,
    RecurrenceTrajectory,
    TabulatedTrajectory,
    evaluate,
    gamma_ohmic,
    gamma_recurrence,
    load_tabulated,
    dump_tabulated,
    rho_amplitude_damping,
    rho_dephasing,
)
from .qubit import (
    BlochVector,
    PureQubitState,
    QubitDensityMatrix,
    from_bloch,
    su2_step,
    to_bloch,
    validate_density,
    von_neumann_entropy,
)
from .synthesis import (
    PhaseProcess,
    amplitudes,
    analytic_state,
    field,
    phase_characteristic,
    sigma_squared,
    unwrap_arg,
)
from .integrator import path_infidelity, propagate_path
from .ensemble import compare, expansion_check_initial, gh_average, mc_average

__version__ = "0.1.0"
