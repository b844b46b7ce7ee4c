"""Spin transport toolkit for a two-dimensional electron gas with Rashba
spin-orbit coupling: a phase-space (Wigner-BGK) kinetic solver, the matching
semiclassical spin drift-diffusion solver, and a validation harness that
ties the two models together through their moment identities and the
diffusion limit."""

__version__ = "0.1.0"

from .grids import (
    GridSpec,
    NumericalAbort,
    PhysicalityWarning,
    PotentialField,
    SpinDensityField,
    WignerField,
    maxwellian_weight,
    moments,
    momentum_moment,
    p_derivative,
    read_snapshot,
    write_snapshot,
    x_derivative,
)
from .kinetic import (
    KineticSolver,
    KineticState,
    ModelParams,
    equilibrium_semiclassical,
    kinetic_step,
    run_kinetic,
    transport_apply,
)
from .moyal import (
    SymbolField,
    ThetaKernels,
    moyal_bracket_truncated,
    moyal_product_truncated,
    theta_apply,
    theta_plus_apply,
)
from .pauli import (
    PauliCoefficients,
    PhysicalDensity,
    pauli_commutator,
    pauli_exp,
    pauli_log,
    pauli_product,
    pauli_trace,
)
from .qdd import (
    MultiplierField,
    QddState,
    bkTT_semiclassical,
    coupling_a,
    coupling_b,
    multipliers_leading_order,
    qdd_rhs,
    qdd_step,
    residual_current,
    run_qdd,
)

__all__ = [name for name in dir() if not name.startswith("_")]
