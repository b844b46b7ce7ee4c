"""Semiclassical spin drift-diffusion solver and the moment-level assemblers
used by the kinetic cross-checks.

The evolved system, with V the external potential, alpha the spin-orbit
strength and kappa an overall diffusive prefactor (default 1, settable to
the relaxation time to align the kinetic and diffusive clocks), is

    dt n0   = kappa * d_j ( d_j n0 + n0 d_j V )
    dt nvec = kappa * { d_j [ d_j nvec + nvec d_j V - 4 alpha A_j(nvec) ]
                        - 2 alpha perp_grad(V) x nvec - 4 alpha^2 B(nvec) }

with the pointwise linear couplings

    A_1(n) = (-n3, 0, n1),  A_2(n) = (0, -n3, n2),  B(n) = (n1, n2, 2 n3).

The sign of the A_j drift is pinned by consistency with the kinetic model:
it is the one for which kappa * (this right-hand side) reproduces the
momentum moments of the twice-applied transport operator on the local
equilibrium, which validation.semiclassical_consistency verifies to first
order in eps.

Spatial derivatives are spectral on the periodic box; time stepping is
classical RK4 under the parabolic bound dt <= safety*min(dx)^2/kappa.  The
right-hand side of the charge equation is in divergence form, so total
charge is conserved to roundoff; total spin is not conserved (the B term
relaxes it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grids import (
    GridSpec,
    NumericalAbort,
    SpinDensityField,
    x_derivative,
)
from .kinetic import ModelParams, RunResult, _density_diagnostics, _plan_steps
from .pauli import PhysicalDensity, pauli_log


@dataclass
class QddState:
    n: SpinDensityField
    t: float = 0.0


@dataclass
class MultiplierField:
    """Leading-order Lagrange multipliers (a0, avec) on the position grid."""

    a0: np.ndarray
    avec: np.ndarray

    def __post_init__(self):
        self.a0 = np.asarray(self.a0, dtype=np.float64)
        self.avec = np.asarray(self.avec, dtype=np.float64)
        if self.avec.shape != (3, *self.a0.shape):
            raise ValueError("avec must have shape (3, *a0.shape)")


def coupling_a(axis: int, nvec: np.ndarray) -> np.ndarray:
    """Spin-orbit drift direction A_axis applied pointwise to a spin field."""
    n1, n2, n3 = nvec
    zero = np.zeros_like(n1)
    if axis == 0:
        return np.stack([-n3, zero, n1])
    if axis == 1:
        return np.stack([zero, -n3, n2])
    raise ValueError("axis must be 0 or 1")


def coupling_b(nvec: np.ndarray) -> np.ndarray:
    """Spin relaxation direction B = (n1, n2, 2 n3), applied pointwise."""
    return np.stack([nvec[0], nvec[1], 2.0 * nvec[2]])


def qdd_rhs(n: SpinDensityField, params: ModelParams, spec: GridSpec,
            kappa: float = 1.0) -> SpinDensityField:
    """Right-hand side of the drift-diffusion system (see module docstring)."""
    data = n.data
    if data.shape[1:] != spec.x_shape:
        raise ValueError(f"field shape {data.shape[1:]} does not match grid {spec.x_shape}")
    al = params.alpha
    gv = params.potential.gradient(spec)
    nvec = data[1:]

    out = np.empty_like(data)
    # fluxes for all four components: d_j n_k + n_k d_j V (+ spin-orbit drift)
    flux1 = x_derivative(data, spec, 0) + data * gv[0]
    flux2 = x_derivative(data, spec, 1) + data * gv[1]
    if al != 0.0:
        flux1[1:] -= 4.0 * al * coupling_a(0, nvec)
        flux2[1:] -= 4.0 * al * coupling_a(1, nvec)
    out[:] = x_derivative(flux1, spec, 0) + x_derivative(flux2, spec, 1)
    if al != 0.0:
        # torque -2 alpha perp_grad(V) x nvec with perp_grad(V) = (dV/dx2, -dV/dx1, 0)
        out[1] -= 2.0 * al * (-gv[0] * nvec[2])
        out[2] -= 2.0 * al * (-gv[1] * nvec[2])
        out[3] -= 2.0 * al * (gv[1] * nvec[1] + gv[0] * nvec[0])
        out[1:] -= 4.0 * al**2 * coupling_b(nvec)
    return SpinDensityField(kappa * out)


def bkTT_semiclassical(n: SpinDensityField, params: ModelParams, spec: GridSpec) -> SpinDensityField:
    """Moment assembler for the twice-applied transport operator on the local
    equilibrium, at leading order: identical to qdd_rhs with kappa = 1.

    Named separately so the validation suite can compare it against the
    kinetic computation without touching the solver configuration.
    """
    return qdd_rhs(n, params, spec, kappa=1.0)


def multipliers_leading_order(n: SpinDensityField) -> MultiplierField:
    """Leading-order multipliers from the densities: the pointwise matrix
    logarithm, so avec is parallel to nvec by construction."""
    a = pauli_log(PhysicalDensity(n.data[0], n.data[1:]))
    return MultiplierField(a.c0.real, a.cvec.real)


def residual_current(a: MultiplierField, n: SpinDensityField, eps: float) -> np.ndarray:
    """Equilibrium spin-orbit current (2/eps) avec x nvec, pointwise.

    The charge part is identically zero; the spin part vanishes exactly when
    avec is parallel to nvec, which leading-order multipliers satisfy.
    Returns the three spin components, shape (3, Nx1, Nx2).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    return (2.0 / eps) * np.cross(a.avec, n.data[1:], axis=0)


def qdd_stable_dt(spec: GridSpec, params: ModelParams, kappa: float = 1.0,
                  safety: float = 0.1) -> float:
    """Explicit RK4 bound for the spectral Laplacian plus the spin relaxation.

    safety*min(dx)^2/kappa with safety = 0.1 sits inside the RK4 real-axis
    stability limit 2.785/(2 pi^2) ~ 0.141 for diffusion; the 8 alpha^2 kappa
    relaxation rate is capped independently.
    """
    dt = safety * min(spec.dx1, spec.dx2) ** 2 / max(kappa, 1.0e-300)
    rate = 8.0 * params.alpha**2 * kappa
    if rate > 0:
        dt = min(dt, 2.5 / rate)
    return dt


def qdd_step(state: QddState, params: ModelParams, spec: GridSpec, dt: float,
             kappa: float = 1.0) -> QddState:
    """One classical RK4 step."""
    bound = qdd_stable_dt(spec, params, kappa)
    if dt > bound * (1.0 + 1.0e-9):
        raise ValueError(f"dt = {dt:g} violates the parabolic stability bound {bound:g}")

    def rhs(arr):
        return qdd_rhs(SpinDensityField(arr), params, spec, kappa).data

    y = state.n.data
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * dt * k1)
    k3 = rhs(y + 0.5 * dt * k2)
    k4 = rhs(y + dt * k3)
    out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalAbort(f"drift-diffusion step produced non-finite values at t = {state.t + dt:.6g}")
    return QddState(SpinDensityField(out), state.t + dt)


def run_qdd(initial: SpinDensityField, params: ModelParams, spec: GridSpec, t_end: float,
            kappa: float = 1.0, snapshot_every: float | None = None,
            safety: float = 0.1, progress=None) -> RunResult:
    """Integrate the drift-diffusion system to t_end, emitting snapshots and
    per-step scalar diagnostics (total charge, total spin norm, spin fraction)."""
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    dt_max = qdd_stable_dt(spec, params, kappa, safety)
    dt, n_steps, emit_every = _plan_steps(t_end, snapshot_every, dt_max)
    state = QddState(initial.copy(), 0.0)

    times, densities, diag = [], [], []

    def emit(step):
        n = state.n
        n.check_physical(warn=True)
        times.append(state.t)
        densities.append(n.copy())
        row = {"step": step, "time": state.t}
        row.update(_density_diagnostics(n, spec))
        diag.append(row)
        if progress is not None:
            print(
                f"step {step:6d}  t={state.t:10.5f}  charge={row['total_charge']:.12e}  "
                f"max|n|/n0={row['max_spin_fraction']:.3e}",
                file=progress,
            )

    emit(0)
    for k in range(1, n_steps + 1):
        state = qdd_step(state, params, spec, dt, kappa)
        if k % emit_every == 0 or k == n_steps:
            emit(k)
    return RunResult(times, densities, diag, final_state=None)
