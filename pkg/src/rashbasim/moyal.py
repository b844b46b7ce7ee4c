"""Phase-space pseudo-differential operators for the potential coupling.

The force operator and its even companion act on a Wigner component w(x, p)
through the momentum transform.  With eta the variable dual to p,

    (Theta[f] w)^(x, eta)  = (1/(i eps)) [f(x - eps eta/2) - f(x + eps eta/2)] w^(x, eta)
    (Theta+[f] w)^(x, eta) =             [f(x - eps eta/2) + f(x + eps eta/2)] w^(x, eta)

Theta+ carries no 1/(i eps) prefactor: its expansion starts at 2 f w and it
obeys <Theta+[f] w> = 2 f <w>, which is the convention under which the
equilibrium-current moment identities hold.

Both multipliers are evaluated exactly for grid data through the Fourier
interpolant of f (or in closed form for linear and quadratic descriptors),
never through the truncated gradient series.  Two identities are then exact
on the grid, not merely spectrally accurate: the zeroth moment of Theta[f]w
vanishes (the eta = 0 symbol is zero) and the zeroth moment of Theta+[f]w
equals 2 f <w>.

Truncated Moyal products and brackets up to third order are provided for
identity verification only.  Their x-derivatives are spectral; their
p-derivatives are spectral with one refinement: a profile that is exactly
affine along a momentum axis (a momentum coordinate itself, for instance)
is differentiated by its slope, since the periodic transform of an
unbounded ramp is meaningless.

Operators are pure; kernel tables are read-only once built and safe to
share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .grids import (
    GridSpec,
    PotentialField,
    WignerField,
    _p_axes,
    _x_axes,
    fft_x,
    ifft_x,
    irfft_p,
    rfft_p,
    x_derivative,
    p_derivative,
)


def _as_potential(f, spec: GridSpec) -> PotentialField:
    if isinstance(f, PotentialField):
        return f
    return PotentialField.tabulated(spec, np.asarray(f, dtype=np.float64))


class ThetaKernels:
    """Precomputed shift tables for applying Theta and Theta+ on one grid.

    The tables sin(eps (k.eta)/2) and cos(eps (k.eta)/2) depend only on the
    grid and eps, so a single instance serves any number of potentials; per
    potential only a small 2D transform and one batched inverse transform
    over x remain.  Momentum transforms use the real-data half spectrum.
    """

    def __init__(self, spec: GridSpec, eps: float):
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.spec = spec
        self.eps = eps
        K1 = spec.kx1[:, None, None, None]
        K2 = spec.kx2[None, :, None, None]
        E1 = spec.eta1[None, None, :, None]
        E2 = spec.eta2_half[None, None, None, :]
        arg = (0.5 * eps) * (K1 * E1 + K2 * E2)
        self._sin = np.sin(arg)
        self._cos = np.cos(arg)

    def _closed_form(self, pot: PotentialField, plus: bool):
        spec, eps = self.spec, self.eps
        E1 = spec.eta1[None, None, :, None]
        E2 = spec.eta2_half[None, None, None, :]
        if pot.kind == "constant":
            if plus:
                return 2.0 * pot.params["value"] * np.ones((1, 1, 1, 1))
            return None
        if pot.kind == "linear":
            e1, e2 = pot.params["e1"], pot.params["e2"]
            if plus:
                # f(x-s) + f(x+s) = 2 f(x) for affine f
                return 2.0 * pot.values[:, :, None, None]
            return 1.0j * (e1 * E1 + e2 * E2)
        if pot.kind == "quadratic":
            c1, c2 = pot.params["c1"], pot.params["c2"]
            cx, cy = pot.params["center"]
            X1 = (self.spec.x1 - cx)[:, None, None, None]
            X2 = (self.spec.x2 - cy)[None, :, None, None]
            if plus:
                # quadratic: f(x-s)+f(x+s) = 2 f(x) + (eps^2/2)(c1 eta1^2 + c2 eta2^2)
                return 2.0 * pot.values[:, :, None, None] + 0.5 * eps**2 * (c1 * E1**2 + c2 * E2**2)
            return 2.0j * (c1 * X1 * E1 + c2 * X2 * E2)
        return "spectral"

    def multiplier(self, f, plus: bool = False) -> np.ndarray | None:
        """Transform-domain symbol for Theta[f] (or Theta+[f] with plus=True).

        None means the operator is identically zero.  The symbol lives on
        (Nx1, Nx2, Np1, Np2//2 + 1); it is imaginary for Theta and real for
        Theta+, and multiplies the momentum half-spectrum of the field.
        """
        pot = _as_potential(f, self.spec)
        closed = self._closed_form(pot, plus)
        if closed is None or isinstance(closed, np.ndarray):
            return closed
        vhat = np.fft.fft2(pot.values)[:, :, None, None]
        if plus:
            # real and even in eta for real f
            return ifft_x(vhat * (2.0 * self._cos), real=False).real
        # purely imaginary and odd in eta for real f; enforce the structure
        return 1.0j * ifft_x(vhat * ((-2.0 / self.eps) * self._sin), real=False).imag

    def _apply(self, f, w, plus: bool):
        m = self.multiplier(f, plus=plus)
        data = w.data if isinstance(w, WignerField) else np.asarray(w)
        if m is None:
            out = np.zeros_like(data)
        else:
            what = rfft_p(data)
            out = irfft_p(what * m, self.spec.p_shape)
        return WignerField(out) if isinstance(w, WignerField) else out

    def theta(self, f, w):
        return self._apply(f, w, plus=False)

    def theta_plus(self, f, w):
        return self._apply(f, w, plus=True)


def theta_apply(f, w, eps: float, spec: GridSpec):
    """Force operator Theta_eps[f] applied componentwise to w.

    f may be a PotentialField or raw samples on the position grid; w may be
    a WignerField or any array whose two trailing axes are momentum.  Real
    input gives real output.  Loops should build one :class:`ThetaKernels`
    and reuse it.
    """
    return ThetaKernels(spec, eps).theta(f, w)


def theta_plus_apply(f, w, eps: float, spec: GridSpec):
    """Even shift operator Theta+_eps[f]; leading order 2 f w."""
    return ThetaKernels(spec, eps).theta_plus(f, w)


# ---------------------------------------------------------------------------
# Truncated Moyal calculus


@dataclass(frozen=True)
class SymbolField:
    """A scalar phase-space function sampled on the 4D grid."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 4:
            raise ValueError(f"symbol must be a 4D phase-space array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("symbol contains non-finite values")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, fn, spec: GridSpec) -> "SymbolField":
        X1 = spec.x1[:, None, None, None]
        X2 = spec.x2[None, :, None, None]
        P1 = spec.p1[None, None, :, None]
        P2 = spec.p2[None, None, None, :]
        return cls(np.asarray(fn(X1, X2, P1, P2)) + np.zeros(spec.phase_shape))


def _affine_axis_derivative(values: np.ndarray, step: float, axis: int):
    """Derivative of a profile that is affine along ``axis``; None otherwise."""
    if values.shape[axis] < 3:
        return None
    d2 = np.diff(values, n=2, axis=axis)
    scale = float(np.max(np.abs(values)))
    if scale == 0.0:
        return np.zeros_like(values)
    if float(np.max(np.abs(d2))) > 1.0e-13 * scale:
        return None
    lo = np.take(values, 0, axis=axis)
    hi = np.take(values, 1, axis=axis)
    slope = np.expand_dims((hi - lo) / step, axis)
    return np.broadcast_to(slope, values.shape).copy()


def _symbol_derivative(values: np.ndarray, spec: GridSpec, axis: int, which: str) -> np.ndarray:
    if which == "x":
        step = spec.dx1 if axis == 0 else spec.dx2
        array_axis = _x_axes(values.ndim)[axis]
    else:
        step = spec.dp1 if axis == 0 else spec.dp2
        array_axis = _p_axes(values.ndim)[axis]
    affine = _affine_axis_derivative(values, step, array_axis)
    if affine is not None:
        return affine
    if which == "x":
        return x_derivative(values, spec, axis)
    return p_derivative(values, spec, axis)


class _DerivativeCache:
    """Repeated mixed derivatives of one symbol, memoized by multi-index."""

    def __init__(self, values: np.ndarray, spec: GridSpec):
        self.spec = spec
        self._store = {(0, 0, 0, 0): np.asarray(values)}

    def get(self, xo: tuple[int, int], po: tuple[int, int]) -> np.ndarray:
        key = (*xo, *po)
        if key in self._store:
            return self._store[key]
        # reduce one derivative order, preferring the x directions first
        for pos, which, axis in ((0, "x", 0), (1, "x", 1), (2, "p", 0), (3, "p", 1)):
            if key[pos] > 0:
                lower = list(key)
                lower[pos] -= 1
                base = self.get((lower[0], lower[1]), (lower[2], lower[3]))
                out = _symbol_derivative(base, self.spec, axis, which)
                break
        self._store[key] = out
        return out


def _multi_indices(order: int):
    return [(i, order - i) for i in range(order + 1)]


def _bidifferential_term(da: _DerivativeCache, db: _DerivativeCache, alpha, beta) -> np.ndarray:
    # (grad_x^alpha grad_p^beta a)(grad_p^alpha grad_x^beta b)
    return da.get(alpha, beta) * db.get(beta, alpha)


def moyal_product_order(a, b, k: int, spec: GridSpec,
                        da: _DerivativeCache | None = None,
                        db: _DerivativeCache | None = None) -> np.ndarray:
    """The k-th bidifferential term a #_k b (no eps power attached).

    #_0 is the pointwise product; #_1 is (i/2) times the Poisson bracket.
    """
    av = a.values if isinstance(a, SymbolField) else np.asarray(a)
    bv = b.values if isinstance(b, SymbolField) else np.asarray(b)
    if k == 0:
        return av * bv
    da = da or _DerivativeCache(av, spec)
    db = db or _DerivativeCache(bv, spec)
    total = 0.0
    for ja in range(k + 1):
        jb = k - ja
        for alpha in _multi_indices(ja):
            for beta in _multi_indices(jb):
                coeff = (-1.0) ** ja / (
                    factorial(alpha[0]) * factorial(alpha[1]) * factorial(beta[0]) * factorial(beta[1])
                )
                total = total + coeff * _bidifferential_term(da, db, alpha, beta)
    return total / (2.0j) ** k


def moyal_product_truncated(a, b, order: int, eps: float, spec: GridSpec) -> SymbolField:
    """Sum_{k <= order} eps^k a #_k b, order in {0, 1, 2, 3}."""
    if order not in (0, 1, 2, 3):
        raise ValueError("truncation order must be 0, 1, 2 or 3")
    av = a.values if isinstance(a, SymbolField) else np.asarray(a)
    bv = b.values if isinstance(b, SymbolField) else np.asarray(b)
    da = _DerivativeCache(av, spec)
    db = _DerivativeCache(bv, spec)
    total = moyal_product_order(av, bv, 0, spec)
    for k in range(1, order + 1):
        total = total + eps**k * moyal_product_order(av, bv, k, spec, da=da, db=db)
    return SymbolField(total)


def moyal_bracket_truncated(a, b, order: int, eps: float, spec: GridSpec) -> SymbolField:
    """Truncated bracket a # b - b # a.

    Antisymmetry is exact by construction, and the even-k terms cancel term
    by term (identical floating-point products appear in both orderings).
    """
    ab = moyal_product_truncated(a, b, order, eps, spec)
    ba = moyal_product_truncated(b, a, order, eps, spec)
    return SymbolField(ab.values - ba.values)
