"""Pauli-component algebra for 2x2 complex matrices.

A matrix ``a`` is stored as a scalar part ``c0`` and a vector part
``cvec = (c1, c2, c3)`` such that ``a = c0*sigma_0 + cvec . sigma``; the
four components are real exactly when ``a`` is Hermitian.  Products,
commutators and traces close over this representation, and for Hermitian
input the matrix exponential and logarithm have closed forms, which is all
the equilibrium / Lagrange-multiplier conversions need.

Components may be scalars or arrays of any shape ``S`` (``cvec`` then has
shape ``(3, *S)``), and every operation broadcasts, so single matrices and
whole fields of matrices share one code path.  All functions are pure and
the dataclasses are value types; safe for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: The four basis matrices sigma_0 .. sigma_3.
SIGMA = np.array(
    [
        [[1.0, 0.0], [0.0, 1.0]],
        [[0.0, 1.0], [1.0, 0.0]],
        [[0.0, -1.0j], [1.0j, 0.0]],
        [[1.0, 0.0], [0.0, -1.0]],
    ],
    dtype=np.complex128,
)

# Below this |cvec| the sinh(r)/r quotient is replaced by its Taylor series.
_SINHC_SMALL = 1.0e-6

# Relative tolerance of the Hermitian check (imaginary parts of components).
_HERMITIAN_TOL = 1.0e-12


@dataclass(frozen=True)
class PauliCoefficients:
    """Scalar part ``c0`` and vector part ``cvec`` of a 2x2 matrix.

    Components are stored complex even for Hermitian data; use
    :meth:`is_hermitian` for the cheap reality check.
    """

    c0: np.ndarray
    cvec: np.ndarray

    def __post_init__(self):
        c0 = np.asarray(self.c0, dtype=np.complex128)
        cvec = np.asarray(self.cvec, dtype=np.complex128)
        if cvec.shape != (3, *c0.shape):
            raise ValueError(
                f"cvec must have shape (3, *c0.shape); got {cvec.shape} for c0 of shape {c0.shape}"
            )
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "cvec", cvec)

    @classmethod
    def sigma(cls, k: int) -> "PauliCoefficients":
        """The k-th basis matrix (k = 0..3) as coefficients."""
        if k not in (0, 1, 2, 3):
            raise ValueError("sigma index must be 0..3")
        vec = np.zeros(3, dtype=np.complex128)
        if k == 0:
            return cls(1.0 + 0.0j, vec)
        vec[k - 1] = 1.0
        return cls(0.0j, vec)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "PauliCoefficients":
        """Decompose explicit matrices of shape (..., 2, 2).

        The round trip with :meth:`to_matrix` is exact: the component maps
        involve only additions and exact halving.
        """
        m = np.asarray(m, dtype=np.complex128)
        if m.shape[-2:] != (2, 2):
            raise ValueError(f"expected trailing (2, 2) axes, got shape {m.shape}")
        c0 = 0.5 * (m[..., 0, 0] + m[..., 1, 1])
        c1 = 0.5 * (m[..., 0, 1] + m[..., 1, 0])
        c2 = 0.5j * (m[..., 0, 1] - m[..., 1, 0])
        c3 = 0.5 * (m[..., 0, 0] - m[..., 1, 1])
        return cls(c0, np.stack([c1, c2, c3]))

    def to_matrix(self) -> np.ndarray:
        """Explicit 2x2 form, shape (*c0.shape, 2, 2)."""
        c0, (c1, c2, c3) = self.c0, self.cvec
        m = np.empty((*c0.shape, 2, 2), dtype=np.complex128)
        m[..., 0, 0] = c0 + c3
        m[..., 1, 1] = c0 - c3
        m[..., 0, 1] = c1 - 1.0j * c2
        m[..., 1, 0] = c1 + 1.0j * c2
        return m

    def is_hermitian(self, tol: float = _HERMITIAN_TOL) -> bool:
        """True when all four components are real up to ``tol`` (relative)."""
        scale = max(
            1.0, float(np.max(np.abs(self.c0), initial=0.0)), float(np.max(np.abs(self.cvec), initial=0.0))
        )
        worst = max(
            float(np.max(np.abs(self.c0.imag), initial=0.0)),
            float(np.max(np.abs(self.cvec.imag), initial=0.0)),
        )
        return worst <= tol * scale


@dataclass(frozen=True)
class PhysicalDensity:
    """Charge density ``n0 >= 0`` and real spin density ``nvec``.

    Physical states satisfy |nvec| <= n0 pointwise; equality marks a pure
    state, strict inequality a mixed one.  Construction rejects unphysical
    data outright (solvers that may transiently violate the bound through
    discretization error keep their densities in raw field types and only
    monitor it).
    """

    n0: np.ndarray
    nvec: np.ndarray

    def __post_init__(self):
        n0 = np.asarray(self.n0, dtype=np.float64)
        nvec = np.asarray(self.nvec, dtype=np.float64)
        if nvec.shape != (3, *n0.shape):
            raise ValueError(
                f"nvec must have shape (3, *n0.shape); got {nvec.shape} for n0 of shape {n0.shape}"
            )
        if np.any(n0 < 0):
            raise ValueError("PhysicalDensity requires n0 >= 0")
        spin = np.sqrt((nvec**2).sum(axis=0))
        bound = n0 * (1.0 + 1.0e-12) + 1.0e-300
        if np.any(spin > bound):
            raise ValueError("PhysicalDensity requires |nvec| <= n0 pointwise")
        object.__setattr__(self, "n0", n0)
        object.__setattr__(self, "nvec", nvec)

    @property
    def spin_norm(self) -> np.ndarray:
        return np.sqrt((self.nvec**2).sum(axis=0))

    def is_mixed(self) -> bool:
        """Strict inequality |nvec| < n0 everywhere (domain of the logarithm)."""
        return bool(np.all(self.spin_norm < self.n0))


def pauli_product(a: PauliCoefficients, b: PauliCoefficients) -> PauliCoefficients:
    """Matrix product in Pauli components.

    (a0 b0 + avec.bvec, a0 bvec + b0 avec + i avec x bvec); agrees with the
    explicit 2x2 multiplication.
    """
    c0 = a.c0 * b.c0 + (a.cvec * b.cvec).sum(axis=0)
    cvec = a.c0 * b.cvec + b.c0 * a.cvec + 1.0j * np.cross(a.cvec, b.cvec, axis=0)
    return PauliCoefficients(c0, cvec)


def pauli_commutator(a: PauliCoefficients, b: PauliCoefficients) -> PauliCoefficients:
    """ab - ba, evaluated through :func:`pauli_product` for self-consistency.

    Equals (0, 2i avec x bvec): the scalar parts cancel exactly and the
    antisymmetry is exact by construction.
    """
    ab = pauli_product(a, b)
    ba = pauli_product(b, a)
    return PauliCoefficients(ab.c0 - ba.c0, ab.cvec - ba.cvec)


def pauli_trace(a: PauliCoefficients) -> np.ndarray:
    """tr(a) = 2 a0."""
    return 2.0 * a.c0


def _require_hermitian(a: PauliCoefficients, who: str):
    if not a.is_hermitian():
        raise ValueError(f"{who} requires Hermitian input (real Pauli components)")


def pauli_exp(a: PauliCoefficients) -> PauliCoefficients:
    """Matrix exponential of a Hermitian matrix, in closed form.

    exp(a0 + avec.sigma) = e^{a0} (cosh r, sinh(r)/r * avec) with r = |avec|.
    The sinh(r)/r quotient switches to a three-term Taylor series below
    r = 1e-6 so the r -> 0 limit is smooth.  Non-Hermitian input is rejected.
    """
    _require_hermitian(a, "pauli_exp")
    a0 = a.c0.real
    av = a.cvec.real
    r = np.sqrt((av**2).sum(axis=0))
    small = r < _SINHC_SMALL
    r_safe = np.where(small, 1.0, r)
    sinhc = np.where(small, 1.0 + r**2 / 6.0 + r**4 / 120.0, np.sinh(r_safe) / r_safe)
    scale = np.exp(a0)
    return PauliCoefficients(scale * np.cosh(r), (scale * sinhc) * av)


def pauli_log(n: PhysicalDensity) -> PauliCoefficients:
    """Matrix logarithm of a strictly mixed physical density.

    With eigenvalues lam_pm = n0 +- |nvec| the result is
    a0 = log(lam_+ lam_-)/2 and avec = (nvec/|nvec|) log(lam_+/lam_-)/2;
    zero spin maps to (log n0, 0).  Requires n0 > 0 and |nvec| < n0, where
    the logarithm exists; pure or unphysical states are rejected.
    Inverse of :func:`pauli_exp` on its Hermitian range.
    """
    n0, nv = n.n0, n.nvec
    r = np.sqrt((nv**2).sum(axis=0))
    if np.any(n0 <= 0):
        raise ValueError("pauli_log requires n0 > 0")
    if np.any(r >= n0):
        raise ValueError("pauli_log requires |nvec| < n0 (strictly mixed state)")
    lam_p = n0 + r
    lam_m = n0 - r
    a0 = 0.5 * np.log(lam_p * lam_m)
    r_safe = np.where(r > 0, r, 1.0)
    coeff = np.where(r > 0, 0.5 * np.log(lam_p / lam_m) / r_safe, 0.0)
    return PauliCoefficients(a0, coeff * nv)
