"""Discretization substrate: periodic position grid, truncated momentum grid,
spectral calculus, momentum moments, and field snapshot I/O.

Conventions
-----------
* Position space is the periodic box [0, Lx1) x [0, Lx2), sampled at
  x_j = j*dx.  Momentum space is the symmetric box [-pmax, pmax]^2, sampled
  at cell centers p_l = -pmax + (l + 1/2)*dp.  Cell centering keeps the grid
  symmetric under p -> -p, so odd momentum moments of even states vanish
  exactly, and it avoids the p = 0 point where the precession axis is
  undefined.
* All derivatives are spectral; for real data the Nyquist mode of a
  derivative is projected out (the standard convention for even grids).
* Momentum moments use the midpoint rule, spectrally accurate for smooth
  integrands that decay below roundoff at the cutoff.  pmax >= 5 keeps
  exp(-p^2/2) below 4e-6 at the cutoff; pmax >= 6 pushes Gaussian moment
  errors below 1e-8.
* Matrix-valued fields carry their four Pauli components in one array with
  the component axis first.  For arrays of 4 or 5 dimensions the two
  trailing axes are momentum and the two before them are position; for 2 or
  3 dimensions the trailing two axes are position.
* Fields are plain value types with no interior mutability; they can be
  handed freely between threads, and every operation here is pure.
"""

from __future__ import annotations

import io
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as _sfft

_WORKERS = os.cpu_count() or 1


class PhysicalityWarning(UserWarning):
    """A density field violates |nvec| <= n0 beyond roundoff."""


class NumericalAbort(RuntimeError):
    """A solver produced non-finite values; diagnostic details in args."""


# ---------------------------------------------------------------------------
# Grid specification


@dataclass(frozen=True)
class GridSpec:
    """Shared discretization contract: box sizes, resolutions, cutoff, step.

    Resolutions must be even and at least 8 (transform friendliness) and the
    momentum cutoff at least 5 thermal units so that Maxwellian tails are
    negligible at the boundary.
    """

    Lx1: float
    Lx2: float
    Nx1: int
    Nx2: int
    pmax: float
    Np1: int
    Np2: int
    dt: float

    def __post_init__(self):
        for name in ("Nx1", "Nx2", "Np1", "Np2"):
            n = getattr(self, name)
            if n < 8 or n % 2 != 0:
                raise ValueError(f"{name} must be even and >= 8, got {n}")
        if not (self.Lx1 > 0 and self.Lx2 > 0):
            raise ValueError("domain lengths must be positive")
        if self.pmax < 5.0:
            raise ValueError(f"pmax must be >= 5 (thermal units), got {self.pmax}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    # -- spacings -----------------------------------------------------------
    @property
    def dx1(self) -> float:
        return self.Lx1 / self.Nx1

    @property
    def dx2(self) -> float:
        return self.Lx2 / self.Nx2

    @property
    def dp1(self) -> float:
        return 2.0 * self.pmax / self.Np1

    @property
    def dp2(self) -> float:
        return 2.0 * self.pmax / self.Np2

    @property
    def dp_area(self) -> float:
        return self.dp1 * self.dp2

    @property
    def dx_area(self) -> float:
        return self.dx1 * self.dx2

    # -- coordinate arrays ----------------------------------------------------
    @property
    def x1(self) -> np.ndarray:
        return np.arange(self.Nx1) * self.dx1

    @property
    def x2(self) -> np.ndarray:
        return np.arange(self.Nx2) * self.dx2

    @property
    def p1(self) -> np.ndarray:
        return -self.pmax + (np.arange(self.Np1) + 0.5) * self.dp1

    @property
    def p2(self) -> np.ndarray:
        return -self.pmax + (np.arange(self.Np2) + 0.5) * self.dp2

    # -- dual (transform) variables ------------------------------------------
    @property
    def kx1(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.Nx1, self.dx1)

    @property
    def kx2(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.Nx2, self.dx2)

    @property
    def kx2_half(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.rfftfreq(self.Nx2, self.dx2)

    @property
    def eta1(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.Np1, self.dp1)

    @property
    def eta2(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.Np2, self.dp2)

    @property
    def eta2_half(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.rfftfreq(self.Np2, self.dp2)

    @property
    def x_shape(self) -> tuple[int, int]:
        return (self.Nx1, self.Nx2)

    @property
    def p_shape(self) -> tuple[int, int]:
        return (self.Np1, self.Np2)

    @property
    def phase_shape(self) -> tuple[int, int, int, int]:
        return (self.Nx1, self.Nx2, self.Np1, self.Np2)

    def to_dict(self) -> dict:
        return {
            "Lx1": self.Lx1, "Lx2": self.Lx2, "Nx1": self.Nx1, "Nx2": self.Nx2,
            "pmax": self.pmax, "Np1": self.Np1, "Np2": self.Np2, "dt": self.dt,
        }


# ---------------------------------------------------------------------------
# Axis conventions and transforms


def _x_axes(ndim: int) -> tuple[int, int]:
    if ndim >= 4:
        return (ndim - 4, ndim - 3)
    if ndim >= 2:
        return (ndim - 2, ndim - 1)
    raise ValueError("field must have at least 2 dimensions")


def _p_axes(ndim: int) -> tuple[int, int]:
    if ndim < 4:
        raise ValueError("momentum axes require a phase-space field (>= 4 dims)")
    return (ndim - 2, ndim - 1)


def fft_x(f: np.ndarray) -> np.ndarray:
    return _sfft.fftn(f, axes=_x_axes(f.ndim), workers=_WORKERS)


def ifft_x(F: np.ndarray, real: bool = True) -> np.ndarray:
    out = _sfft.ifftn(F, axes=_x_axes(F.ndim), workers=_WORKERS)
    return out.real if real else out


def fft_p(f: np.ndarray) -> np.ndarray:
    return _sfft.fftn(f, axes=_p_axes(f.ndim), workers=_WORKERS)


def ifft_p(F: np.ndarray, real: bool = True) -> np.ndarray:
    out = _sfft.ifftn(F, axes=_p_axes(F.ndim), workers=_WORKERS)
    return out.real if real else out


def rfft_p(f: np.ndarray) -> np.ndarray:
    """Real transform over the momentum axes (last axis halved)."""
    return _sfft.rfftn(f, axes=_p_axes(f.ndim), workers=_WORKERS)


def irfft_p(F: np.ndarray, p_shape: tuple[int, int]) -> np.ndarray:
    return _sfft.irfftn(F, s=p_shape, axes=_p_axes(F.ndim), workers=_WORKERS)


def rfft_x(f: np.ndarray) -> np.ndarray:
    return _sfft.rfftn(f, axes=_x_axes(f.ndim), workers=_WORKERS)


def irfft_x(F: np.ndarray, x_shape: tuple[int, int]) -> np.ndarray:
    return _sfft.irfftn(F, s=x_shape, axes=_x_axes(F.ndim), workers=_WORKERS)


def _axis_wavenumbers(spec: GridSpec, axis: int, which: str) -> np.ndarray:
    if which == "x":
        return spec.kx1 if axis == 0 else spec.kx2
    return spec.eta1 if axis == 0 else spec.eta2


def _spectral_derivative(f: np.ndarray, k: np.ndarray, array_axis: int) -> np.ndarray:
    F = _sfft.fft(f, axis=array_axis, workers=_WORKERS)
    shape = [1] * f.ndim
    shape[array_axis] = k.size
    F *= (1j * k).reshape(shape)
    out = _sfft.ifft(F, axis=array_axis, workers=_WORKERS)
    return out if np.iscomplexobj(f) else out.real


def x_derivative(f: np.ndarray, spec: GridSpec, axis: int) -> np.ndarray:
    """Spectral d/dx_axis (axis 0 or 1) for periodic fields.

    Exact for band-limited data; the Nyquist derivative mode of real fields
    is projected out.
    """
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    return _spectral_derivative(f, _axis_wavenumbers(spec, axis, "x"), _x_axes(f.ndim)[axis])


def p_derivative(f: np.ndarray, spec: GridSpec, axis: int) -> np.ndarray:
    """Spectral d/dp_axis for fields that are periodic (or decayed) in p."""
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    return _spectral_derivative(f, _axis_wavenumbers(spec, axis, "p"), _p_axes(f.ndim)[axis])


# ---------------------------------------------------------------------------
# Fields


@dataclass
class WignerField:
    """Four real Pauli components on the phase-space grid.

    data has shape (4, Nx1, Nx2, Np1, Np2); components of a Hermitian state
    are real, which this representation enforces by construction.
    """

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 5 or self.data.shape[0] != 4:
            raise ValueError(f"expected shape (4, Nx1, Nx2, Np1, Np2), got {self.data.shape}")

    @classmethod
    def zeros(cls, spec: GridSpec) -> "WignerField":
        return cls(np.zeros((4, *spec.phase_shape)))

    @classmethod
    def from_components(cls, w0: np.ndarray, wvec: np.ndarray) -> "WignerField":
        return cls(np.concatenate([np.asarray(w0)[None], np.asarray(wvec)], axis=0))

    @property
    def w0(self) -> np.ndarray:
        return self.data[0]

    @property
    def wvec(self) -> np.ndarray:
        return self.data[1:]

    def copy(self) -> "WignerField":
        return WignerField(self.data.copy())

    def mass(self, spec: GridSpec) -> float:
        """Total charge integral of w0 over the whole phase space."""
        return float(self.data[0].sum() * spec.dp_area * spec.dx_area)


@dataclass
class SpinDensityField:
    """Charge and spin densities on the position grid; shape (4, Nx1, Nx2)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[0] != 4:
            raise ValueError(f"expected shape (4, Nx1, Nx2), got {self.data.shape}")

    @classmethod
    def zeros(cls, spec: GridSpec) -> "SpinDensityField":
        return cls(np.zeros((4, *spec.x_shape)))

    @classmethod
    def from_components(cls, n0: np.ndarray, nvec: np.ndarray) -> "SpinDensityField":
        return cls(np.concatenate([np.asarray(n0)[None], np.asarray(nvec)], axis=0))

    @property
    def n0(self) -> np.ndarray:
        return self.data[0]

    @property
    def nvec(self) -> np.ndarray:
        return self.data[1:]

    def copy(self) -> "SpinDensityField":
        return SpinDensityField(self.data.copy())

    def total_charge(self, spec: GridSpec) -> float:
        return float(self.data[0].sum() * spec.dx_area)

    def spin_integral(self, spec: GridSpec) -> np.ndarray:
        return self.data[1:].sum(axis=(1, 2)) * spec.dx_area

    def physicality_violation(self) -> float:
        """max over the grid of |nvec| - n0 (negative when physical)."""
        spin = np.sqrt((self.data[1:] ** 2).sum(axis=0))
        return float((spin - self.data[0]).max())

    def check_physical(self, warn: bool = True) -> bool:
        """Monitor |nvec| <= n0.  Violations warn, never abort: discretization
        error can transiently produce them."""
        tol = 1.0e-12 * max(1.0, float(np.abs(self.data[0]).max()))
        ok = self.physicality_violation() <= tol
        if warn and not ok:
            warnings.warn(
                f"density field violates |nvec| <= n0 by {self.physicality_violation():.3e}",
                PhysicalityWarning,
                stacklevel=2,
            )
        return ok


def maxwellian_weight(spec: GridSpec, exact_norm: bool = True) -> np.ndarray:
    """Thermal weight exp(-p^2/2)/(2 pi) on the momentum grid.

    With exact_norm the weight is rescaled so its discrete momentum integral
    is exactly 1 (the rescaling sits within quadrature error of 1/(2 pi) for
    admissible cutoffs); this makes the relaxation step conserve densities to
    roundoff instead of to quadrature error.
    """
    P1 = spec.p1[:, None]
    P2 = spec.p2[None, :]
    m = np.exp(-0.5 * (P1**2 + P2**2))
    if exact_norm:
        m /= m.sum() * spec.dp_area
    else:
        m /= 2.0 * np.pi
    return m


# ---------------------------------------------------------------------------
# Moments


def _moment_reduce(w, spec: GridSpec, weight=None):
    data = w.data if isinstance(w, WignerField) else np.asarray(w)
    if data.shape[-2:] != spec.p_shape:
        raise ValueError(f"momentum axes {data.shape[-2:]} do not match grid {spec.p_shape}")
    if data.ndim >= 4 and data.shape[-4:-2] != spec.x_shape:
        raise ValueError(f"position axes {data.shape[-4:-2]} do not match grid {spec.x_shape}")
    if weight is not None:
        data = data * weight
    return data.sum(axis=(-2, -1)) * spec.dp_area


def moments(w, spec: GridSpec):
    """Zeroth momentum moments <w_k> by the midpoint rule.

    Accepts a WignerField (returns a SpinDensityField) or a raw array whose
    two trailing axes are momentum (returns the reduced array).
    """
    out = _moment_reduce(w, spec)
    return SpinDensityField(out) if isinstance(w, WignerField) else out


def momentum_moment(w, spec: GridSpec, axis: int):
    """First momentum moments <p_axis w_k>, same quadrature as :func:`moments`."""
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    p = spec.p1[:, None] if axis == 0 else spec.p2[None, :]
    out = _moment_reduce(w, spec, weight=p)
    return SpinDensityField(out) if isinstance(w, WignerField) else out


# ---------------------------------------------------------------------------
# Potentials


@dataclass(frozen=True)
class PotentialField:
    """External electrostatic potential with an analytic descriptor.

    kinds: constant | linear | quadratic | gaussian | tabulated.  ``values``
    holds samples on the position grid.  Linear and quadratic potentials are
    not periodic; they participate only through their exact force action
    (closed-form transform multipliers and analytic gradients), and their
    samples are for inspection.  Gaussian and tabulated potentials are owned
    by their periodic grid interpolant: gradients are spectral, so every
    operator sees one and the same function.
    """

    kind: str
    values: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    @classmethod
    def constant(cls, spec: GridSpec, value: float = 0.0) -> "PotentialField":
        return cls("constant", np.full(spec.x_shape, float(value)), {"value": float(value)})

    @classmethod
    def zero(cls, spec: GridSpec) -> "PotentialField":
        return cls.constant(spec, 0.0)

    @classmethod
    def linear(cls, spec: GridSpec, e1: float, e2: float) -> "PotentialField":
        X1 = spec.x1[:, None]
        X2 = spec.x2[None, :]
        return cls("linear", e1 * X1 + e2 * X2, {"e1": float(e1), "e2": float(e2)})

    @classmethod
    def quadratic(cls, spec: GridSpec, c1: float, c2: float, center=(0.0, 0.0)) -> "PotentialField":
        X1 = spec.x1[:, None] - center[0]
        X2 = spec.x2[None, :] - center[1]
        return cls(
            "quadratic",
            c1 * X1**2 + c2 * X2**2,
            {"c1": float(c1), "c2": float(c2), "center": (float(center[0]), float(center[1]))},
        )

    @classmethod
    def gaussian(cls, spec: GridSpec, amplitude: float, width: float, center=None) -> "PotentialField":
        if center is None:
            center = (0.5 * spec.Lx1, 0.5 * spec.Lx2)
        X1 = spec.x1[:, None] - center[0]
        X2 = spec.x2[None, :] - center[1]
        v = amplitude * np.exp(-0.5 * (X1**2 + X2**2) / width**2)
        return cls(
            "gaussian",
            v,
            {"amplitude": float(amplitude), "width": float(width), "center": (float(center[0]), float(center[1]))},
        )

    @classmethod
    def tabulated(cls, spec: GridSpec, values: np.ndarray, gradient=None) -> "PotentialField":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != spec.x_shape:
            raise ValueError(f"tabulated potential shape {values.shape} does not match grid {spec.x_shape}")
        params = {}
        if gradient is not None:
            params["gradient"] = (np.asarray(gradient[0], float), np.asarray(gradient[1], float))
        return cls("tabulated", values, params)

    def gradient(self, spec: GridSpec) -> np.ndarray:
        """Force field (dV/dx1, dV/dx2), shape (2, Nx1, Nx2)."""
        if "gradient" in self.params:
            g1, g2 = self.params["gradient"]
            return np.stack([g1, g2])
        if self.kind == "constant":
            return np.zeros((2, *spec.x_shape))
        if self.kind == "linear":
            return np.stack(
                [np.full(spec.x_shape, self.params["e1"]), np.full(spec.x_shape, self.params["e2"])]
            )
        if self.kind == "quadratic":
            cx, cy = self.params["center"]
            g1 = 2.0 * self.params["c1"] * (spec.x1[:, None] - cx) + np.zeros(spec.x_shape)
            g2 = 2.0 * self.params["c2"] * (spec.x2[None, :] - cy) + np.zeros(spec.x_shape)
            return np.stack([g1, g2])
        return np.stack([x_derivative(self.values, spec, 0), x_derivative(self.values, spec, 1)])


# ---------------------------------------------------------------------------
# Snapshot I/O

_SNAPSHOT_MAGIC = "#%rashbasim-snapshot 1"


@dataclass
class Snapshot:
    name: str
    time: float
    data: np.ndarray
    spec: GridSpec


def _format_floats(row: np.ndarray) -> str:
    # repr round-trips float64 exactly, which gives bit-exact CSV payloads
    return ",".join(repr(float(v)) for v in row)


def write_snapshot(path, name: str, data: np.ndarray, spec: GridSpec, time: float = 0.0,
                   payload: str = "binary"):
    """Write a field snapshot: text header, then a binary or CSV payload.

    Both payloads round-trip bit-exactly (binary is raw little-endian
    float64; CSV uses shortest round-trip decimal representations).
    """
    if payload not in ("binary", "csv"):
        raise ValueError("payload must be 'binary' or 'csv'")
    data = np.asarray(data, dtype=np.float64)
    g = spec.to_dict()
    grid_str = ";".join(f"{k}={repr(v)}" for k, v in g.items())
    header = io.StringIO()
    header.write(_SNAPSHOT_MAGIC + "\n")
    header.write(f"# field: {name}\n")
    header.write(f"# time: {repr(float(time))}\n")
    header.write(f"# shape: {','.join(str(s) for s in data.shape)}\n")
    header.write(f"# payload: {payload}\n")
    header.write(f"# grid: {grid_str}\n")
    header.write("# end-header\n")
    with open(path, "wb") as fh:
        fh.write(header.getvalue().encode("ascii"))
        if payload == "binary":
            fh.write(data.astype("<f8").tobytes())
        else:
            rows = data.reshape(-1, data.shape[-1]) if data.ndim > 1 else data.reshape(1, -1)
            text = "\n".join(_format_floats(r) for r in rows) + "\n"
            fh.write(text.encode("ascii"))


def read_snapshot(path) -> Snapshot:
    with open(path, "rb") as fh:
        raw = fh.read()
    end_tag = b"# end-header\n"
    idx = raw.find(end_tag)
    if idx < 0 or not raw.startswith(_SNAPSHOT_MAGIC.encode("ascii")):
        raise ValueError(f"{path}: not a snapshot file")
    header_lines = raw[:idx].decode("ascii").splitlines()
    meta = {}
    for line in header_lines[1:]:
        key, _, value = line[2:].partition(": ")
        meta[key] = value
    shape = tuple(int(s) for s in meta["shape"].split(","))
    grid_kv = dict(item.split("=", 1) for item in meta["grid"].split(";"))
    spec = GridSpec(
        Lx1=float(grid_kv["Lx1"]), Lx2=float(grid_kv["Lx2"]),
        Nx1=int(grid_kv["Nx1"]), Nx2=int(grid_kv["Nx2"]),
        pmax=float(grid_kv["pmax"]), Np1=int(grid_kv["Np1"]), Np2=int(grid_kv["Np2"]),
        dt=float(grid_kv["dt"]),
    )
    body = raw[idx + len(end_tag):]
    if meta["payload"] == "binary":
        data = np.frombuffer(body, dtype="<f8").reshape(shape).copy()
    else:
        values = [float(v) for line in body.decode("ascii").split() for v in line.split(",") if v]
        data = np.array(values, dtype=np.float64).reshape(shape)
    return Snapshot(name=meta["field"], time=float(meta["time"]), data=data, spec=spec)
