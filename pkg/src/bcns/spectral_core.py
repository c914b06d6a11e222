"""Periodic sampled fields and the discrete Fourier substrate.

Everything in this package lives on the torus ``[-L, L)^d`` sampled on a
uniform lattice of ``n`` points per axis (``n`` a power of two).  Data is
meant to be concentrated near the origin so that the box behaves like free
space; :func:`coordinate_weight` measures and warns about mass parked near
the boundary.

Fourier convention (fixed, and relied on throughout): for an integer mode
vector ``m`` with components in ``[-n/2, n/2)`` the physical frequency is
``xi = (pi/L) * m`` and the stored coefficient is the Riemann sum

    c(m) = V**-0.5 * h**d * sum_x f(x) * exp(-i xi . x),     V = (2L)**d,

i.e. the volume-normalised (unitary) Fourier coefficient of the torus.  With
this scaling Parseval reads ``sum_x |f(x)|**2 * h**d == sum_m |c(m)|**2``,
c(m) of a band-limited field is independent of the grid resolution, and a
pure harmonic ``exp(i xi.x)`` has the single coefficient ``V**0.5``.
Coefficients are stored in FFT (wrap-around) order.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy import fft as _sfft

__all__ = [
    "GridSpec",
    "RealField",
    "SpectralCoeffs",
    "FieldSeries",
    "BoundaryMassWarning",
    "forward_transform",
    "inverse_transform",
    "lp_norm",
    "coordinate_weight",
    "boundary_mass_fraction",
    "dealias",
    "dealias_mask",
    "resample_field",
    "write_field",
    "read_field",
    "set_fft_workers",
]

_FFT_WORKERS = [1]


def set_fft_workers(n: int) -> None:
    """Cap the number of threads used by the FFT backend (default 1)."""
    if n < 1:
        raise ValueError("worker count must be >= 1")
    _FFT_WORKERS[0] = int(n)


class BoundaryMassWarning(UserWarning):
    """Raised when a field carries non-negligible mass near the box boundary."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice on the torus ``[-half_length, half_length)^dim``.

    ``spacing * n == 2 * half_length`` exactly; representable nonzero
    frequency magnitudes span ``[pi/half_length, pi*n/(2*half_length)]``.
    """

    dim: int
    n: int
    half_length: float

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 4 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"points per axis must be a power of two >= 4, got {self.n}")
        if not (self.half_length > 0):
            raise ValueError("half_length must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def volume(self) -> float:
        return (2.0 * self.half_length) ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def fundamental_frequency(self) -> float:
        """Smallest representable nonzero frequency magnitude, pi/L."""
        return math.pi / self.half_length

    @property
    def nyquist_frequency(self) -> float:
        """Largest representable frequency magnitude, pi*n/(2L)."""
        return math.pi * self.n / (2.0 * self.half_length)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Per-axis signed sample coordinates in ``[-L, L)``."""
        x = -self.half_length + self.spacing * np.arange(self.n)
        x.flags.writeable = False
        return (x,) * self.dim

    def coord_axis(self, axis: int) -> np.ndarray:
        """Coordinate of ``axis`` broadcast against the grid shape."""
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis must be in [0, {self.dim}), got {axis}")
        shape = [1] * self.dim
        shape[axis] = self.n
        return self.coords[axis].reshape(shape)

    @cached_property
    def modes(self) -> tuple[np.ndarray, ...]:
        """Per-axis integer mode numbers in FFT order."""
        m = np.rint(np.fft.fftfreq(self.n) * self.n).astype(np.int64)
        m.flags.writeable = False
        return (m,) * self.dim

    @cached_property
    def freqs(self) -> tuple[np.ndarray, ...]:
        """Per-axis physical frequencies, broadcastable to the grid shape."""
        out = []
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.n
            f = (self.fundamental_frequency * self.modes[axis].astype(float)).reshape(shape)
            f.flags.writeable = False
            out.append(f)
        return tuple(out)

    @cached_property
    def freq_sq(self) -> np.ndarray:
        k2 = np.zeros(self.shape)
        for f in self.freqs:
            k2 = k2 + f**2
        k2.flags.writeable = False
        return k2

    @cached_property
    def freq_mag(self) -> np.ndarray:
        k = np.sqrt(self.freq_sq)
        k.flags.writeable = False
        return k

    @cached_property
    def _phase(self) -> np.ndarray:
        # (-1)**(m_1 + ... + m_d), the shift between lattice DFT indexing
        # (origin at the first sample) and the signed coordinate origin.
        total = np.zeros(self.shape, dtype=np.int64)
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.n
            total = total + self.modes[axis].reshape(shape)
        phase = np.where(total % 2 == 0, 1.0, -1.0)
        phase.flags.writeable = False
        return phase

    @cached_property
    def _fwd_scale(self) -> float:
        # V**0.5 / n**d == h**d / V**0.5
        return math.sqrt(self.volume) / self.n**self.dim

    @cached_property
    def dealias_keep(self) -> np.ndarray:
        """Boolean mask of modes with every ``|m_i| <= n/3`` (two-thirds rule)."""
        cut = self.n // 3
        keep = np.ones(self.shape, dtype=bool)
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.n
            keep &= (np.abs(self.modes[axis]) <= cut).reshape(shape)
        keep.flags.writeable = False
        return keep


def _check_component_shape(grid: GridSpec, data: np.ndarray) -> None:
    lead = data.shape[: data.ndim - grid.dim]
    if data.shape[data.ndim - grid.dim :] != grid.shape:
        raise ValueError(f"trailing axes {data.shape} do not match grid shape {grid.shape}")
    if lead not in ((), (grid.dim,), (grid.dim, grid.dim)):
        raise ValueError(f"component axes {lead} must be scalar, ({grid.dim},) or ({grid.dim},{grid.dim})")


@dataclass(frozen=True)
class RealField:
    """Immutable sampled field: scalar, vector (d components) or d x d matrix."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=float)
        _check_component_shape(self.grid, arr)
        if not np.isfinite(arr).all():
            raise ValueError("field samples must be finite")
        arr = arr.copy() if arr.flags.writeable is False else arr
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def component_rank(self) -> int:
        return self.data.ndim - self.grid.dim

    @property
    def is_scalar(self) -> bool:
        return self.component_rank == 0

    @property
    def is_vector(self) -> bool:
        return self.component_rank == 1

    def with_data(self, data: np.ndarray) -> "RealField":
        return RealField(self.grid, data)

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean magnitude over component axes."""
        if self.is_scalar:
            return np.abs(self.data)
        comp = self.data.reshape(-1, *self.grid.shape)
        return np.sqrt((comp**2).sum(axis=0))


@dataclass(frozen=True)
class SpectralCoeffs:
    """Fourier coefficients of a :class:`RealField`, FFT mode order."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=complex)
        _check_component_shape(self.grid, arr)
        if not np.isfinite(arr).all():
            raise ValueError("spectral coefficients must be finite")
        arr = arr.copy() if arr.flags.writeable is False else arr
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def component_rank(self) -> int:
        return self.data.ndim - self.grid.dim

    @property
    def is_scalar(self) -> bool:
        return self.component_rank == 0

    def with_data(self, data: np.ndarray) -> "SpectralCoeffs":
        return SpectralCoeffs(self.grid, data)

    def hermitian_defect(self) -> float:
        """Max deviation from the real-field symmetry ``c(-m) == conj(c(m))``."""
        return float(max(_hermitian_defect(self.grid, comp) for comp in _iter_components(self)))


def _iter_components(obj) -> Iterator[np.ndarray]:
    if obj.component_rank == 0:
        yield obj.data
    else:
        for comp in obj.data.reshape(-1, *obj.grid.shape):
            yield comp


def _reverse_modes(grid: GridSpec, carr: np.ndarray) -> np.ndarray:
    out = carr
    for axis in range(-grid.dim, 0):
        out = np.roll(np.flip(out, axis=axis), 1, axis=axis)
    return out


def _hermitian_defect(grid: GridSpec, carr: np.ndarray) -> float:
    return float(np.max(np.abs(np.conj(_reverse_modes(grid, carr)) - carr)))


def _forward_raw(grid: GridSpec, data: np.ndarray) -> np.ndarray:
    axes = tuple(range(-grid.dim, 0))
    out = _sfft.fftn(data, axes=axes, workers=_FFT_WORKERS[0])
    out *= grid._phase * grid._fwd_scale
    return out


def _inverse_raw(grid: GridSpec, carr: np.ndarray) -> np.ndarray:
    axes = tuple(range(-grid.dim, 0))
    out = _sfft.ifftn(carr * grid._phase, axes=axes, workers=_FFT_WORKERS[0])
    return out.real / grid._fwd_scale


def forward_transform(field: RealField) -> SpectralCoeffs:
    """Discrete Fourier transform under the documented unitary normalisation."""
    return SpectralCoeffs(field.grid, _forward_raw(field.grid, field.data))


def inverse_transform(coeffs: SpectralCoeffs, symmetry_tol: float = 1e-10) -> RealField:
    """Inverse transform; rejects inputs violating Hermitian symmetry.

    ``symmetry_tol`` is relative to the largest coefficient magnitude.
    """
    scale = float(np.max(np.abs(coeffs.data))) if coeffs.data.size else 0.0
    defect = coeffs.hermitian_defect()
    if defect > symmetry_tol * max(scale, 1e-300):
        raise ValueError(
            f"Hermitian symmetry violation: defect {defect:.3e} exceeds "
            f"{symmetry_tol:.1e} of peak magnitude {scale:.3e}"
        )
    return RealField(coeffs.grid, _inverse_raw(coeffs.grid, coeffs.data))


def lp_norm(field: RealField, p: float) -> float:
    """Riemann-sum L^p norm; vector fields use the pointwise Euclidean magnitude."""
    if p != math.inf and p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    mag = field.magnitude()
    if p == math.inf:
        return float(mag.max())
    return float((mag**p).sum() * field.grid.cell_volume) ** (1.0 / p)


def boundary_mass_fraction(field: RealField, margin: float = 0.1) -> float:
    """Fraction of the absolute mass within ``margin * L`` of the box boundary."""
    grid = field.grid
    mag = field.magnitude()
    near = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.dim):
        near |= np.abs(grid.coord_axis(axis)) >= (1.0 - margin) * grid.half_length
    total = mag.sum()
    if total == 0.0:
        return 0.0
    return float(mag[near].sum() / total)


def coordinate_weight(field: RealField, axis: int, warn_threshold: float = 1e-8) -> RealField:
    """Pointwise product with the signed coordinate of ``axis`` (0-based).

    Warns with :class:`BoundaryMassWarning` when the input's near-boundary
    mass fraction exceeds ``warn_threshold``; the product is then polluted by
    the coordinate's jump across the periodic seam.
    """
    grid = field.grid
    frac = boundary_mass_fraction(field)
    if frac > warn_threshold:
        warnings.warn(
            f"coordinate weight on axis {axis}: {frac:.3e} of the field's mass lies within "
            f"0.1*L of the box boundary (threshold {warn_threshold:.1e})",
            BoundaryMassWarning,
            stacklevel=2,
        )
    return RealField(grid, field.data * grid.coord_axis(axis))


def dealias_mask(grid: GridSpec) -> np.ndarray:
    return grid.dealias_keep


def dealias(coeffs: SpectralCoeffs) -> SpectralCoeffs:
    """Zero every mode with any ``|m_i| > n/3``; idempotent."""
    return coeffs.with_data(coeffs.data * coeffs.grid.dealias_keep)


def resample_field(field: RealField, n_new: int, discard_tol: float = 1e-8) -> RealField:
    """Re-sample onto an ``n_new``-point grid by spectral padding/truncation.

    Refinement is exact for any input; coarsening requires the input to be
    band-limited to the target grid (discarded spectral mass above
    ``discard_tol`` relative is an error).
    """
    grid = field.grid
    if n_new == grid.n:
        return field
    new_grid = GridSpec(grid.dim, n_new, grid.half_length)
    comps_in = list(_iter_components(forward_transform(field)))
    out_comps = []
    for carr in comps_in:
        cen = np.fft.fftshift(carr)
        if n_new > grid.n:
            pad = (n_new - grid.n) // 2
            cen = np.pad(cen, [(pad, pad)] * grid.dim)
        else:
            cut = (grid.n - n_new) // 2
            total = np.sqrt((np.abs(cen) ** 2).sum())
            keep_mask = np.zeros(grid.shape, dtype=bool)
            keep_mask[tuple(slice(cut, cut + n_new) for _ in range(grid.dim))] = True
            lost = np.sqrt((np.abs(cen[~keep_mask]) ** 2).sum())
            if total > 0 and lost > discard_tol * total:
                raise ValueError(
                    f"resample to n={n_new} would discard {lost/total:.3e} of the spectrum"
                )
            cen = cen[tuple(slice(cut, cut + n_new) for _ in range(grid.dim))]
        out_comps.append(np.fft.ifftshift(cen))
    data = np.stack(out_comps).reshape(field.data.shape[: field.component_rank] + new_grid.shape)
    return RealField(new_grid, _inverse_raw(new_grid, data))


@dataclass(frozen=True)
class FieldSeries:
    """Time-indexed fields on a common grid, sorted by time."""

    times: np.ndarray
    fields: tuple[RealField, ...]

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times must be a nonempty 1-D array")
        if len(self.fields) != t.size:
            raise ValueError("times and fields must have equal length")
        if t.size > 1 and not (np.diff(t) > 0).all():
            raise ValueError("times must be strictly increasing")
        grid = self.fields[0].grid
        if any(f.grid != grid for f in self.fields):
            raise ValueError("all fields in a series must share one grid")
        t.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "fields", tuple(self.fields))

    def __len__(self) -> int:
        return len(self.fields)

    def __iter__(self) -> Iterator[tuple[float, RealField]]:
        return zip(self.times.tolist(), self.fields)

    @property
    def grid(self) -> GridSpec:
        return self.fields[0].grid

    def uniform_dt(self, rtol: float = 1e-8) -> float:
        """Sample spacing; raises if the time grid is not uniform."""
        if len(self) < 2:
            raise ValueError("need at least two samples for a time spacing")
        dts = np.diff(self.times)
        dt = float(dts[0])
        if not np.allclose(dts, dt, rtol=rtol, atol=0.0):
            raise ValueError("time samples are not uniformly spaced")
        return dt


_MAGIC = b"BCNS"
_VERSION = 1
_HEADER = struct.Struct("<4sIIId")


def write_field(path: str | Path, field: RealField) -> None:
    """Write the flat binary container: header {magic, version, d, n, L}, then
    little-endian float64 samples in row-major order (components outermost)."""
    grid = field.grid
    header = _HEADER.pack(_MAGIC, _VERSION, grid.dim, grid.n, grid.half_length)
    payload = np.ascontiguousarray(field.data, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)


def read_field(path: str | Path) -> RealField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("field container too short")
    magic, version, dim, n, half_length = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise ValueError(f"unsupported container version {version}")
    grid = GridSpec(dim, n, half_length)
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    npoints = n**dim
    ncomp, rem = divmod(payload.size, npoints)
    if rem != 0 or ncomp not in (1, dim, dim * dim):
        raise ValueError(f"payload of {payload.size} floats does not tile an {n}^{dim} grid")
    shape = {1: grid.shape, dim: (dim,) + grid.shape, dim * dim: (dim, dim) + grid.shape}[ncomp]
    return RealField(grid, payload.reshape(shape).astype(float))
