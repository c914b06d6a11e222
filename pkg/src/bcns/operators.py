"""Fourier multipliers, differential operators, projections and paraproducts.

All operators act spectrally on periodic fields.  Inverse operators (inverse
Laplacian, the divergence-free/curl-free projections, the scalar reduction of
a velocity field) zero the mean mode and require mean-zero input, matching
the homogeneous-analysis convention used by the norm machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from bcns.littlewood_paley import DyadicPartition
from bcns.spectral_core import (
    GridSpec,
    RealField,
    _forward_raw,
    _inverse_raw,
)

__all__ = [
    "MultiplierSpec",
    "apply_multiplier",
    "require_mean_zero",
    "gradient",
    "jacobian",
    "divergence",
    "laplacian",
    "inv_neg_laplacian",
    "leray_P",
    "curlfree_Q",
    "scalarize_v",
    "heat_semigroup",
    "lame_semigroup",
    "validate_viscosity",
    "compose_F",
    "rational_damping",
    "bony_T",
    "bony_R",
    "deformation_tensor",
]


def require_mean_zero(f: RealField, context: str, rtol: float = 1e-10) -> None:
    """Reject fields whose mean mode is not negligible relative to their size."""
    comps = f.data.reshape(-1, *f.grid.shape)
    scale = math.sqrt(float((comps**2).sum()))
    mean = np.abs(comps.mean(axis=tuple(range(1, 1 + f.grid.dim)))).max()
    npts = f.grid.n**f.grid.dim
    if mean * math.sqrt(npts) > rtol * max(scale, 1e-300):
        raise ValueError(f"{context} requires mean-zero input (relative mean {mean:.3e})")


# ---------------------------------------------------------------------------
# generic multipliers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiplierSpec:
    """A Fourier multiplier given by its symbol on the frequency lattice.

    ``symbol`` maps the tuple of broadcastable frequency arrays to either a
    scalar symbol (grid-shaped array) or a matrix symbol with shape
    ``(d, d) + grid.shape``.  ``degree`` records the homogeneity for
    diagnostics only.  ``zero_mode_policy`` decides what replaces the symbol
    at the zero frequency: ``"zero"`` annihilates the mean, ``"identity"``
    keeps it.
    """

    symbol: Callable[[tuple[np.ndarray, ...]], np.ndarray]
    degree: float | None = None
    zero_mode_policy: str = "zero"

    def __post_init__(self) -> None:
        if self.zero_mode_policy not in ("zero", "identity"):
            raise ValueError(f"unknown zero_mode_policy {self.zero_mode_policy!r}")


def _evaluate_symbol(grid: GridSpec, spec: MultiplierSpec) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        sym = np.asarray(spec.symbol(grid.freqs), dtype=complex)
    if sym.shape not in (grid.shape, (grid.dim, grid.dim) + grid.shape):
        sym = np.broadcast_to(sym, grid.shape).copy()
    fill = 0.0 if spec.zero_mode_policy == "zero" else 1.0
    if sym.shape == grid.shape:
        sym[(0,) * grid.dim] = fill
    else:
        sym[(Ellipsis,) + (0,) * grid.dim] = np.eye(grid.dim) * fill
    if not np.isfinite(sym).all():
        raise ValueError("symbol singular at a resolved nonzero frequency")
    return sym


def apply_multiplier(f: RealField, spec: MultiplierSpec) -> RealField:
    """Apply a Fourier multiplier; the zero mode follows the declared policy."""
    grid = f.grid
    sym = _evaluate_symbol(grid, spec)
    fhat = _forward_raw(grid, f.data)
    if sym.shape == grid.shape:
        out = fhat * sym
    else:
        if f.component_rank != 1:
            raise ValueError("matrix symbol requires a vector field")
        out = np.einsum("ij...,j...->i...", sym, fhat)
    return RealField(grid, _inverse_raw(grid, out))


# ---------------------------------------------------------------------------
# differential operators (raw spectral helpers reused across the package)
# ---------------------------------------------------------------------------


def _grad_hat(grid: GridSpec, fhat: np.ndarray) -> np.ndarray:
    return np.stack([1j * grid.freqs[axis] * fhat for axis in range(grid.dim)])


def _div_hat(grid: GridSpec, uhat: np.ndarray) -> np.ndarray:
    out = np.zeros(grid.shape, dtype=complex)
    for axis in range(grid.dim):
        out += 1j * grid.freqs[axis] * uhat[axis]
    return out


def _inv_k2(grid: GridSpec) -> np.ndarray:
    k2 = grid.freq_sq.copy()
    k2[(0,) * grid.dim] = 1.0
    inv = 1.0 / k2
    inv[(0,) * grid.dim] = 0.0
    return inv


def _q_part_hat(grid: GridSpec, uhat: np.ndarray) -> np.ndarray:
    """Curl-free (gradient) part: xi (xi . u) / |xi|^2, zero mean mode."""
    proj = _div_hat(grid, uhat) * _inv_k2(grid)  # i xi.u / k^2
    return np.stack([-1j * grid.freqs[axis] * proj for axis in range(grid.dim)])


def gradient(f: RealField) -> RealField:
    if not f.is_scalar:
        raise ValueError("gradient expects a scalar field; use jacobian for vectors")
    grid = f.grid
    return RealField(grid, _inverse_raw(grid, _grad_hat(grid, _forward_raw(grid, f.data))))


def jacobian(u: RealField) -> RealField:
    """Matrix field J[i, j] = d u_i / d x_j."""
    if not u.is_vector:
        raise ValueError("jacobian expects a vector field")
    grid = u.grid
    uhat = _forward_raw(grid, u.data)
    rows = [_inverse_raw(grid, _grad_hat(grid, uhat[i])) for i in range(grid.dim)]
    return RealField(grid, np.stack(rows))


def divergence(u: RealField) -> RealField:
    if not u.is_vector:
        raise ValueError("divergence expects a vector field")
    grid = u.grid
    return RealField(grid, _inverse_raw(grid, _div_hat(grid, _forward_raw(grid, u.data))))


def laplacian(f: RealField) -> RealField:
    grid = f.grid
    return RealField(grid, _inverse_raw(grid, -grid.freq_sq * _forward_raw(grid, f.data)))


def inv_neg_laplacian(f: RealField) -> RealField:
    """Solve -lap(g) = f for mean-zero f (componentwise); zero mean output."""
    require_mean_zero(f, "inverse Laplacian")
    grid = f.grid
    return RealField(grid, _inverse_raw(grid, _inv_k2(grid) * _forward_raw(grid, f.data)))


def leray_P(u: RealField) -> RealField:
    """Projection onto divergence-free fields (mean-zero input required)."""
    if not u.is_vector:
        raise ValueError("projection expects a vector field")
    require_mean_zero(u, "divergence-free projection")
    grid = u.grid
    uhat = _forward_raw(grid, u.data)
    return RealField(grid, _inverse_raw(grid, uhat - _q_part_hat(grid, uhat)))


def curlfree_Q(u: RealField) -> RealField:
    """Projection onto gradient fields: identity minus the divergence-free part."""
    if not u.is_vector:
        raise ValueError("projection expects a vector field")
    require_mean_zero(u, "curl-free projection")
    grid = u.grid
    return RealField(grid, _inverse_raw(grid, _q_part_hat(grid, _forward_raw(grid, u.data))))


def scalarize_v(u: RealField) -> RealField:
    """Scalar reduction of the curl-free part: symbol ``i xi . u / |xi|``.

    A zero-order multiplier away from the origin, so per-shell L^2 norms of
    the output coincide with those of the curl-free part of ``u``.
    """
    if not u.is_vector:
        raise ValueError("scalar reduction expects a vector field")
    require_mean_zero(u, "scalar reduction")
    grid = u.grid
    kmag = grid.freq_mag.copy()
    kmag[(0,) * grid.dim] = 1.0
    vhat = _div_hat(grid, _forward_raw(grid, u.data)) / kmag
    vhat[(0,) * grid.dim] = 0.0
    return RealField(grid, _inverse_raw(grid, vhat))


# ---------------------------------------------------------------------------
# semigroups
# ---------------------------------------------------------------------------


def validate_viscosity(mu: float, lam: float) -> None:
    if not (mu > 0 and 2 * mu + lam > 0):
        raise ValueError(f"viscosity must satisfy mu > 0 and 2*mu + lam > 0, got mu={mu}, lam={lam}")


def heat_semigroup(f: RealField, t: float, kappa: float) -> RealField:
    """Exact spectral heat flow ``exp(t kappa lap)`` (componentwise)."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    if not kappa > 0:
        raise ValueError("diffusivity must be positive")
    grid = f.grid
    factor = np.exp(-kappa * grid.freq_sq * t)
    return RealField(grid, _inverse_raw(grid, factor * _forward_raw(grid, f.data)))


def lame_semigroup(u: RealField, t: float, mu: float, lam: float) -> RealField:
    """Exact flow of the viscous operator ``mu lap + (lam+mu) grad div``.

    Acts as heat flow with diffusivity ``mu`` on the divergence-free part and
    ``nu = lam + 2 mu`` on the curl-free part; the mean mode is preserved.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    validate_viscosity(mu, lam)
    if not u.is_vector:
        raise ValueError("expected a vector field")
    grid = u.grid
    nu = lam + 2 * mu
    uhat = _forward_raw(grid, u.data)
    qhat = _q_part_hat(grid, uhat)
    phat = uhat - qhat
    k2 = grid.freq_sq
    out = phat * np.exp(-mu * k2 * t) + qhat * np.exp(-nu * k2 * t)
    return RealField(grid, _inverse_raw(grid, out))


# ---------------------------------------------------------------------------
# composition and products
# ---------------------------------------------------------------------------


def compose_F(
    f: RealField,
    func: Callable[[np.ndarray], np.ndarray],
    domain: Callable[[np.ndarray], bool] | None = None,
) -> RealField:
    """Pointwise composition ``func(f)`` for smooth ``func`` with ``func(0) = 0``.

    ``domain`` may reject inputs outside the range where ``func`` is smooth
    (e.g. samples approaching a pole).
    """
    if not f.is_scalar:
        raise ValueError("composition expects a scalar field")
    at_zero = float(func(np.array(0.0)))
    if abs(at_zero) > 1e-14:
        raise ValueError(f"composition requires func(0) = 0, got {at_zero:.3e}")
    if domain is not None and not domain(f.data):
        raise ValueError("composition input violates the declared domain")
    return RealField(f.grid, np.asarray(func(f.data), dtype=float))


def rational_damping(f: RealField, floor: float = 0.0) -> RealField:
    """The composition ``a -> a / (1 + a)``, defined while ``1 + a`` stays positive."""
    return compose_F(f, lambda a: a / (1.0 + a), domain=lambda a: float((1.0 + a).min()) > floor)


def _scalar_blocks(grid: GridSpec, fhat: np.ndarray, part: DyadicPartition) -> dict[int, np.ndarray]:
    return {j: _inverse_raw(grid, fhat * part.shell(j)) for j in part.shell_indices}


def bony_T(u: RealField, v: RealField, part: DyadicPartition) -> RealField:
    """Paraproduct: sum over shells of (blocks of u strictly below j-3) * (block j of v)."""
    if not (u.is_scalar and v.is_scalar):
        raise ValueError("paraproduct is defined here for scalar fields")
    grid = u.grid
    uhat = _forward_raw(grid, u.data)
    vhat = _forward_raw(grid, v.data)
    out = np.zeros(grid.shape)
    for j in part.shell_indices:
        if j - 4 < part.j_min:
            continue
        low = _inverse_raw(grid, uhat * part.low_mask(j - 4))
        blk = _inverse_raw(grid, vhat * part.shell(j))
        out += low * blk
    return RealField(grid, out)


def bony_R(u: RealField, v: RealField, part: DyadicPartition) -> RealField:
    """Remainder: sum of block products with shell indices at most 3 apart."""
    if not (u.is_scalar and v.is_scalar):
        raise ValueError("remainder is defined here for scalar fields")
    grid = u.grid
    ub = _scalar_blocks(grid, _forward_raw(grid, u.data), part)
    vb = _scalar_blocks(grid, _forward_raw(grid, v.data), part)
    out = np.zeros(grid.shape)
    for j in part.shell_indices:
        for jp in part.shell_indices:
            if abs(j - jp) <= 3:
                out += ub[j] * vb[jp]
    return RealField(grid, out)


def deformation_tensor(u: RealField) -> RealField:
    """Symmetric part of the velocity Jacobian (diagnostic)."""
    J = jacobian(u).data
    return RealField(u.grid, 0.5 * (J + np.swapaxes(J, 0, 1)))
