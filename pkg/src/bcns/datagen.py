"""Deterministic generators for admissible test and experiment data.

Admissible means: zero mean, spectrum inside the resolved dyadic band (so
the shells reconstruct the field), and, for weighted-norm work, samples
concentrated well away from the box boundary.
"""

from __future__ import annotations

import numpy as np

from bcns.littlewood_paley import DyadicPartition, smooth_cutoff
from bcns.spectral_core import GridSpec, RealField, _forward_raw, _inverse_raw

__all__ = [
    "band_noise",
    "shell_bump",
    "flat_spectrum_noise",
    "concentrated_bump",
]


def _mask_and_invert(grid: GridSpec, what: np.ndarray, mask: np.ndarray) -> np.ndarray:
    what = what * mask
    what[(Ellipsis,) + (0,) * grid.dim] = 0.0
    return _inverse_raw(grid, what)


def band_noise(
    grid: GridSpec,
    rng: np.random.Generator,
    k_lo: float,
    k_hi: float,
    ncomp: int | None = None,
    normalize: float | None = 1.0,
) -> RealField:
    """White noise band-passed to ``k_lo <= |xi| <= k_hi``, mean removed.

    ``normalize`` rescales to the requested max-norm (None keeps raw scale).
    """
    shape = grid.shape if ncomp is None else (ncomp,) + grid.shape
    what = _forward_raw(grid, rng.standard_normal(shape))
    k = grid.freq_mag
    data = _mask_and_invert(grid, what, (k >= k_lo) & (k <= k_hi))
    if normalize is not None:
        peak = np.abs(data).max()
        if peak > 0:
            data = data * (normalize / peak)
    return RealField(grid, data)


def admissible_noise(
    grid: GridSpec,
    rng: np.random.Generator,
    part: DyadicPartition,
    ncomp: int | None = None,
    normalize: float | None = 1.0,
) -> RealField:
    """Noise supported exactly on the partition's resolved band."""
    return band_noise(grid, rng, 2.0**part.j_min, 2.0**part.j_max, ncomp, normalize)


def shell_bump(
    grid: GridSpec,
    rng: np.random.Generator,
    part: DyadicPartition,
    j: int,
    ncomp: int | None = None,
) -> RealField:
    """Random field frequency-localised to a single dyadic shell."""
    shape = grid.shape if ncomp is None else (ncomp,) + grid.shape
    what = _forward_raw(grid, rng.standard_normal(shape))
    data = _mask_and_invert(grid, what, part.shell(j))
    return RealField(grid, data)


def flat_spectrum_noise(
    grid: GridSpec,
    rng: np.random.Generator,
    k_flat: float,
    ncomp: int | None = None,
    amplitude_inf: float | None = None,
) -> RealField:
    """Random phases with flat spectral modulus up to ``k_flat``, smooth rolloff.

    Every dyadic shell below ``k_flat`` carries L^2 mass proportional to the
    shell volume, so the sup over shells of ``2**(-s0 j) ||block_j||_2`` with
    ``s0 = d/2`` is level across shells: the discrete stand-in for data whose
    scaling-critical sup-type norm at regularity ``-d/2`` is finite.
    """
    shape = grid.shape if ncomp is None else (ncomp,) + grid.shape
    what = _forward_raw(grid, rng.standard_normal(shape))
    mod = np.abs(what)
    mod[mod == 0.0] = 1.0
    phases = what / mod
    profile = smooth_cutoff(grid.freq_mag / k_flat)  # 1 up to k_flat, 0 past 2*k_flat
    data = _mask_and_invert(grid, phases * profile, np.ones(grid.shape, dtype=bool))
    if amplitude_inf is not None:
        peak = np.abs(data).max()
        if peak > 0:
            data = data * (amplitude_inf / peak)
    return RealField(grid, data)


def concentrated_bump(
    grid: GridSpec,
    amplitude: float,
    sigma: float,
    kappa: tuple[float, ...] | None = None,
    center: tuple[float, ...] | None = None,
    ncomp: int | None = None,
    phase_per_comp: float = 0.0,
) -> RealField:
    """Gaussian envelope times a plane-wave carrier: band-centered, compactly
    concentrated data suitable for weighted norms.

    The envelope width ``sigma`` should be well below the box half-length so
    boundary mass is negligible; the carrier ``kappa`` places the spectral
    content near ``|kappa|``.  The mean mode is removed exactly.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if sigma > grid.half_length / 8:
        raise ValueError("sigma too large: data would touch the box boundary")
    if center is None:
        center = (0.0,) * grid.dim
    env = np.ones(grid.shape)
    comp = np.ones(grid.shape)
    comp_sigma = min(1.5 * sigma, grid.half_length / 9.0)
    for axis in range(grid.dim):
        x = grid.coord_axis(axis) - center[axis]
        env = env * np.exp(-(x**2) / (2.0 * sigma**2))
        comp = comp * np.exp(-(x**2) / (2.0 * comp_sigma**2))
    comp_total = comp.sum()

    def one(shift: float) -> np.ndarray:
        if kappa is None:
            carrier = 1.0
        else:
            phase = np.zeros(grid.shape)
            for axis in range(grid.dim):
                phase = phase + kappa[axis] * (grid.coord_axis(axis) - center[axis])
            carrier = np.cos(phase + shift)
        data = amplitude * env * carrier
        # remove the mean with a concentrated compensator, not a constant:
        # a constant background would meet the coordinate weight's seam jump
        return data - (data.sum() / comp_total) * comp

    if ncomp is None:
        return RealField(grid, one(0.0))
    return RealField(grid, np.stack([one(phase_per_comp * i) for i in range(ncomp)]))
