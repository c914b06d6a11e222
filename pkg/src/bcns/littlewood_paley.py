"""Dyadic frequency decomposition and the norms built on it.

A partition of unity over dyadic annuli is generated from one smooth radial
profile: ``shell_j(xi) = step(|xi|/2^j) - step(|xi|/2^(j-1))`` where ``step``
is a mollified cutoff equal to 1 on [0, 1] and 0 on [2, inf).  Shell ``j`` is
supported on ``2^(j-1) <= |xi| <= 2^(j+1)``, dilates exactly into shell
``j+1`` under ``xi -> 2 xi``, and the shells telescope to 1 on the resolved
band.  Only shells resolvable on the grid are kept; reports carry the band so
callers can assert that out-of-band spectral mass is negligible.

Norms follow the homogeneous convention: a field is *admissible* when its
mean vanishes (the zero mode is invisible to every shell) and its spectrum is
concentrated in the resolved band.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from bcns.spectral_core import (
    BoundaryMassWarning,
    FieldSeries,
    GridSpec,
    RealField,
    SpectralCoeffs,
    _forward_raw,
    _inverse_raw,
    coordinate_weight,
    forward_transform,
)

__all__ = [
    "smooth_cutoff",
    "shell_profile",
    "DyadicPartition",
    "build_partition",
    "block",
    "low_sum",
    "BesovParams",
    "BesovReport",
    "besov_norm",
    "besov_norm_spectral",
    "weighted_besov_norm",
    "block_lp_table",
    "time_composite_norms",
    "lq_aggregate",
]


def _bump(x: np.ndarray) -> np.ndarray:
    """exp(-1/x) continued by 0 for x <= 0; the standard mollifier factor."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_cutoff(r) -> np.ndarray:
    """C-infinity radial step: 1 on [0, 1], 0 on [2, inf), monotone between."""
    r = np.asarray(r, dtype=float)
    up = _bump(2.0 - r)
    down = _bump(r - 1.0)
    return up / (up + down)


def shell_profile(j: int, r) -> np.ndarray:
    """Radial profile of dyadic shell ``j``, supported on [2^(j-1), 2^(j+1)]."""
    r = np.asarray(r, dtype=float)
    return smooth_cutoff(r * 2.0**-j) - smooth_cutoff(r * 2.0 ** (1 - j))


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    """Shell multipliers evaluated on a grid's frequency lattice.

    ``j_min``/``j_max`` bound the resolved dyadic range; ``j0`` is the
    cut-off separating the low- and high-frequency partial norms (both
    include ``j0`` itself).
    """

    grid: GridSpec
    j_min: int
    j_max: int
    j0: int
    shells: dict[int, np.ndarray] = field(repr=False)

    @property
    def shell_indices(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def shell(self, j: int) -> np.ndarray:
        if j not in self.shells:
            raise ValueError(f"shell {j} outside resolved band [{self.j_min}, {self.j_max}]")
        return self.shells[j]

    @property
    def coverage(self) -> np.ndarray:
        """Pointwise sum of all resolved shells (1 on the resolved band)."""
        total = np.zeros(self.grid.shape)
        for arr in self.shells.values():
            total = total + arr
        return total

    def low_mask(self, j: int) -> np.ndarray:
        """Multiplier for the cumulative sum of shells up to and including j."""
        total = np.zeros(self.grid.shape)
        for jj in self.shell_indices:
            if jj <= j:
                total = total + self.shells[jj]
        return total

    def resolved_mode_mask(self) -> np.ndarray:
        """Modes with 2^j_min <= |xi| <= 2^j_max, where the shells sum to 1."""
        k = self.grid.freq_mag
        return (k >= 2.0**self.j_min) & (k <= 2.0**self.j_max)


def resolved_shell_range(grid: GridSpec) -> tuple[int, int]:
    """Widest dyadic range representable on ``grid``."""
    j_min = math.ceil(math.log2(grid.fundamental_frequency) - 1e-12)
    j_max = math.floor(math.log2(grid.nyquist_frequency) + 1e-12) - 1
    if j_max < j_min:
        raise ValueError(f"grid resolves no complete dyadic shell (j_min={j_min} > j_max={j_max})")
    return j_min, j_max


def build_partition(grid: GridSpec, j0: int = 0) -> DyadicPartition:
    """Evaluate the dyadic shells on ``grid`` with cut-off ``j0``.

    Raises if ``j0`` falls outside the resolved band.
    """
    j_min, j_max = resolved_shell_range(grid)
    if not j_min <= j0 <= j_max:
        raise ValueError(f"cut-off j0={j0} outside resolved band [{j_min}, {j_max}]")
    k = grid.freq_mag
    shells: dict[int, np.ndarray] = {}
    for j in range(j_min, j_max + 1):
        arr = shell_profile(j, k)
        arr.flags.writeable = False
        shells[j] = arr
    return DyadicPartition(grid=grid, j_min=j_min, j_max=j_max, j0=j0, shells=shells)


def block(f: RealField, j: int, part: DyadicPartition) -> RealField:
    """Frequency-localise ``f`` to dyadic shell ``j``."""
    carr = _forward_raw(f.grid, f.data)
    return RealField(f.grid, _inverse_raw(f.grid, carr * part.shell(j)))


def low_sum(f: RealField, j: int, part: DyadicPartition) -> RealField:
    """Cumulative sum of dyadic blocks up to and including ``j``."""
    if j < part.j_min:
        return RealField(f.grid, np.zeros_like(f.data))
    carr = _forward_raw(f.grid, f.data)
    return RealField(f.grid, _inverse_raw(f.grid, carr * part.low_mask(j)))


@dataclass(frozen=True)
class BesovParams:
    """Regularity exponent s, Lebesgue exponent p, summation exponent q."""

    s: float
    p: float
    q: float = 1.0

    def __post_init__(self) -> None:
        if self.p != math.inf and self.p < 1:
            raise ValueError(f"p must be >= 1 or inf, got {self.p}")
        if self.q != math.inf and self.q < 1:
            raise ValueError(f"q must be >= 1 or inf, got {self.q}")


def lq_aggregate(values: np.ndarray, q: float) -> float:
    """l^q sum of nonnegative block values (sup for q = inf)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    if q == math.inf:
        return float(values.max())
    return float((values**q).sum() ** (1.0 / q))


@dataclass(frozen=True)
class BesovReport:
    """Per-shell norm breakdown with the high/low split at ``j0``.

    ``per_block[j]`` holds ``2**(s*j) * ||block_j f||_p``; ``total`` is the
    l^q aggregate over the resolved band, ``low``/``high`` the aggregates
    over ``j <= j0`` / ``j >= j0``.  ``out_of_band`` is the relative L^2
    spectral mass the resolved shells do not see.
    """

    s: float
    p: float
    q: float
    j0: int
    band: tuple[int, int]
    per_block: dict[int, float]
    total: float
    low: float
    high: float
    out_of_band: float
    warnings: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "s": self.s,
            "p": None if self.p == math.inf else self.p,
            "q": None if self.q == math.inf else self.q,
            "j0": self.j0,
            "band": list(self.band),
            "blocks": [{"j": j, "value": v} for j, v in sorted(self.per_block.items())],
            "low": self.low,
            "high": self.high,
            "total": self.total,
            "out_of_band": self.out_of_band,
            "warnings": list(self.warnings),
        }


def _spectral_components(F: SpectralCoeffs) -> np.ndarray:
    return F.data.reshape(-1, *F.grid.shape)


def _shell_lp_norm(F: SpectralCoeffs, shell: np.ndarray, p: float) -> float:
    """L^p norm of one frequency-localised block (Parseval fast path at p=2)."""
    comps = _spectral_components(F)
    if p == 2:
        return float(math.sqrt(sum(float((np.abs(c * shell) ** 2).sum()) for c in comps)))
    grid = F.grid
    phys = np.stack([_inverse_raw(grid, c * shell) for c in comps])
    mag = np.sqrt((phys**2).sum(axis=0))
    if p == math.inf:
        return float(mag.max())
    return float((mag**p).sum() * grid.cell_volume) ** (1.0 / p)


def besov_norm_spectral(
    F: SpectralCoeffs,
    bp: BesovParams,
    part: DyadicPartition,
    extra_warnings: Sequence[str] = (),
) -> BesovReport:
    """Besov report computed from ready-made spectral coefficients."""
    raw = {j: _shell_lp_norm(F, part.shell(j), bp.p) for j in part.shell_indices}
    per_block = {j: 2.0 ** (bp.s * j) * v for j, v in raw.items()}
    js = np.array(sorted(per_block))
    vals = np.array([per_block[j] for j in js])
    total = lq_aggregate(vals, bp.q)
    low = lq_aggregate(vals[js <= part.j0], bp.q)
    high = lq_aggregate(vals[js >= part.j0], bp.q)
    total_mass = math.sqrt(float((np.abs(F.data) ** 2).sum()))
    if total_mass > 0:
        resid = (1.0 - part.coverage) * _spectral_components(F)
        out_of_band = math.sqrt(float((np.abs(resid) ** 2).sum())) / total_mass
    else:
        out_of_band = 0.0
    return BesovReport(
        s=bp.s,
        p=bp.p,
        q=bp.q,
        j0=part.j0,
        band=(part.j_min, part.j_max),
        per_block=per_block,
        total=total,
        low=low,
        high=high,
        out_of_band=out_of_band,
        warnings=tuple(extra_warnings),
    )


def besov_norm(f: RealField, bp: BesovParams, part: DyadicPartition) -> BesovReport:
    """Homogeneous Besov norm of ``f`` restricted to the resolved band."""
    return besov_norm_spectral(forward_transform(f), bp, part)


def weighted_besov_norm(
    f: RealField, axis: int, bp: BesovParams, part: DyadicPartition
) -> BesovReport:
    """Besov norm of the coordinate-weighted field ``x_axis * f``.

    A boundary-mass warning from the weighting is re-emitted and recorded in
    the report.
    """
    notes: list[str] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BoundaryMassWarning)
        weighted = coordinate_weight(f, axis)
    for w in caught:
        if issubclass(w.category, BoundaryMassWarning):
            notes.append(str(w.message))
            warnings.warn(w.message, BoundaryMassWarning, stacklevel=2)
    return besov_norm_spectral(forward_transform(weighted), bp, part, extra_warnings=notes)


def block_lp_table(
    fields: Sequence[RealField] | Sequence[SpectralCoeffs],
    part: DyadicPartition,
    p: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Unweighted block norms ``||block_j f(t_i)||_p`` as a (shell, time) table.

    Returns ``(js, table)`` with ``js`` the shell indices in increasing
    order.  Accepts sampled fields or their spectra.
    """
    js = np.array(list(part.shell_indices))
    table = np.zeros((js.size, len(fields)))
    for i, f in enumerate(fields):
        F = f if isinstance(f, SpectralCoeffs) else forward_transform(f)
        for row, j in enumerate(js):
            table[row, i] = _shell_lp_norm(F, part.shell(int(j)), p)
    return js, table


def table_tilde_linfty(
    js: np.ndarray,
    table: np.ndarray,
    s: float,
    q: float = 1.0,
    select: np.ndarray | None = None,
) -> float:
    """Per-shell time-sup composite norm from a raw block-norm table.

    ``select`` restricts to a boolean subset of shells (e.g. a high/low split).
    """
    weighted = 2.0 ** (s * js)[:, None] * table
    sups = weighted.max(axis=1)
    if select is not None:
        sups = sups[select]
    return lq_aggregate(sups, q)


def table_l1(
    js: np.ndarray,
    table: np.ndarray,
    times: np.ndarray,
    s: float,
    q: float = 1.0,
    select: np.ndarray | None = None,
) -> float:
    """Trapezoid time integral of the instantaneous norm from a block table."""
    weighted = 2.0 ** (s * js)[:, None] * table
    if select is not None:
        weighted = weighted[select]
    instant = np.array([lq_aggregate(weighted[:, i], q) for i in range(weighted.shape[1])])
    if instant.size < 2:
        return 0.0
    return float(np.trapezoid(instant, times))


def time_composite_norms(
    series: FieldSeries,
    bp: BesovParams,
    part: DyadicPartition,
    mode: str,
) -> float:
    """Time-composite Besov norms of a uniformly sampled series.

    ``mode="tilde_Linfty"``: the time-sup is taken per shell *before* the
    l^q aggregation, so two shells active at disjoint times both contribute
    in full.  ``mode="L1"``: trapezoid-rule integral of the instantaneous
    norm (zero for a single sample).
    """
    if len(series) > 1:
        series.uniform_dt()
    js, table = block_lp_table(series.fields, part, bp.p)
    weights = 2.0 ** (bp.s * js)
    if mode == "tilde_Linfty":
        return lq_aggregate(weights * table.max(axis=1), bp.q)
    if mode == "L1":
        if len(series) == 1:
            return 0.0
        instant = np.array(
            [lq_aggregate(weights * table[:, i], bp.q) for i in range(table.shape[1])]
        )
        return float(np.trapezoid(instant, series.times))
    raise ValueError(f"unknown mode {mode!r}; expected 'tilde_Linfty' or 'L1'")
