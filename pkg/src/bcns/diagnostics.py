"""Streaming norm tables and the a priori functionals of global runs.

A :class:`NormRecorder` attached to the stepper stores, per sample time, the
raw per-shell block norms of the state (and of its gradient and weighted
companions).  Everything downstream is assembled from those tables:

* the *subcritical* functional: low-frequency pair norms at regularities
  d/2-1 (sup) and d/2+1 (integral) plus high-frequency norms of the density
  at d/p+1 and the velocity at d/p and d/p+2;
* the *critical* functional: the same shape one derivative lower;
* the *weighted* functional: the subcritical one at p=2 plus the
  coordinate-weighted pair norms one regularity higher;
* the *decay composite*: a sup over a lattice of regularities of
  time-weighted low-frequency norms, plus time-weighted high-frequency
  pieces, with weights ``<t>**((s0+s)/2)`` and ``s0 = d(2/p - 1/2)``.

Sup-in-time quantities take the time-sup per shell before summing over
shells; integrals use the trapezoid rule on the sample grid.  All series are
cumulative in time, hence nondecreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from bcns.linear_pde import DecayFit, measure_decay
from bcns.littlewood_paley import DyadicPartition
from bcns.operators import _grad_hat
from bcns.spectral_core import _inverse_raw

__all__ = [
    "NormHistory",
    "NormRecorder",
    "DiagnosticsRecord",
    "compute_diagnostics",
    "low_pair_series",
]


@dataclass
class NormHistory:
    """Raw per-shell block-norm tables sampled along a trajectory."""

    times: np.ndarray
    js: np.ndarray
    j0: int
    d: int
    p: float
    axes: tuple[int, ...]
    tables: dict[str, np.ndarray]

    def low(self) -> np.ndarray:
        return self.js <= self.j0

    def high(self) -> np.ndarray:
        return self.js >= self.j0


class NormRecorder:
    """Observer for :class:`~bcns.cns_iteration.FlowStepper` runs.

    Records L^2 shell norms of the state pair, its weighted companions and
    the gradients needed by the decay composite; when ``p != 2`` is
    requested, additionally records physical-space L^p shell norms for the
    high-frequency functionals.
    """

    def __init__(self, part: DyadicPartition, axes: Sequence[int] = (), p: float = 2.0):
        self.part = part
        self.grid = part.grid
        self.axes = tuple(axes)
        self.p = p
        self.times: list[float] = []
        self._cols: dict[str, list[np.ndarray]] = {}
        self._shells = [part.shell(j) for j in part.shell_indices]
        kmag = self.grid.freq_mag
        self._kshells = [kmag * s for s in self._shells]

    def _l2_column(self, comps: np.ndarray, shells) -> np.ndarray:
        out = np.empty(len(shells))
        for row, shell in enumerate(shells):
            out[row] = math.sqrt(sum(float((np.abs(c * shell) ** 2).sum()) for c in comps))
        return out

    def _lp_column(self, comps: np.ndarray, shells) -> np.ndarray:
        grid = self.grid
        out = np.empty(len(shells))
        for row, shell in enumerate(shells):
            phys = np.stack([_inverse_raw(grid, c * shell) for c in comps])
            mag = np.sqrt((phys**2).sum(axis=0))
            if self.p == math.inf:
                out[row] = float(mag.max())
            else:
                out[row] = float((mag**self.p).sum() * grid.cell_volume) ** (1.0 / self.p)
        return out

    def _push(self, name: str, col: np.ndarray) -> None:
        self._cols.setdefault(name, []).append(col)

    def observe(self, t: float, hat: dict) -> None:
        grid = self.grid
        self.times.append(float(t))
        a = hat["a"][None]
        u = hat["u"]
        ga = _grad_hat(grid, hat["a"])
        gu = np.concatenate([_grad_hat(grid, u[i]) for i in range(grid.dim)])
        self._push("a", self._l2_column(a, self._shells))
        self._push("u", self._l2_column(u, self._shells))
        self._push("grad_a", self._l2_column(ga, self._shells))
        self._push("grad_u", self._l2_column(gu, self._shells))
        for axis in self.axes:
            A = hat[("A", axis)][None]
            U = hat[("U", axis)]
            self._push(f"A{axis}", self._l2_column(A, self._shells))
            self._push(f"U{axis}", self._l2_column(U, self._shells))
        if self.p != 2.0:
            self._push("a@p", self._lp_column(a, self._shells))
            self._push("u@p", self._lp_column(u, self._shells))
            self._push("grad_a@p", self._lp_column(ga, self._shells))
            self._push("grad_u@p", self._lp_column(gu, self._shells))

    def history(self) -> NormHistory:
        if not self.times:
            raise ValueError("no samples recorded")
        tables = {k: np.stack(v, axis=1) for k, v in self._cols.items()}
        tables["pair"] = np.sqrt(tables["a"] ** 2 + tables["u"] ** 2)
        for axis in self.axes:
            tables[f"pair{axis}"] = np.sqrt(tables[f"A{axis}"] ** 2 + tables[f"U{axis}"] ** 2)
        return NormHistory(
            times=np.array(self.times),
            js=np.array(list(self.part.shell_indices)),
            j0=self.part.j0,
            d=self.grid.dim,
            p=self.p,
            axes=self.axes,
            tables=tables,
        )


def _prefix_sup(js, table, s, select) -> np.ndarray:
    """Cumulative per-shell-sup composite norm: sum_j 2^{sj} max_{t'<=t}."""
    weighted = 2.0 ** (s * js)[:, None] * table
    runmax = np.maximum.accumulate(weighted, axis=1)
    return runmax[select].sum(axis=0)

def _prefix_l1(js, table, times, s, select) -> np.ndarray:
    weighted = 2.0 ** (s * js)[:, None] * table
    instant = weighted[select].sum(axis=0)
    if len(times) < 2:
        return np.zeros_like(instant)
    return cumulative_trapezoid(instant, times, initial=0.0)


def low_pair_series(hist: NormHistory, s: float, table: str = "pair") -> np.ndarray:
    """Instantaneous low-frequency norm series at regularity ``s``."""
    js, tab = hist.js, hist.tables[table]
    sel = hist.low()
    return (2.0 ** (s * js)[:, None] * tab)[sel].sum(axis=0)


@dataclass
class DiagnosticsRecord:
    """Assembled a priori functionals along a trajectory.

    ``subcrit_*`` is the quantity bounding global existence at mixed
    regularity, ``critical_*`` its one-derivative-lower variant,
    ``weighted_*`` the version including coordinate-weighted pairs, and
    ``decay_sup`` the time-weighted sup composite whose boundedness encodes
    the low-frequency decay rate ``<t>**(-d/p)``.
    """

    times: np.ndarray
    p: float
    eps: float
    s0: float
    subcrit_components: dict[str, np.ndarray]
    subcrit_total: np.ndarray
    subcrit_initial: float
    critical_total: np.ndarray
    weighted_total: np.ndarray | None
    weighted_initial: float | None
    decay_sup: np.ndarray
    decay_fit: DecayFit | None

    def to_json_dict(self) -> dict:
        return {
            "p": self.p,
            "eps": self.eps,
            "s0": self.s0,
            "times": self.times.tolist(),
            "subcrit_components": {k: v.tolist() for k, v in self.subcrit_components.items()},
            "subcrit_total": self.subcrit_total.tolist(),
            "subcrit_initial": self.subcrit_initial,
            "critical_total": self.critical_total.tolist(),
            "weighted_total": None if self.weighted_total is None else self.weighted_total.tolist(),
            "weighted_initial": self.weighted_initial,
            "decay_sup": self.decay_sup.tolist(),
            "decay_fit": None if self.decay_fit is None else self.decay_fit.to_json_dict(),
        }


def _initial_norm(js, col, s, select) -> float:
    return float((2.0 ** (s * js) * col)[select].sum())


def compute_diagnostics(
    hist: NormHistory,
    eps: float = 0.25,
    fit_window: tuple[float, float] | None = None,
) -> DiagnosticsRecord:
    """Assemble the functionals from a recorded history.

    The Lebesgue exponent of the high-frequency pieces is ``hist.p``; the
    low-frequency pieces are always L^2-based.
    """
    js, times, d, p = hist.js, hist.times, hist.d, hist.p
    low, high = hist.low(), hist.high()
    t_at = lambda name: hist.tables[name]
    hi_suffix = "@p" if p != 2.0 else ""
    s0 = d * (2.0 / p - 0.5)

    def functional(sa_sup, sa_int, su_sup, su_int):
        return {
            "low_pair_sup": _prefix_sup(js, t_at("pair"), d / 2 - 1, low),
            "low_pair_int": _prefix_l1(js, t_at("pair"), times, d / 2 + 1, low),
            "high_a_sup": _prefix_sup(js, t_at("a" + hi_suffix), sa_sup, high),
            "high_a_int": _prefix_l1(js, t_at("a" + hi_suffix), times, sa_int, high),
            "high_u_sup": _prefix_sup(js, t_at("u" + hi_suffix), su_sup, high),
            "high_u_int": _prefix_l1(js, t_at("u" + hi_suffix), times, su_int, high),
        }

    sub_comps = functional(d / p + 1, d / p + 1, d / p, d / p + 2)
    sub_total = sum(sub_comps.values())
    crit_comps = functional(d / p, d / p, d / p, d / p + 1)
    crit_total = sum(crit_comps.values())

    col0 = {k: v[:, 0] for k, v in hist.tables.items()}
    sub_initial = (
        _initial_norm(js, col0["pair"], d / 2 - 1, low)
        + _initial_norm(js, col0["a" + hi_suffix], d / p + 1, high)
        + _initial_norm(js, col0["u" + hi_suffix], d / p, high)
    )

    weighted_total = None
    weighted_initial = None
    if hist.axes:
        w_total = (
            _prefix_sup(js, t_at("pair"), d / 2 - 1, low)
            + _prefix_l1(js, t_at("pair"), times, d / 2 + 1, low)
            + _prefix_sup(js, t_at("a"), d / 2 + 1, high)
            + _prefix_l1(js, t_at("a"), times, d / 2 + 1, high)
            + _prefix_sup(js, t_at("u"), d / 2, high)
            + _prefix_l1(js, t_at("u"), times, d / 2 + 2, high)
        )
        weighted_initial = (
            _initial_norm(js, col0["pair"], d / 2 - 1, low)
            + _initial_norm(js, col0["a"], d / 2 + 1, high)
            + _initial_norm(js, col0["u"], d / 2, high)
            + float((2.0 ** (-d / 2 * js) * col0["pair"]).max())
        )
        for axis in hist.axes:
            w_total = (
                w_total
                + _prefix_sup(js, t_at(f"pair{axis}"), d / 2, low)
                + _prefix_l1(js, t_at(f"pair{axis}"), times, d / 2 + 2, low)
                + _prefix_sup(js, t_at(f"U{axis}"), d / 2, high)
                + _prefix_l1(js, t_at(f"U{axis}"), times, d / 2 + 2, high)
                + _prefix_sup(js, t_at(f"A{axis}"), d / 2 + 1, high)
                + _prefix_l1(js, t_at(f"A{axis}"), times, d / 2 + 1, high)
            )
            weighted_initial += (
                _initial_norm(js, col0[f"pair{axis}"], d / 2, low)
                + _initial_norm(js, col0[f"A{axis}"], d / 2 + 1, high)
                + _initial_norm(js, col0[f"U{axis}"], d / 2, high)
            )
        weighted_total = w_total

    # time-weighted decay composite
    bracket = np.sqrt(1.0 + times**2)
    s_lattice = np.arange(eps - s0, d / 2 + 1 + 1e-9, 0.25)
    low_parts = []
    for s in s_lattice:
        series = (2.0 ** (s * js)[:, None] * t_at("pair"))[low].sum(axis=0)
        low_parts.append(np.maximum.accumulate(bracket ** ((s0 + s) / 2) * series))
    d_low = np.max(np.stack(low_parts), axis=0)

    ga_u = np.sqrt(t_at("grad_a" + hi_suffix) ** 2 + t_at("u" + hi_suffix) ** 2)
    w_hi = bracket ** (d / p + 0.5 - eps)
    d_hi1 = (
        2.0 ** ((d / p - 1) * js)[:, None] * np.maximum.accumulate(ga_u * w_hi[None, :], axis=1)
    )[high].sum(axis=0)
    d_hi2 = (
        2.0 ** ((d / p) * js)[:, None]
        * np.maximum.accumulate(t_at("grad_u" + hi_suffix) * times[None, :], axis=1)
    )[high].sum(axis=0)
    decay_sup = d_low + d_hi1 + d_hi2

    fit = None
    if fit_window is not None:
        series = low_pair_series(hist, d / 2)
        fit = measure_decay(times, series, fit_window)

    return DiagnosticsRecord(
        times=times,
        p=p,
        eps=eps,
        s0=s0,
        subcrit_components=sub_comps,
        subcrit_total=sub_total,
        subcrit_initial=sub_initial,
        critical_total=crit_total,
        weighted_total=weighted_total,
        weighted_initial=weighted_initial,
        decay_sup=decay_sup,
        decay_fit=fit,
    )
