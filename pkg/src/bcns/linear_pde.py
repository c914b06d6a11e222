"""Solvers and inequality checkers for the three linear model problems.

* damped transport ``d_t a + v . grad a + damping * a = f`` (RK4 in time,
  spectral derivatives, two-thirds dealiasing of the advection product);
* the forced viscous flow ``d_t u - (mu lap + (lam+mu) grad div) u = g``
  (exact split semigroup with a second-order exponential integrator, exact
  for forcing affine in time);
* the coupled density / curl-free-velocity system, solved exactly per mode
  by the 2x2 matrix exponential.

The "checkers" evaluate both sides of the corresponding a priori
inequalities.  The constants in those inequalities are not constructive, so
what is tested is the stability of the measured left/right ratio across
resolutions and cut-offs, not a particular value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as _stats

from bcns.etd import PairPropagator
from bcns.littlewood_paley import (
    BesovParams,
    DyadicPartition,
    besov_norm,
    block_lp_table,
    lq_aggregate,
    table_l1,
    table_tilde_linfty,
    time_composite_norms,
)
from bcns.operators import _grad_hat, _q_part_hat, require_mean_zero, validate_viscosity
from bcns.spectral_core import (
    FieldSeries,
    GridSpec,
    RealField,
    _forward_raw,
    _inverse_raw,
)

__all__ = [
    "TransportProblem",
    "solve_transport",
    "check_transport_estimate",
    "solve_lame_forced",
    "check_lame_estimate",
    "CoupledLinearProblem",
    "solve_coupled_linear",
    "check_coupled_estimate",
    "pair_table",
    "EstimateCheck",
    "DecayFit",
    "measure_decay",
]

_BLOWUP_LIMIT = 1e12

VelocityLike = Callable[[float], RealField] | RealField | None
ForcingLike = Callable[[float], RealField] | RealField | None


def _as_callable(v: VelocityLike):
    if v is None:
        return None
    if isinstance(v, RealField):
        return lambda t: v
    return v


def _resolve_steps(horizon: float, dt: float) -> int:
    if not (horizon > 0 and dt > 0):
        raise ValueError("horizon and dt must be positive")
    n = round(horizon / dt)
    if n < 1 or abs(n * dt - horizon) > 1e-6 * horizon:
        raise ValueError(f"horizon {horizon} is not an integer multiple of dt {dt}")
    return n


def _guard_blowup(arr: np.ndarray, what: str) -> None:
    peak = float(np.abs(arr).max())
    if not np.isfinite(peak) or peak > _BLOWUP_LIMIT:
        raise RuntimeError(f"{what} blew up (peak {peak:.3e})")


@dataclass(frozen=True)
class TransportProblem:
    """Damped, forced advection problem on the torus.

    ``velocity`` and ``forcing`` may be static fields or callables of time;
    the advection step is guarded by the CFL condition
    ``max|v| * dt / h <= cfl_limit``.
    """

    a0: RealField
    horizon: float
    dt: float
    velocity: VelocityLike = None
    damping: float = 0.0
    forcing: ForcingLike = None
    cfl_limit: float = 0.5

    def __post_init__(self) -> None:
        if not self.a0.is_scalar:
            raise ValueError("transport solves a scalar equation")
        if self.damping < 0:
            raise ValueError("damping must be nonnegative")
        _resolve_steps(self.horizon, self.dt)


def solve_transport(tp: TransportProblem, sample_stride: int = 1) -> FieldSeries:
    """March the transport problem with RK4; returns every ``sample_stride``-th step."""
    grid = tp.a0.grid
    n_steps = _resolve_steps(tp.horizon, tp.dt)
    dt = tp.horizon / n_steps
    vel = _as_callable(tp.velocity)
    forc = _as_callable(tp.forcing)
    keep = grid.dealias_keep

    v_cache: dict[float, np.ndarray] = {}

    def v_at(t: float) -> np.ndarray | None:
        if vel is None:
            return None
        key = round(t / (dt / 2))
        if key not in v_cache:
            v_cache.clear()
            v_cache[key] = vel(t).data
        return v_cache[key]

    def rhs(t: float, ahat: np.ndarray) -> np.ndarray:
        out = -tp.damping * ahat
        vdata = v_at(t)
        if vdata is not None:
            grad_a = _inverse_raw(grid, _grad_hat(grid, ahat))
            adv = (vdata * grad_a).sum(axis=0)
            out = out - _forward_raw(grid, adv) * keep
        if forc is not None:
            out = out + _forward_raw(grid, forc(t).data)
        return out

    ahat = _forward_raw(grid, tp.a0.data)
    times = [0.0]
    fields = [tp.a0]
    h = grid.spacing
    for step in range(n_steps):
        t = step * dt
        vdata = v_at(t)
        if vdata is not None:
            vmax = float(np.abs(vdata).max())
            if vmax * dt / h > tp.cfl_limit:
                raise RuntimeError(
                    f"CFL violation at t={t:.4g}: max|v|*dt/h = {vmax * dt / h:.3f} "
                    f"> {tp.cfl_limit}"
                )
        k1 = rhs(t, ahat)
        k2 = rhs(t + dt / 2, ahat + 0.5 * dt * k1)
        k3 = rhs(t + dt / 2, ahat + 0.5 * dt * k2)
        k4 = rhs(t + dt, ahat + dt * k3)
        ahat = ahat + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        _guard_blowup(ahat, "transport solution")
        if (step + 1) % sample_stride == 0 or step + 1 == n_steps:
            times.append((step + 1) * dt)
            fields.append(RealField(grid, _inverse_raw(grid, ahat)))
    return FieldSeries(np.array(times), tuple(fields))


def _conjugate_exponent(p: float) -> float:
    if p == math.inf:
        return 1.0
    if p == 1.0:
        return math.inf
    return p / (p - 1.0)


def transport_regularity_range(d: int, p: float) -> tuple[float, float]:
    """Admissible (open-low, closed-high) regularity range for the transport bound."""
    dp = 0.0 if p == math.inf else d / p
    dpp = 0.0 if _conjugate_exponent(p) == math.inf else d / _conjugate_exponent(p)
    return (-min(dp, dpp), 1.0 + dp)


@dataclass(frozen=True)
class EstimateCheck:
    """Measured sides of an a priori inequality and their ratio."""

    lhs: float
    rhs: float
    ratio: float
    context: str
    extras: dict = dc_field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "context": self.context,
            "extras": dict(self.extras),
        }


def _make_check(lhs: float, rhs: float, context: str, **extras) -> EstimateCheck:
    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = 0.0 if lhs == 0 else math.inf
    return EstimateCheck(lhs=lhs, rhs=rhs, ratio=ratio, context=context, extras=extras)


def check_transport_estimate(
    tp: TransportProblem,
    solution: FieldSeries,
    bp: BesovParams,
    part: DyadicPartition,
    growth_constant: float = 0.0,
) -> EstimateCheck:
    """Compare the transport solution against its a priori bound.

    LHS: sup-in-time composite norm plus ``damping`` times the time-integral
    norm.  RHS: ``exp(C * V)`` times data plus integrated forcing, with
    ``V`` the integrated norm of the velocity gradient at regularity d/p and
    ``C = growth_constant`` (reported, not assumed).
    """
    d = tp.a0.grid.dim
    lo, hi = transport_regularity_range(d, bp.p)
    if not (lo < bp.s <= hi):
        raise ValueError(f"regularity s={bp.s} outside admissible range ({lo}, {hi}] for p={bp.p}")
    lhs = time_composite_norms(solution, bp, part, "tilde_Linfty")
    if tp.damping > 0:
        lhs += tp.damping * time_composite_norms(solution, bp, part, "L1")

    vel = _as_callable(tp.velocity)
    vnorm = 0.0
    if vel is not None:
        from bcns.operators import jacobian

        grads = tuple(jacobian(vel(t)) for t in solution.times)
        vnorm = time_composite_norms(
            FieldSeries(solution.times, grads),
            BesovParams(s=(0.0 if bp.p == math.inf else d / bp.p), p=bp.p, q=1.0),
            part,
            "L1",
        )
    data_norm = besov_norm(tp.a0, bp, part).total
    force_norm = 0.0
    forc = _as_callable(tp.forcing)
    if forc is not None:
        fs = FieldSeries(solution.times, tuple(forc(t) for t in solution.times))
        force_norm = time_composite_norms(fs, bp, part, "L1")
    rhs = math.exp(growth_constant * vnorm) * (data_norm + force_norm)
    return _make_check(
        lhs, rhs, "transport", V=vnorm, C=growth_constant, damping=tp.damping, s=bp.s, p=bp.p
    )


# ---------------------------------------------------------------------------
# forced viscous (Lame-type) flow
# ---------------------------------------------------------------------------


class _SplitViscousStepper:
    """One-step exponential integrator for the viscous vector flow."""

    def __init__(self, grid: GridSpec, mu: float, lam: float, dt: float):
        from bcns.etd import phi1, phi2

        validate_viscosity(mu, lam)
        nu = lam + 2 * mu
        k2 = grid.freq_sq
        self.grid = grid
        self.coef = {}
        for name, kappa in (("p", mu), ("q", nu)):
            z = -kappa * k2 * dt
            self.coef[name] = (np.exp(z), phi1(z).real, phi2(z).real)
        self.dt = dt

    def _split_apply(self, uhat: np.ndarray, idx: int) -> np.ndarray:
        q = _q_part_hat(self.grid, uhat)
        p = uhat - q
        return self.coef["p"][idx] * p + self.coef["q"][idx] * q

    def step(self, uhat: np.ndarray, g_now: np.ndarray | None, g_next: np.ndarray | None) -> np.ndarray:
        out = self._split_apply(uhat, 0)
        if g_now is not None:
            out = out + self.dt * self._split_apply(g_now, 1)
            out = out + self.dt * self._split_apply(g_next - g_now, 2)
        return out


def solve_lame_forced(
    u0: RealField,
    forcing: ForcingLike,
    mu: float,
    lam: float,
    horizon: float,
    dt: float,
    sample_stride: int = 1,
) -> FieldSeries:
    """March the forced viscous flow; exact for time-affine forcing.

    The linear flow is applied exactly per mode on the divergence-free and
    curl-free parts; the Duhamel integral uses the second-order phi-function
    quadrature with the forcing evaluated at both step endpoints.
    """
    if not u0.is_vector:
        raise ValueError("expected a vector initial field")
    grid = u0.grid
    n_steps = _resolve_steps(horizon, dt)
    dt = horizon / n_steps
    stepper = _SplitViscousStepper(grid, mu, lam, dt)
    forc = _as_callable(forcing)
    uhat = _forward_raw(grid, u0.data)
    g_next = _forward_raw(grid, forc(0.0).data) if forc is not None else None
    times = [0.0]
    fields = [u0]
    for step in range(n_steps):
        g_now = g_next
        if forc is not None:
            g_next = _forward_raw(grid, forc((step + 1) * dt).data)
        uhat = stepper.step(uhat, g_now, g_next)
        _guard_blowup(uhat, "viscous flow solution")
        if (step + 1) % sample_stride == 0 or step + 1 == n_steps:
            times.append((step + 1) * dt)
            fields.append(RealField(grid, _inverse_raw(grid, uhat)))
    return FieldSeries(np.array(times), tuple(fields))


def check_lame_estimate(
    u0: RealField,
    solution: FieldSeries,
    forcing_series: FieldSeries | None,
    mu: float,
    lam: float,
    bp: BesovParams,
    part: DyadicPartition,
) -> EstimateCheck:
    """Smoothing estimate check: sup norm at s plus dissipation-weighted
    integral at s+2 against data plus integrated forcing."""
    nu = lam + 2 * mu
    lhs = time_composite_norms(solution, bp, part, "tilde_Linfty")
    lhs += min(mu, nu) * time_composite_norms(
        solution, BesovParams(bp.s + 2, bp.p, bp.q), part, "L1"
    )
    rhs = besov_norm(u0, bp, part).total
    if forcing_series is not None:
        rhs += time_composite_norms(forcing_series, bp, part, "L1")
    return _make_check(lhs, rhs, "viscous-smoothing", s=bp.s, p=bp.p, mu=mu, lam=lam)


# ---------------------------------------------------------------------------
# coupled low-frequency system
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoupledLinearProblem:
    """Density / scalarised curl-free velocity pair with unit-free couplings."""

    a0: RealField
    v0: RealField
    alpha: float
    nu: float

    def __post_init__(self) -> None:
        if not (self.a0.is_scalar and self.v0.is_scalar):
            raise ValueError("coupled problem wants scalar fields")
        if self.a0.grid != self.v0.grid:
            raise ValueError("fields must share a grid")
        if not (self.alpha > 0 and self.nu > 0):
            raise ValueError("alpha and nu must be positive")
        require_mean_zero(self.a0, "coupled system")
        require_mean_zero(self.v0, "coupled system")


def solve_coupled_linear(
    clp: CoupledLinearProblem, times: Sequence[float]
) -> tuple[FieldSeries, FieldSeries]:
    """Evaluate the exact per-mode flow at the requested times (from t=0)."""
    grid = clp.a0.grid
    times = np.asarray(sorted(float(t) for t in times))
    if times.size == 0 or times[0] < 0:
        raise ValueError("need nonnegative sample times")
    prop = PairPropagator(grid.freq_mag, clp.alpha, clp.nu)
    ahat0 = _forward_raw(grid, clp.a0.data)
    vhat0 = _forward_raw(grid, clp.v0.data)
    a_fields = []
    v_fields = []
    for t in times:
        ahat, vhat = prop.apply("exp", float(t), ahat0, vhat0)
        a_fields.append(RealField(grid, _inverse_raw(grid, ahat)))
        v_fields.append(RealField(grid, _inverse_raw(grid, vhat)))
    return FieldSeries(times, tuple(a_fields)), FieldSeries(times, tuple(v_fields))


def pair_table(
    series_list: Sequence[FieldSeries], part: DyadicPartition
) -> tuple[np.ndarray, np.ndarray]:
    """Block-norm table of a tuple of fields treated as one stacked L^2 pair."""
    tables = []
    for series in series_list:
        js, tab = block_lp_table(series.fields, part, 2.0)
        tables.append(tab)
    return js, np.sqrt(sum(t**2 for t in tables))


def check_coupled_estimate(
    clp: CoupledLinearProblem,
    a_series: FieldSeries,
    v_series: FieldSeries,
    s: float,
    part: DyadicPartition,
) -> EstimateCheck:
    """Low-frequency smoothing check for the coupled pair at regularity ``s``:
    sup norm at s plus integral norm at s+2, against the data norm (the
    forcing-free case)."""
    js, table = pair_table([a_series, v_series], part)
    low = js <= part.j0
    lhs = table_tilde_linfty(js, table, s, 1.0, select=low)
    lhs += table_l1(js, table, a_series.times, s + 2.0, 1.0, select=low)
    rhs = lq_aggregate((2.0 ** (s * js) * table[:, 0])[low], 1.0)
    return _make_check(lhs, rhs, "coupled-low-frequency", s=s, j0=part.j0)


# ---------------------------------------------------------------------------
# decay measurement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    """Least-squares power-law fit of a norm series against ``<t>``."""

    exponent: float
    intercept: float
    r2: float
    stderr: float
    ci95: tuple[float, float]
    n_points: int
    window: tuple[float, float]

    def to_json_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "r2": self.r2,
            "stderr": self.stderr,
            "ci95": list(self.ci95),
            "n_points": self.n_points,
            "window": list(self.window),
        }


def measure_decay(
    times: np.ndarray, values: np.ndarray, window: tuple[float, float]
) -> DecayFit:
    """Fit ``log(value)`` against ``log <t>`` with ``<t> = sqrt(1 + t^2)``.

    Values inside the window must be strictly positive.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t1, t2 = window
    mask = (times >= t1) & (times <= t2)
    if mask.sum() < 3:
        raise ValueError("need at least three samples inside the fit window")
    vals = values[mask]
    if (vals <= 0).any():
        raise ValueError("decay fit requires positive values on the window")
    x = 0.5 * np.log1p(times[mask] ** 2)
    y = np.log(vals)
    fit = _stats.linregress(x, y)
    return DecayFit(
        exponent=float(fit.slope),
        intercept=float(fit.intercept),
        r2=float(fit.rvalue**2),
        stderr=float(fit.stderr),
        ci95=(float(fit.slope - 1.96 * fit.stderr), float(fit.slope + 1.96 * fit.stderr)),
        n_points=int(mask.sum()),
        window=(float(t1), float(t2)),
    )
